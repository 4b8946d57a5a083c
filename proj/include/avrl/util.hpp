#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace avrl {

// Invalid configuration value or schema.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view bytes);

// Deterministic stream seed from a base seed and a path of indices.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace avrl
