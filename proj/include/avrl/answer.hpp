#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace avrl {

// "b)", "(B)", " B. " -> 'B'. When options are given, an answer that equals
// an option's text (case-insensitive) maps to that option's letter.
std::optional<char> normalize_choice(std::string_view answer,
                                     const std::vector<std::string>& options = {});

// 1.0 on a normalized letter match, else 0.0.
double multiple_choice_score(std::string_view prediction, std::string_view reference,
                             const std::vector<std::string>& options = {});

// Lowercased word tokens.
std::vector<std::string> word_tokens(std::string_view text);

// Token-set F1 between prediction and reference.
double token_f1(std::string_view prediction, std::string_view reference);

inline char option_letter(std::size_t index) { return static_cast<char>('A' + index); }

}  // namespace avrl
