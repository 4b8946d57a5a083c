#include "avrl/answer.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace avrl {

namespace {

std::string lower_trimmed(std::string_view s) {
  std::string out;
  for (char c : s) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  out.erase(out.begin(), std::find_if(out.begin(), out.end(), not_space));
  out.erase(std::find_if(out.rbegin(), out.rend(), not_space).base(), out.end());
  return out;
}

}  // namespace

std::optional<char> normalize_choice(std::string_view answer,
                                     const std::vector<std::string>& options) {
  std::string s = lower_trimmed(answer);
  if (!options.empty()) {
    for (std::size_t i = 0; i < options.size(); ++i) {
      if (!s.empty() && s == lower_trimmed(options[i])) return option_letter(i);
    }
  }
  // Strip wrapping punctuation: "(b)", "b)", "b.", "b:".
  while (!s.empty() && (s.front() == '(' || s.front() == '[')) s.erase(s.begin());
  while (!s.empty() && (s.back() == ')' || s.back() == ']' || s.back() == '.' || s.back() == ':')) {
    s.pop_back();
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  if (s.size() != 1 || !std::isalpha(static_cast<unsigned char>(s[0]))) return std::nullopt;
  const char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  if (!options.empty() && static_cast<std::size_t>(letter - 'A') >= options.size()) {
    return std::nullopt;
  }
  return letter;
}

double multiple_choice_score(std::string_view prediction, std::string_view reference,
                             const std::vector<std::string>& options) {
  auto p = normalize_choice(prediction, options);
  auto r = normalize_choice(reference, options);
  return p && r && *p == *r ? 1.0 : 0.0;
}

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

double token_f1(std::string_view prediction, std::string_view reference) {
  auto p = word_tokens(prediction);
  auto r = word_tokens(reference);
  std::set<std::string> ps(p.begin(), p.end());
  std::set<std::string> rs(r.begin(), r.end());
  if (ps.empty() && rs.empty()) return 1.0;
  if (ps.empty() || rs.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& t : ps) common += rs.count(t);
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(ps.size());
  const double recall = static_cast<double>(common) / static_cast<double>(rs.size());
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace avrl
