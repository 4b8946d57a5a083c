#include "avrl/trace.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>

namespace avrl {

namespace {

constexpr std::array<std::string_view, 8> kTags = {
    "<time>", "</time>", "<caption>", "</caption>",
    "<thinking>", "</thinking>", "<answer>", "</answer>"};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool contains_tag(std::string_view s) {
  for (auto tag : kTags) {
    if (s.find(tag) != std::string_view::npos) return true;
  }
  return false;
}

// Cursor over the raw text; every block is <name>body</name>.
class BlockReader {
 public:
  explicit BlockReader(std::string_view text) : text_(text) {}

  void skip_space() {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
  }
  bool at_end() {
    skip_space();
    return pos_ >= text_.size();
  }
  bool next_is(std::string_view open) {
    skip_space();
    return text_.substr(pos_, open.size()) == open;
  }
  // Reads the block body; on failure leaves an error message.
  std::optional<std::string_view> read(std::string_view name, std::string& error) {
    const std::string open = "<" + std::string(name) + ">";
    const std::string close = "</" + std::string(name) + ">";
    skip_space();
    if (text_.substr(pos_, open.size()) != open) {
      error = "expected " + open;
      return std::nullopt;
    }
    pos_ += open.size();
    const std::size_t stop = text_.find(close, pos_);
    if (stop == std::string_view::npos) {
      error = "missing " + close;
      return std::nullopt;
    }
    std::string_view body = text_.substr(pos_, stop - pos_);
    if (contains_tag(body)) {
      error = "nested or misplaced tag inside " + open;
      return std::nullopt;
    }
    pos_ = stop + close.size();
    return body;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

// Decimal seconds or MM:SS(.frac).
std::optional<double> parse_time_point(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  auto parse_decimal = [](std::string_view d) -> std::optional<double> {
    if (d.empty()) return std::nullopt;
    bool seen_dot = false;
    bool seen_digit = false;
    for (char c : d) {
      if (c == '.') {
        if (seen_dot) return std::nullopt;
        seen_dot = true;
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        seen_digit = true;
      } else {
        return std::nullopt;
      }
    }
    if (!seen_digit) return std::nullopt;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(d.data(), d.data() + d.size(), value);
    if (ec != std::errc() || ptr != d.data() + d.size()) return std::nullopt;
    return value;
  };
  const std::size_t colon = s.find(':');
  if (colon == std::string_view::npos) return parse_decimal(s);
  std::string_view minutes = s.substr(0, colon);
  std::string_view seconds = s.substr(colon + 1);
  if (minutes.empty() || minutes.find('.') != std::string_view::npos) return std::nullopt;
  auto m = parse_decimal(minutes);
  auto sec = parse_decimal(seconds);
  if (!m || !sec || *sec >= 60.0) return std::nullopt;
  return *m * 60.0 + *sec;
}

}  // namespace

SegmentSet StructuredTrace::spans() const {
  std::vector<TimeSpan> spans;
  spans.reserve(pairs.size());
  for (const auto& p : pairs) spans.push_back(p.span);
  return SegmentSet(std::move(spans));
}

std::variant<TimeSpan, FormatError> parse_time_body(std::string_view body) {
  body = trim(body);
  // Split on the first '-' (no negative times exist).
  const std::size_t dash = body.find('-');
  if (dash == std::string_view::npos) return FormatError{"span missing '-' separator"};
  auto start = parse_time_point(body.substr(0, dash));
  auto end = parse_time_point(body.substr(dash + 1));
  if (!start || !end) return FormatError{"unparseable span '" + std::string(body) + "'"};
  if (!std::isfinite(*start) || !std::isfinite(*end)) return FormatError{"non-finite span"};
  if (*start >= *end) return FormatError{"span start >= end"};
  return TimeSpan{*start, *end};
}

ParseResult parse_trace(std::string_view text) {
  BlockReader reader(text);
  StructuredTrace trace;
  std::string error;
  while (reader.next_is("<time>")) {
    auto time_body = reader.read("time", error);
    if (!time_body) return FormatError{error};
    auto span = parse_time_body(*time_body);
    if (auto* e = std::get_if<FormatError>(&span)) return *e;
    auto caption = reader.read("caption", error);
    if (!caption) return FormatError{error};
    trace.pairs.push_back({std::get<TimeSpan>(span), std::string(*caption)});
  }
  if (trace.pairs.empty()) {
    return FormatError{reader.next_is("<thinking>") || reader.at_end() ? "zero pairs"
                                                                       : "expected <time>"};
  }
  auto thinking = reader.read("thinking", error);
  if (!thinking) return FormatError{error};
  auto answer = reader.read("answer", error);
  if (!answer) return FormatError{error};
  if (!reader.at_end()) return FormatError{"trailing text after </answer>"};
  trace.thinking = std::string(*thinking);
  trace.final_answer = std::string(*answer);
  return trace;
}

std::string format_seconds(double seconds) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", seconds);
  return buf;
}

std::string serialize_trace(const StructuredTrace& trace) {
  std::string out;
  for (const auto& p : trace.pairs) {
    out += "<time>";
    out += format_seconds(p.span.start);
    out += '-';
    out += format_seconds(p.span.end);
    out += "</time><caption>";
    out += p.caption;
    out += "</caption>";
  }
  out += "<thinking>";
  out += trace.thinking;
  out += "</thinking><answer>";
  out += trace.final_answer;
  out += "</answer>";
  return out;
}

bool representable(const StructuredTrace& trace) {
  if (trace.pairs.empty()) return false;
  for (const auto& p : trace.pairs) {
    if (!p.span.valid() || contains_tag(p.caption)) return false;
  }
  return !contains_tag(trace.thinking) && !contains_tag(trace.final_answer);
}

double format_reward(std::string_view text) {
  return std::holds_alternative<StructuredTrace>(parse_trace(text)) ? 1.0 : 0.0;
}

}  // namespace avrl
