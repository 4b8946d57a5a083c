#pragma once

// Structured rollout template:
//
//   <time>S-E</time><caption>...</caption> ... <thinking>...</thinking><answer>...</answer>
//
// One or more time/caption pairs, then exactly one thinking block and one
// answer block. Whitespace between blocks is ignored; text inside a block is
// kept verbatim. Time bodies accept decimal seconds ("2.5-7") or MM:SS
// ("01:05-01:10") and serialize as two-decimal seconds ("2.50-7.00").

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "avrl/interval.hpp"

namespace avrl {

struct TimeCaption {
  TimeSpan span;
  std::string caption;

  friend bool operator==(const TimeCaption&, const TimeCaption&) = default;
};

struct StructuredTrace {
  std::vector<TimeCaption> pairs;
  std::string thinking;
  std::string final_answer;

  SegmentSet spans() const;

  friend bool operator==(const StructuredTrace&, const StructuredTrace&) = default;
};

struct FormatError {
  std::string reason;
};

using ParseResult = std::variant<StructuredTrace, FormatError>;

// Total: never throws on malformed input.
ParseResult parse_trace(std::string_view text);

// Parses a time body such as "2.00-5.00" or "00:02-00:05".
std::variant<TimeSpan, FormatError> parse_time_body(std::string_view body);

// Canonical form; parse_trace(serialize_trace(t)) == t for valid traces whose
// span endpoints are multiples of 0.01 s.
std::string serialize_trace(const StructuredTrace& trace);

std::string format_seconds(double seconds);

// A trace is representable when it has at least one pair, every span is valid
// and no text field contains a template tag.
bool representable(const StructuredTrace& trace);

// 1.0 iff the text parses, else 0.0.
double format_reward(std::string_view text);

}  // namespace avrl
