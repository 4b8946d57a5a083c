#include "avrl/interval.hpp"

#include <sstream>

namespace avrl {

namespace {

bool span_less(const TimeSpan& a, const TimeSpan& b) {
  return a.start < b.start || (a.start == b.start && a.end < b.end);
}

std::string describe(const TimeSpan& s) {
  std::ostringstream os;
  os << "[" << s.start << ", " << s.end << ")";
  return os.str();
}

}  // namespace

double TimeSpan::overlap_length(const TimeSpan& other) const {
  return std::max(0.0, std::min(end, other.end) - std::max(start, other.start));
}

TimeSpan make_span(double start, double end) {
  TimeSpan s{start, end};
  if (!s.valid()) throw IntervalError("invalid span " + describe(s));
  return s;
}

SegmentSet::SegmentSet(std::initializer_list<TimeSpan> spans)
    : SegmentSet(std::vector<TimeSpan>(spans)) {}

SegmentSet::SegmentSet(std::vector<TimeSpan> spans) : spans_(std::move(spans)) {
  for (const auto& s : spans_) {
    if (!s.valid()) throw IntervalError("invalid span " + describe(s));
  }
  std::sort(spans_.begin(), spans_.end(), span_less);
}

void SegmentSet::insert(const TimeSpan& span) {
  if (!span.valid()) throw IntervalError("invalid span " + describe(span));
  spans_.insert(std::upper_bound(spans_.begin(), spans_.end(), span, span_less), span);
}

double SegmentSet::total_length() const {
  double total = 0.0;
  for (const auto& s : spans_) total += s.length();
  return total;
}

bool pairwise_disjoint(const SegmentSet& s) {
  // Sorted by start: an overlap exists iff some span starts before the
  // furthest end seen so far.
  double furthest_end = -1.0;
  for (const auto& span : s) {
    if (furthest_end - span.start > kTimeTolerance) return false;
    furthest_end = std::max(furthest_end, span.end);
  }
  return true;
}

SegmentSet merge_overlaps(const SegmentSet& s) {
  std::vector<TimeSpan> merged;
  for (const auto& span : s) {
    if (!merged.empty() && span.start <= merged.back().end + kTimeTolerance) {
      merged.back().end = std::max(merged.back().end, span.end);
    } else {
      merged.push_back(span);
    }
  }
  return SegmentSet(std::move(merged));
}

bool union_covers(const SegmentSet& s, const SegmentSet& ground_truth) {
  const SegmentSet merged = merge_overlaps(s);
  for (const auto& gt : ground_truth) {
    bool covered = std::any_of(merged.begin(), merged.end(),
                               [&](const TimeSpan& m) { return m.contains(gt); });
    if (!covered) return false;
  }
  return true;
}

bool coverage_predicate(const SegmentSet& s, const SegmentSet& ground_truth) {
  return union_covers(s, ground_truth) && pairwise_disjoint(s);
}

double covered_measure(const SegmentSet& s) { return merge_overlaps(s).total_length(); }

double intersection_measure(const SegmentSet& a, const SegmentSet& b) {
  const SegmentSet ma = merge_overlaps(a);
  const SegmentSet mb = merge_overlaps(b);
  double total = 0.0;
  std::size_t i = 0, j = 0;
  while (i < ma.size() && j < mb.size()) {
    total += ma[i].overlap_length(mb[j]);
    if (ma[i].end < mb[j].end) {
      ++i;
    } else {
      ++j;
    }
  }
  return total;
}

double segment_iou(const SegmentSet& a, const SegmentSet& b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  const double inter = intersection_measure(a, b);
  const double uni = covered_measure(a) + covered_measure(b) - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

SegmentSet CompositeContentRef::source_spans() const {
  std::vector<TimeSpan> spans;
  spans.reserve(pieces.size());
  for (const auto& p : pieces) spans.push_back(p.source);
  return SegmentSet(std::move(spans));
}

double CompositeContentRef::to_source(double composite_time) const {
  if (pieces.empty() || composite_time < -kTimeTolerance ||
      composite_time > duration + kTimeTolerance) {
    throw IntervalError("composite time out of range");
  }
  // Last piece whose composite start is <= t.
  auto it = std::upper_bound(pieces.begin(), pieces.end(), composite_time,
                             [](double t, const CompositePiece& p) { return t < p.composite_start; });
  const CompositePiece& piece = it == pieces.begin() ? pieces.front() : *std::prev(it);
  return piece.source.start + (composite_time - piece.composite_start);
}

std::optional<double> CompositeContentRef::to_composite(double source_time) const {
  for (const auto& p : pieces) {
    if (source_time >= p.source.start - kTimeTolerance && source_time < p.source.end) {
      return p.composite_start + (source_time - p.source.start);
    }
  }
  return std::nullopt;
}

CompositeContentRef temporal_concat(const CropDirective& directive) {
  CompositeContentRef composite;
  composite.content_ref = directive.content_ref;
  double cursor = 0.0;
  for (const auto& span : directive.spans) {
    if (!span.within(directive.content_duration)) {
      throw IntervalError("span " + describe(span) + " outside content duration " +
                          std::to_string(directive.content_duration));
    }
    composite.pieces.push_back({span, cursor});
    cursor += span.length();
  }
  composite.duration = cursor;
  return composite;
}

}  // namespace avrl
