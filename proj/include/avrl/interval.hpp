#pragma once

// Interval algebra over grounding segments.
//
// Spans are closed-open [start, end) in seconds. Touching spans are disjoint.
// All containment and disjointness comparisons use kTimeTolerance so that
// spans parsed from decimal text compare the way they read.

#include <algorithm>
#include <initializer_list>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace avrl {

inline constexpr double kTimeTolerance = 1e-9;

class IntervalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TimeSpan {
  double start = 0.0;
  double end = 0.0;

  double length() const { return end - start; }
  bool valid() const { return start >= 0.0 && start < end; }
  bool within(double duration) const { return valid() && end <= duration + kTimeTolerance; }
  bool contains(const TimeSpan& other) const {
    return other.start >= start - kTimeTolerance && other.end <= end + kTimeTolerance;
  }
  // Positive-measure intersection.
  bool overlaps(const TimeSpan& other) const {
    return std::min(end, other.end) - std::max(start, other.start) > kTimeTolerance;
  }
  double overlap_length(const TimeSpan& other) const;

  friend bool operator==(const TimeSpan&, const TimeSpan&) = default;
};

// Throws IntervalError unless 0 <= start < end.
TimeSpan make_span(double start, double end);

// Spans kept sorted by (start, end). Disjointness is not an invariant; it is
// a property checked by pairwise_disjoint.
class SegmentSet {
 public:
  SegmentSet() = default;
  SegmentSet(std::initializer_list<TimeSpan> spans);
  explicit SegmentSet(std::vector<TimeSpan> spans);

  void insert(const TimeSpan& span);

  const std::vector<TimeSpan>& spans() const { return spans_; }
  std::size_t size() const { return spans_.size(); }
  bool empty() const { return spans_.empty(); }
  auto begin() const { return spans_.begin(); }
  auto end() const { return spans_.end(); }
  const TimeSpan& operator[](std::size_t i) const { return spans_[i]; }

  // Sum of span lengths, counting overlaps more than once.
  double total_length() const;

  friend bool operator==(const SegmentSet&, const SegmentSet&) = default;

 private:
  std::vector<TimeSpan> spans_;
};

bool pairwise_disjoint(const SegmentSet& s);

// Every ground-truth span is contained in the union of s.
bool union_covers(const SegmentSet& s, const SegmentSet& ground_truth);

// Coverage of all ground truth by pairwise disjoint predictions.
bool coverage_predicate(const SegmentSet& s, const SegmentSet& ground_truth);

// Standard merge; touching spans are joined. Output is pairwise disjoint.
SegmentSet merge_overlaps(const SegmentSet& s);

// Measure of the union.
double covered_measure(const SegmentSet& s);

// Measure of (union a) ∩ (union b).
double intersection_measure(const SegmentSet& a, const SegmentSet& b);

// |∪a ∩ ∪b| / |∪a ∪ ∪b|; 1 when both empty, 0 when exactly one is empty.
double segment_iou(const SegmentSet& a, const SegmentSet& b);

struct CropDirective {
  std::string content_ref;
  double content_duration = 0.0;
  SegmentSet spans;
};

// One cropped piece placed on the composite timeline.
struct CompositePiece {
  TimeSpan source;
  double composite_start = 0.0;
};

// Temporally ordered concatenation of cropped segments.
struct CompositeContentRef {
  std::string content_ref;
  std::vector<CompositePiece> pieces;
  double duration = 0.0;

  SegmentSet source_spans() const;

  // Composite time -> source time. A boundary time belongs to the piece that
  // starts there. Throws IntervalError outside [0, duration].
  double to_source(double composite_time) const;

  // Source time -> composite time; empty when no piece covers the time.
  std::optional<double> to_composite(double source_time) const;
};

// Throws IntervalError when a span falls outside the content duration.
CompositeContentRef temporal_concat(const CropDirective& directive);

}  // namespace avrl
