#pragma once

// Decision schemas that turn a synthetic task into a structured trace.
//
// TaskPrompt positions: k segment choices, k caption choices, one answer.
// Segment slot 1 picks a visible event span; later slots may also skip.
// A caption names one visible symbol (a singleton "none" for skipped slots).
// The answer picks one of the four options.

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avrl/interval.hpp"
#include "avrl/policy.hpp"
#include "avrl/trace.hpp"
#include "avrl/world.hpp"

namespace avrl {

enum TaskBlock : std::size_t {
  kFirstSegmentBlock = 0,
  kLaterSegmentBlock = 1,
  kCaptionBlock = 2,
  kAnswerBlock = 3,
};

// segment rows: [is_skip, is_cue, is_relation_target, covered_by_earlier]
// caption rows: [overlaps_segment, inside_segment]
// answer rows:  [visible, next_event_target, cooccurring_target]
FeatureLayout task_policy_layout();

class TaskPrompt : public DecisionPrompt {
 public:
  TaskPrompt(std::shared_ptr<const GeneratedTask> task, ModalitySetting setting,
             std::size_t segment_slots = 2);

  std::size_t num_positions() const override { return 2 * slots_ + 1; }
  CandidateSet candidates(std::size_t position, std::span<const int> prefix) const override;

  const GeneratedTask& task() const { return *task_; }
  ModalitySetting setting() const { return setting_; }
  const std::string& content_ref() const { return content_ref_; }
  const SymbolicAVContent& observed() const { return observed_; }
  std::size_t segment_slots() const { return slots_; }

  // Spans of the non-skipped segment slots, in slot order.
  std::vector<TimeSpan> chosen_spans(std::span<const int> actions) const;
  SegmentSet chosen_segments(std::span<const int> actions) const;
  char chosen_letter(std::span<const int> actions) const;

  StructuredTrace to_trace(std::span<const int> actions) const;
  // Canonical template text; parse_trace inverts it.
  std::string render_to_trace(std::span<const int> actions) const;

  // Cue and target segments with their own captions and the correct letter.
  std::vector<int> scripted_actions() const;

 private:
  std::optional<std::size_t> segment_index(std::size_t slot, std::span<const int> prefix) const;
  std::string caption_text(const std::string& symbol) const;

  std::shared_ptr<const GeneratedTask> task_;
  ModalitySetting setting_;
  std::size_t slots_;
  std::string content_ref_;
  SymbolicAVContent observed_;
  std::vector<TimeSpan> spans_;       // distinct visible event spans, sorted
  std::vector<std::string> symbols_;  // visible symbols, sorted
  std::optional<TimeSpan> cue_span_;
  std::optional<TimeSpan> target_span_;
  std::string target_symbol_;
};

// Token-level variant over the template surface. Each template token is
// emitted, dropped, or replaced by a stray tag, so outputs may be malformed.
enum RawTokenChoice : int { kEmitToken = 0, kDropToken = 1, kStrayTag = 2 };

class RawTokenPrompt : public DecisionPrompt {
 public:
  explicit RawTokenPrompt(const std::string& canonical_text);

  std::size_t num_positions() const override { return tokens_.size(); }
  CandidateSet candidates(std::size_t position, std::span<const int> prefix) const override;

  const std::vector<std::string>& tokens() const { return tokens_; }
  std::string render(std::span<const int> actions) const;

 private:
  std::vector<std::string> tokens_;
};

// One block, rows [emit, drop, stray]; corruption is the total probability
// of not emitting a token.
FeatureLayout raw_token_layout();
FactoredCategoricalPolicy make_raw_token_policy(double corruption);

// Tags and bodies of a template text, in order.
std::vector<std::string> template_tokens(const std::string& text);

}  // namespace avrl
