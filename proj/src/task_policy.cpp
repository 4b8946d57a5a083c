#include "avrl/task_policy.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "avrl/answer.hpp"

namespace avrl {

FeatureLayout task_policy_layout() { return FeatureLayout{{4, 4, 2, 3}}; }

TaskPrompt::TaskPrompt(std::shared_ptr<const GeneratedTask> task, ModalitySetting setting,
                       std::size_t segment_slots)
    : task_(std::move(task)), setting_(setting), slots_(segment_slots) {
  if (!task_) throw std::invalid_argument("task prompt needs a task");
  if (slots_ == 0) throw std::invalid_argument("at least one segment slot is required");
  content_ref_ = ablated_ref(task_->id, setting_);
  observed_ = mask_content(task_->content, setting_);

  std::set<std::pair<double, double>> spans;
  std::set<std::string> symbols;
  for (const Event* e : observed_.all_events()) {
    spans.emplace(e->span.start, e->span.end);
    symbols.insert(e->symbol);
  }
  for (const auto& [s, e] : spans) spans_.push_back(TimeSpan{s, e});
  symbols_.assign(symbols.begin(), symbols.end());

  for (const auto& e : observed_.track(task_->cue_track())) {
    if (e.symbol == task_->cue) cue_span_ = e.span;
  }
  if (const Event* target = relation_target(*task_, observed_)) {
    target_span_ = target->span;
    target_symbol_ = target->symbol;
  }
}

std::optional<std::size_t> TaskPrompt::segment_index(std::size_t slot,
                                                     std::span<const int> prefix) const {
  const int a = prefix[slot];
  if (slot == 0) return static_cast<std::size_t>(a);
  if (a == 0) return std::nullopt;
  return static_cast<std::size_t>(a - 1);
}

CandidateSet TaskPrompt::candidates(std::size_t position, std::span<const int> prefix) const {
  if (position >= num_positions()) throw SchemaMismatch("position outside the task schema");
  if (prefix.size() < position) throw SchemaMismatch("prefix shorter than position");
  CandidateSet set;

  if (position < slots_) {
    set.block = position == 0 ? kFirstSegmentBlock : kLaterSegmentBlock;
    std::vector<TimeSpan> earlier;
    for (std::size_t s = 0; s < position; ++s) {
      if (auto idx = segment_index(s, prefix)) earlier.push_back(spans_[*idx]);
    }
    if (position > 0) set.features.push_back({1.0, 0.0, 0.0, 0.0});
    for (const auto& span : spans_) {
      const double cue = cue_span_ && *cue_span_ == span ? 1.0 : 0.0;
      const double target = target_span_ && *target_span_ == span ? 1.0 : 0.0;
      const double covered =
          std::any_of(earlier.begin(), earlier.end(), [&](const TimeSpan& e) { return e.contains(span); })
              ? 1.0
              : 0.0;
      set.features.push_back({0.0, cue, target, covered});
    }
    return set;
  }

  if (position < 2 * slots_) {
    set.block = kCaptionBlock;
    const auto idx = segment_index(position - slots_, prefix);
    if (!idx) {
      set.features.push_back({0.0, 0.0});
      return set;
    }
    const TimeSpan& span = spans_[*idx];
    for (const auto& sym : symbols_) {
      const Event* e = observed_.find(sym);
      set.features.push_back({e->span.overlaps(span) ? 1.0 : 0.0, span.contains(e->span) ? 1.0 : 0.0});
    }
    return set;
  }

  set.block = kAnswerBlock;
  const bool next = task_->kind != TaskTemplate::kCooccurrence;
  for (const auto& opt : task_->options) {
    const double visible = observed_.find(opt) != nullptr ? 1.0 : 0.0;
    const double is_target = !target_symbol_.empty() && opt == target_symbol_ ? 1.0 : 0.0;
    set.features.push_back({visible, next ? is_target : 0.0, next ? 0.0 : is_target});
  }
  return set;
}

std::vector<TimeSpan> TaskPrompt::chosen_spans(std::span<const int> actions) const {
  if (actions.size() != num_positions()) throw InvalidAction("action sequence length mismatch");
  std::vector<TimeSpan> out;
  for (std::size_t s = 0; s < slots_; ++s) {
    if (auto idx = segment_index(s, actions)) {
      if (*idx >= spans_.size()) throw InvalidAction("segment choice outside candidate set");
      out.push_back(spans_[*idx]);
    }
  }
  return out;
}

SegmentSet TaskPrompt::chosen_segments(std::span<const int> actions) const {
  return SegmentSet(chosen_spans(actions));
}

char TaskPrompt::chosen_letter(std::span<const int> actions) const {
  if (actions.size() != num_positions()) throw InvalidAction("action sequence length mismatch");
  const int a = actions.back();
  if (a < 0 || a >= static_cast<int>(task_->options.size())) {
    throw InvalidAction("answer choice outside candidate set");
  }
  return option_letter(static_cast<std::size_t>(a));
}

std::string TaskPrompt::caption_text(const std::string& symbol) const {
  const bool audio = std::any_of(observed_.audio_track.begin(), observed_.audio_track.end(),
                                 [&](const Event& a) { return a.symbol == symbol; });
  return audio ? "a " + symbol + " is heard" : "a " + symbol + " is seen";
}

StructuredTrace TaskPrompt::to_trace(std::span<const int> actions) const {
  if (actions.size() != num_positions()) throw InvalidAction("action sequence length mismatch");
  StructuredTrace trace;
  for (std::size_t s = 0; s < slots_; ++s) {
    const auto idx = segment_index(s, actions);
    if (!idx) continue;
    if (*idx >= spans_.size()) throw InvalidAction("segment choice outside candidate set");
    const int c = actions[slots_ + s];
    if (c < 0 || static_cast<std::size_t>(c) >= symbols_.size()) {
      throw InvalidAction("caption choice outside candidate set");
    }
    trace.pairs.push_back({spans_[*idx], caption_text(symbols_[static_cast<std::size_t>(c)])});
  }
  const char letter = chosen_letter(actions);
  trace.thinking = "checked " + std::to_string(trace.pairs.size()) + " segment(s); option " +
                   std::string(1, letter) + " fits";
  trace.final_answer = std::string(1, letter);
  return trace;
}

std::string TaskPrompt::render_to_trace(std::span<const int> actions) const {
  return serialize_trace(to_trace(actions));
}

std::vector<int> TaskPrompt::scripted_actions() const {
  std::vector<int> actions(num_positions(), 0);
  auto span_pos = [&](const std::optional<TimeSpan>& span) -> std::optional<int> {
    if (!span) return std::nullopt;
    auto it = std::find(spans_.begin(), spans_.end(), *span);
    if (it == spans_.end()) return std::nullopt;
    return static_cast<int>(it - spans_.begin());
  };
  auto symbol_pos = [&](const std::string& sym) {
    auto it = std::find(symbols_.begin(), symbols_.end(), sym);
    return it == symbols_.end() ? 0 : static_cast<int>(it - symbols_.begin());
  };

  const auto cue = span_pos(cue_span_);
  actions[0] = cue.value_or(0);
  actions[slots_] = symbol_pos(task_->cue);
  if (slots_ > 1) {
    const auto target = span_pos(target_span_);
    const bool inside_cue = cue_span_ && target_span_ && cue_span_->contains(*target_span_);
    if (target && !inside_cue) {
      actions[1] = *target + 1;
      actions[slots_ + 1] = symbol_pos(target_symbol_);
    }
  }
  actions.back() = task_->answer_key - 'A';
  return actions;
}

// ---------------------------------------------------------------------------

std::vector<std::string> template_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '<') {
      const auto close = text.find('>', i);
      if (close == std::string::npos) {
        out.push_back(text.substr(i));
        break;
      }
      out.push_back(text.substr(i, close - i + 1));
      i = close + 1;
    } else {
      const auto open = text.find('<', i);
      const auto stop = open == std::string::npos ? text.size() : open;
      out.push_back(text.substr(i, stop - i));
      i = stop;
    }
  }
  return out;
}

RawTokenPrompt::RawTokenPrompt(const std::string& canonical_text)
    : tokens_(template_tokens(canonical_text)) {
  if (tokens_.empty()) throw std::invalid_argument("empty template text");
}

CandidateSet RawTokenPrompt::candidates(std::size_t position, std::span<const int>) const {
  if (position >= tokens_.size()) throw SchemaMismatch("position outside the token schema");
  return CandidateSet{0, {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}};
}

std::string RawTokenPrompt::render(std::span<const int> actions) const {
  if (actions.size() != tokens_.size()) throw InvalidAction("action sequence length mismatch");
  static const char* kStray[] = {"<time>", "</caption>", "<answer>", "</thinking>"};
  std::string out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    switch (actions[i]) {
      case kEmitToken:
        out += tokens_[i];
        break;
      case kDropToken:
        break;
      case kStrayTag: {
        // A tag other than the one it replaces.
        const char* tag = kStray[i % 4];
        if (tokens_[i] == tag) tag = kStray[(i + 1) % 4];
        out += tag;
        break;
      }
      default:
        throw InvalidAction("raw token choice outside candidate set");
    }
  }
  return out;
}

FeatureLayout raw_token_layout() { return FeatureLayout{{3}}; }

FactoredCategoricalPolicy make_raw_token_policy(double corruption) {
  if (!(corruption >= 0.0 && corruption < 1.0)) {
    throw std::invalid_argument("corruption must lie in [0, 1)");
  }
  if (corruption == 0.0) return FactoredCategoricalPolicy(raw_token_layout(), {0.0, -50.0, -50.0});
  // emit : drop : stray = (1 - c) : c/2 : c/2
  const double bad = std::log(corruption / 2.0);
  return FactoredCategoricalPolicy(raw_token_layout(), {std::log(1.0 - corruption), bad, bad});
}

}  // namespace avrl
