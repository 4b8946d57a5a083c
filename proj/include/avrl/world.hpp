#pragma once

// Desk-scale symbolic audio-visual world.
//
// Content is two event tracks (visual, audio) of (span, symbol) pairs at 1 Hz
// integer resolution. Each task asks a multiple-choice question whose answer
// follows from a small set of evidence events; the merged evidence spans are
// the ground-truth grounding.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "avrl/interval.hpp"

namespace avrl {

enum class Track { kVisual, kAudio };

enum class ModalitySetting { kAudioVisual, kVisualOnly, kAudioOnly };

enum class ModalityRequirement { kVisual, kAudio, kAudioVisual };

enum class TaskTemplate {
  kNextVisual,    // which visual event comes right after a visual cue
  kNextAudio,     // which sound follows an audio cue
  kCooccurrence,  // which visual event is on screen while an audio cue plays
};

std::string_view to_string(ModalitySetting s);
std::string_view to_string(ModalityRequirement r);
std::string_view to_string(TaskTemplate t);
ModalitySetting parse_setting(std::string_view s);
ModalityRequirement parse_requirement(std::string_view s);
TaskTemplate parse_template(std::string_view s);

inline constexpr std::array<ModalitySetting, 3> kAllSettings = {
    ModalitySetting::kAudioVisual, ModalitySetting::kVisualOnly, ModalitySetting::kAudioOnly};

const std::vector<std::string>& visual_vocabulary();
const std::vector<std::string>& audio_vocabulary();
bool is_vocabulary_symbol(std::string_view word);

struct Event {
  TimeSpan span;
  std::string symbol;

  friend bool operator==(const Event&, const Event&) = default;
};

struct SymbolicAVContent {
  double duration = 0.0;
  std::vector<Event> visual_track;
  std::vector<Event> audio_track;

  const std::vector<Event>& track(Track t) const {
    return t == Track::kVisual ? visual_track : audio_track;
  }
  // Events of both tracks.
  std::vector<const Event*> all_events() const;
  const Event* find(std::string_view symbol) const;

  friend bool operator==(const SymbolicAVContent&, const SymbolicAVContent&) = default;
};

class UnsupportedSetting : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GenerationExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Removes the audio (V_ONLY) or visual (A_ONLY) track. Throws
// UnsupportedSetting when the retained track is empty.
SymbolicAVContent mask_content(const SymbolicAVContent& content, ModalitySetting setting);

// Events whose spans lie inside the union of the given spans.
SymbolicAVContent observe_within(const SymbolicAVContent& content, const SegmentSet& spans);

struct GeneratedTask {
  std::string id;  // also the content reference
  SymbolicAVContent content;
  TaskTemplate kind = TaskTemplate::kNextVisual;
  std::string cue;
  std::string question;
  std::array<std::string, 4> options;
  char answer_key = 'A';
  std::vector<Event> evidence;  // cue event, then target event
  SegmentSet ground_truth;      // merged evidence spans
  ModalityRequirement requirement = ModalityRequirement::kVisual;

  const std::string& answer_symbol() const { return options[answer_key - 'A']; }
  std::vector<std::string> option_list() const { return {options.begin(), options.end()}; }
  Track cue_track() const { return kind == TaskTemplate::kNextVisual ? Track::kVisual : Track::kAudio; }
  Track target_track() const { return kind == TaskTemplate::kNextAudio ? Track::kAudio : Track::kVisual; }

  friend bool operator==(const GeneratedTask&, const GeneratedTask&) = default;
};

// Event the question's relation points at within the given content, if the
// cue is visible and the relation resolves to exactly one event.
const Event* relation_target(const GeneratedTask& task, const SymbolicAVContent& observed);

// Option letters consistent with what is observable in the content. All four
// when the cue or the target track is unobserved.
std::vector<char> consistent_options(const GeneratedTask& task, const SymbolicAVContent& observed);

// The observed content singles out the task's answer key.
bool determines_answer(const GeneratedTask& task, const SymbolicAVContent& observed);

struct WorldParams {
  std::size_t n_tasks = 256;
  // Relative weights of V / A / AV tasks.
  double weight_visual = 1.0;
  double weight_audio = 1.0;
  double weight_audio_visual = 1.0;
  int min_duration = 20;
  int max_duration = 120;
  // Probability that consecutive events in a track are separated by a gap.
  double gap_probability = 0.5;
};

// Deterministic for a (seed, params) pair. Task ids are "syn-<seed>-<index>".
std::vector<GeneratedTask> generate_corpus(std::uint64_t seed, const WorldParams& params);

std::string corpus_digest(const std::vector<GeneratedTask>& corpus);

// Question, options and the (masked) tracks as text lines.
std::vector<std::string> render_prompt(const GeneratedTask& task, ModalitySetting setting);

double oracle_answer_check(const GeneratedTask& task, std::string_view prediction);

void to_json(nlohmann::json& j, const Event& e);
void from_json(const nlohmann::json& j, Event& e);
void to_json(nlohmann::json& j, const SymbolicAVContent& c);
void from_json(const nlohmann::json& j, SymbolicAVContent& c);
void to_json(nlohmann::json& j, const GeneratedTask& t);
void from_json(const nlohmann::json& j, GeneratedTask& t);

void write_corpus(const std::vector<GeneratedTask>& corpus, const std::string& path);
std::vector<GeneratedTask> read_corpus(const std::string& path);

// Resolves content references, including ablated ones ("<id>@V_ONLY").
class ContentStore {
 public:
  ContentStore() = default;
  explicit ContentStore(const std::vector<GeneratedTask>& tasks);

  void add(GeneratedTask task);
  bool contains(const std::string& id) const { return tasks_.count(id) != 0; }
  const GeneratedTask& task(const std::string& content_ref) const;
  SymbolicAVContent content(const std::string& content_ref) const;
  std::size_t size() const { return tasks_.size(); }

 private:
  std::map<std::string, std::shared_ptr<const GeneratedTask>> tasks_;
};

class ContentNotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// "<id>@<SETTING>" for ablated settings; the plain id for AV.
std::string ablated_ref(const std::string& id, ModalitySetting setting);

// Splits a content reference into base id and setting.
std::pair<std::string, ModalitySetting> split_content_ref(const std::string& content_ref);

// Validates that the content supports the setting and returns the ablated reference.
std::string ablate_modality(const ContentStore& store, const std::string& content_ref,
                            ModalitySetting setting);

}  // namespace avrl
