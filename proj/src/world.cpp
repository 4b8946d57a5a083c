#include "avrl/world.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "avrl/answer.hpp"
#include "avrl/trace.hpp"
#include "avrl/util.hpp"

namespace avrl {

using nlohmann::json;

std::string_view to_string(ModalitySetting s) {
  switch (s) {
    case ModalitySetting::kAudioVisual: return "AV";
    case ModalitySetting::kVisualOnly: return "V_ONLY";
    case ModalitySetting::kAudioOnly: return "A_ONLY";
  }
  return "AV";
}

std::string_view to_string(ModalityRequirement r) {
  switch (r) {
    case ModalityRequirement::kVisual: return "V";
    case ModalityRequirement::kAudio: return "A";
    case ModalityRequirement::kAudioVisual: return "AV";
  }
  return "V";
}

std::string_view to_string(TaskTemplate t) {
  switch (t) {
    case TaskTemplate::kNextVisual: return "next-visual";
    case TaskTemplate::kNextAudio: return "next-audio";
    case TaskTemplate::kCooccurrence: return "co-occurrence";
  }
  return "next-visual";
}

ModalitySetting parse_setting(std::string_view s) {
  for (auto setting : kAllSettings) {
    if (to_string(setting) == s) return setting;
  }
  throw std::invalid_argument("unknown modality setting '" + std::string(s) + "'");
}

ModalityRequirement parse_requirement(std::string_view s) {
  for (auto r : {ModalityRequirement::kVisual, ModalityRequirement::kAudio,
                 ModalityRequirement::kAudioVisual}) {
    if (to_string(r) == s) return r;
  }
  throw std::invalid_argument("unknown modality requirement '" + std::string(s) + "'");
}

TaskTemplate parse_template(std::string_view s) {
  for (auto t : {TaskTemplate::kNextVisual, TaskTemplate::kNextAudio, TaskTemplate::kCooccurrence}) {
    if (to_string(t) == s) return t;
  }
  throw std::invalid_argument("unknown task template '" + std::string(s) + "'");
}

const std::vector<std::string>& visual_vocabulary() {
  static const std::vector<std::string> kVocab = {
      "flag",   "car",    "dog",   "cat",    "bicycle", "umbrella", "lamp",   "clock",
      "ball",   "tree",   "boat",  "bird",   "horse",   "train",    "kite",   "chair",
      "door",   "window", "cup",   "book",   "phone",   "guitar",   "piano",  "drum",
      "hat",    "shoe",   "bottle", "candle", "mirror", "ladder",   "bridge", "bus"};
  return kVocab;
}

const std::vector<std::string>& audio_vocabulary() {
  static const std::vector<std::string> kVocab = {
      "siren",  "bark",   "meow",    "whistle", "applause", "thunder", "doorbell", "footsteps",
      "laughter", "engine", "horn",  "chime",   "knock",    "rain",    "wind",     "bell",
      "scream", "cough",  "typing",  "splash",  "crash",    "beep",    "ring",     "buzz",
      "click",  "drip",   "hum",     "roar",    "chirp",    "gong",    "snap",     "sneeze"};
  return kVocab;
}

bool is_vocabulary_symbol(std::string_view word) {
  static const std::set<std::string, std::less<>> kAll = [] {
    std::set<std::string, std::less<>> all(visual_vocabulary().begin(), visual_vocabulary().end());
    all.insert(audio_vocabulary().begin(), audio_vocabulary().end());
    return all;
  }();
  return kAll.count(word) != 0;
}

std::vector<const Event*> SymbolicAVContent::all_events() const {
  std::vector<const Event*> out;
  for (const auto& e : visual_track) out.push_back(&e);
  for (const auto& e : audio_track) out.push_back(&e);
  return out;
}

const Event* SymbolicAVContent::find(std::string_view symbol) const {
  for (const Event* e : all_events()) {
    if (e->symbol == symbol) return e;
  }
  return nullptr;
}

SymbolicAVContent mask_content(const SymbolicAVContent& content, ModalitySetting setting) {
  SymbolicAVContent out = content;
  switch (setting) {
    case ModalitySetting::kAudioVisual:
      break;
    case ModalitySetting::kVisualOnly:
      if (content.visual_track.empty()) throw UnsupportedSetting("content has no visual track");
      out.audio_track.clear();
      break;
    case ModalitySetting::kAudioOnly:
      if (content.audio_track.empty()) throw UnsupportedSetting("content has no audio track");
      out.visual_track.clear();
      break;
  }
  return out;
}

SymbolicAVContent observe_within(const SymbolicAVContent& content, const SegmentSet& spans) {
  const SegmentSet merged = merge_overlaps(spans);
  auto inside = [&](const Event& e) {
    return std::any_of(merged.begin(), merged.end(),
                       [&](const TimeSpan& s) { return s.contains(e.span); });
  };
  SymbolicAVContent out;
  out.duration = content.duration;
  std::copy_if(content.visual_track.begin(), content.visual_track.end(),
               std::back_inserter(out.visual_track), inside);
  std::copy_if(content.audio_track.begin(), content.audio_track.end(),
               std::back_inserter(out.audio_track), inside);
  return out;
}

namespace {

const Event* find_in(const std::vector<Event>& track, std::string_view symbol) {
  for (const auto& e : track) {
    if (e.symbol == symbol) return &e;
  }
  return nullptr;
}

std::vector<const Event*> overlapping(const std::vector<Event>& track, const TimeSpan& span) {
  std::vector<const Event*> out;
  for (const auto& e : track) {
    if (e.span.overlaps(span)) out.push_back(&e);
  }
  return out;
}

std::vector<char> letters_matching(const GeneratedTask& task, std::string_view symbol) {
  std::vector<char> out;
  for (std::size_t i = 0; i < task.options.size(); ++i) {
    if (task.options[i] == symbol) out.push_back(option_letter(i));
  }
  return out;
}

std::vector<char> all_letters(const GeneratedTask& task) {
  std::vector<char> out;
  for (std::size_t i = 0; i < task.options.size(); ++i) out.push_back(option_letter(i));
  return out;
}

}  // namespace

const Event* relation_target(const GeneratedTask& task, const SymbolicAVContent& observed) {
  const Event* cue = find_in(observed.track(task.cue_track()), task.cue);
  if (cue == nullptr) return nullptr;
  const auto& target_track = observed.track(task.target_track());
  if (task.kind == TaskTemplate::kCooccurrence) {
    auto hits = overlapping(target_track, cue->span);
    return hits.size() == 1 ? hits.front() : nullptr;
  }
  const Event* next = nullptr;
  for (const auto& e : target_track) {
    if (e.span.start >= cue->span.end - kTimeTolerance &&
        (next == nullptr || e.span.start < next->span.start)) {
      next = &e;
    }
  }
  return next;
}

std::vector<char> consistent_options(const GeneratedTask& task, const SymbolicAVContent& observed) {
  const Event* cue = find_in(observed.track(task.cue_track()), task.cue);
  const auto& target_track = observed.track(task.target_track());
  if (cue == nullptr || target_track.empty()) return all_letters(task);
  if (task.kind == TaskTemplate::kCooccurrence) {
    auto hits = overlapping(target_track, cue->span);
    if (hits.empty()) return all_letters(task);
    std::vector<char> out;
    for (const Event* h : hits) {
      for (char c : letters_matching(task, h->symbol)) out.push_back(c);
    }
    std::sort(out.begin(), out.end());
    return out;
  }
  const Event* next = relation_target(task, observed);
  if (next == nullptr) return all_letters(task);
  return letters_matching(task, next->symbol);
}

bool determines_answer(const GeneratedTask& task, const SymbolicAVContent& observed) {
  auto options = consistent_options(task, observed);
  return options.size() == 1 && options.front() == task.answer_key;
}

namespace {

using Rng = std::mt19937_64;

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

std::vector<Event> make_track(Rng& rng, int duration, const std::vector<std::string>& vocab,
                              double gap_probability) {
  std::vector<std::string> symbols = vocab;
  std::shuffle(symbols.begin(), symbols.end(), rng);
  std::vector<Event> track;
  int t = uniform_int(rng, 0, 2);
  std::bernoulli_distribution has_gap(gap_probability);
  while (track.size() < symbols.size()) {
    const int gap = track.empty() ? 0 : (has_gap(rng) ? uniform_int(rng, 1, 3) : 0);
    const int len = uniform_int(rng, 2, 6);
    if (t + gap + len > duration) break;
    track.push_back({TimeSpan{double(t + gap), double(t + gap + len)}, symbols[track.size()]});
    t += gap + len;
  }
  return track;
}

std::optional<GeneratedTask> try_build(Rng& rng, TaskTemplate kind, const WorldParams& params) {
  GeneratedTask task;
  task.kind = kind;
  const int duration = uniform_int(rng, params.min_duration, params.max_duration);
  task.content.duration = duration;
  task.content.visual_track = make_track(rng, duration, visual_vocabulary(), params.gap_probability);
  task.content.audio_track = make_track(rng, duration, audio_vocabulary(), params.gap_probability);
  auto& visual = task.content.visual_track;
  auto& audio = task.content.audio_track;

  const Event* cue = nullptr;
  const Event* target = nullptr;
  if (kind == TaskTemplate::kCooccurrence) {
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < audio.size(); ++i) {
      if (audio[i].span.length() >= 3) eligible.push_back(i);
    }
    if (eligible.empty()) return std::nullopt;
    const Event& cue_event = audio[eligible[uniform_int(rng, 0, int(eligible.size()) - 1)]];
    // Replace whatever is on screen during the cue with a single event inside it.
    std::vector<Event> kept;
    std::vector<std::string> freed;
    for (const auto& e : visual) {
      if (e.span.overlaps(cue_event.span)) {
        freed.push_back(e.symbol);
      } else {
        kept.push_back(e);
      }
    }
    std::set<std::string> used;
    for (const auto& e : kept) used.insert(e.symbol);
    std::string symbol;
    for (const auto& s : visual_vocabulary()) {
      if (!used.count(s)) {
        symbol = s;
        break;
      }
    }
    if (symbol.empty()) return std::nullopt;
    const double lead = uniform_int(rng, 0, 1);
    const double trail = uniform_int(rng, 0, 1);
    Event inside{TimeSpan{cue_event.span.start + lead, cue_event.span.end - trail}, symbol};
    kept.push_back(inside);
    std::sort(kept.begin(), kept.end(),
              [](const Event& a, const Event& b) { return a.span.start < b.span.start; });
    visual = std::move(kept);
    cue = &cue_event;
    target = find_in(visual, symbol);
  } else {
    const auto& track = kind == TaskTemplate::kNextVisual ? visual : audio;
    if (track.size() < 5) return std::nullopt;
    const std::size_t i = std::size_t(uniform_int(rng, 0, int(track.size()) - 2));
    cue = &track[i];
    target = &track[i + 1];
  }

  const auto& target_track = task.content.track(task.target_track());
  std::vector<std::string> distractors;
  for (const auto& e : target_track) {
    if (e.symbol != target->symbol && e.symbol != cue->symbol) distractors.push_back(e.symbol);
  }
  if (distractors.size() < 3) return std::nullopt;
  std::shuffle(distractors.begin(), distractors.end(), rng);
  std::array<std::string, 4> options = {target->symbol, distractors[0], distractors[1],
                                        distractors[2]};
  std::shuffle(options.begin(), options.end(), rng);
  task.options = options;
  for (std::size_t k = 0; k < options.size(); ++k) {
    if (options[k] == target->symbol) task.answer_key = option_letter(k);
  }
  task.cue = cue->symbol;
  task.evidence = {*cue, *target};
  task.ground_truth = merge_overlaps(SegmentSet{cue->span, target->span});
  switch (kind) {
    case TaskTemplate::kNextVisual:
      task.question = "Which visual event comes right after the " + task.cue + "?";
      task.requirement = ModalityRequirement::kVisual;
      break;
    case TaskTemplate::kNextAudio:
      task.question = "Which sound is heard right after the " + task.cue + "?";
      task.requirement = ModalityRequirement::kAudio;
      break;
    case TaskTemplate::kCooccurrence:
      task.question = "What is on screen while the " + task.cue + " sound plays?";
      task.requirement = ModalityRequirement::kAudioVisual;
      break;
  }

  // The full content and the evidence alone must both single out the key.
  if (!determines_answer(task, task.content)) return std::nullopt;
  if (!determines_answer(task, observe_within(task.content, task.ground_truth))) return std::nullopt;
  if (kind == TaskTemplate::kCooccurrence) {
    // Neither track alone may pin the answer down: every option must remain
    // consistent with each single-track view.
    for (auto setting : {ModalitySetting::kVisualOnly, ModalitySetting::kAudioOnly}) {
      const auto view = mask_content(task.content, setting);
      if (consistent_options(task, view).size() != task.options.size()) return std::nullopt;
      // Each option must also be plausible on the visible visual track.
      for (const auto& opt : task.options) {
        if (!view.visual_track.empty() && find_in(view.visual_track, opt) == nullptr) {
          return std::nullopt;
        }
      }
    }
  }
  return task;
}

}  // namespace

std::vector<GeneratedTask> generate_corpus(std::uint64_t seed, const WorldParams& params) {
  if (params.n_tasks == 0) throw std::invalid_argument("n_tasks must be positive");
  if (params.min_duration < 1 || params.max_duration < params.min_duration) {
    throw std::invalid_argument("invalid duration range");
  }
  const double weights[] = {params.weight_visual, params.weight_audio, params.weight_audio_visual};
  if (std::any_of(std::begin(weights), std::end(weights), [](double w) { return w < 0; }) ||
      weights[0] + weights[1] + weights[2] <= 0) {
    throw std::invalid_argument("task mix weights must be non-negative with a positive sum");
  }
  constexpr TaskTemplate kKinds[] = {TaskTemplate::kNextVisual, TaskTemplate::kNextAudio,
                                     TaskTemplate::kCooccurrence};
  constexpr int kMaxAttempts = 500;

  std::vector<GeneratedTask> corpus;
  corpus.reserve(params.n_tasks);
  for (std::size_t i = 0; i < params.n_tasks; ++i) {
    Rng rng(derive_seed(seed, i));
    std::discrete_distribution<int> pick(std::begin(weights), std::end(weights));
    const TaskTemplate kind = kKinds[pick(rng)];
    std::optional<GeneratedTask> task;
    for (int attempt = 0; attempt < kMaxAttempts && !task; ++attempt) task = try_build(rng, kind, params);
    if (!task) {
      throw GenerationExhausted("could not build a " + std::string(to_string(kind)) +
                                " task within " + std::to_string(kMaxAttempts) + " attempts");
    }
    task->id = "syn-" + std::to_string(seed) + "-" + std::to_string(i);
    corpus.push_back(std::move(*task));
  }
  return corpus;
}

std::string corpus_digest(const std::vector<GeneratedTask>& corpus) {
  std::string all;
  for (const auto& t : corpus) {
    all += json(t).dump();
    all += '\n';
  }
  return sha256_hex(all);
}

std::vector<std::string> render_prompt(const GeneratedTask& task, ModalitySetting setting) {
  const SymbolicAVContent view = mask_content(task.content, setting);
  std::vector<std::string> lines;
  lines.push_back("question: " + task.question);
  std::string opts = "options:";
  for (std::size_t i = 0; i < task.options.size(); ++i) {
    opts += " ";
    opts += option_letter(i);
    opts += ") " + task.options[i];
  }
  lines.push_back(opts);
  lines.push_back("duration: " + format_seconds(view.duration));
  for (const auto& e : view.visual_track) {
    lines.push_back("visual: " + format_seconds(e.span.start) + "-" + format_seconds(e.span.end) +
                    " " + e.symbol);
  }
  for (const auto& e : view.audio_track) {
    lines.push_back("audio: " + format_seconds(e.span.start) + "-" + format_seconds(e.span.end) +
                    " " + e.symbol);
  }
  return lines;
}

double oracle_answer_check(const GeneratedTask& task, std::string_view prediction) {
  return multiple_choice_score(prediction, std::string(1, task.answer_key), task.option_list());
}

void to_json(json& j, const Event& e) { j = json::array({e.span.start, e.span.end, e.symbol}); }

void from_json(const json& j, Event& e) {
  e.span = make_span(j.at(0).get<double>(), j.at(1).get<double>());
  e.symbol = j.at(2).get<std::string>();
}

void to_json(json& j, const SymbolicAVContent& c) {
  j = json{{"duration", c.duration}, {"visual", c.visual_track}, {"audio", c.audio_track}};
}

void from_json(const json& j, SymbolicAVContent& c) {
  c.duration = j.at("duration").get<double>();
  c.visual_track = j.at("visual").get<std::vector<Event>>();
  c.audio_track = j.at("audio").get<std::vector<Event>>();
  for (const auto* e : c.all_events()) {
    if (!e->span.within(c.duration)) throw std::invalid_argument("event outside content duration");
  }
}

void to_json(json& j, const GeneratedTask& t) {
  json gt = json::array();
  for (const auto& s : t.ground_truth) gt.push_back({s.start, s.end});
  j = json{{"id", t.id},
           {"template", to_string(t.kind)},
           {"requirement", to_string(t.requirement)},
           {"question", t.question},
           {"cue", t.cue},
           {"options", t.options},
           {"answer_key", std::string(1, t.answer_key)},
           {"evidence", t.evidence},
           {"ground_truth", gt},
           {"content", t.content}};
}

void from_json(const json& j, GeneratedTask& t) {
  t.id = j.at("id").get<std::string>();
  t.kind = parse_template(j.at("template").get<std::string>());
  t.requirement = parse_requirement(j.at("requirement").get<std::string>());
  t.question = j.at("question").get<std::string>();
  t.cue = j.at("cue").get<std::string>();
  t.options = j.at("options").get<std::array<std::string, 4>>();
  const auto key = j.at("answer_key").get<std::string>();
  if (key.size() != 1 || key[0] < 'A' || key[0] > 'D') throw std::invalid_argument("bad answer_key");
  t.answer_key = key[0];
  t.evidence = j.at("evidence").get<std::vector<Event>>();
  std::vector<TimeSpan> gt;
  for (const auto& s : j.at("ground_truth")) gt.push_back(make_span(s.at(0), s.at(1)));
  t.ground_truth = SegmentSet(std::move(gt));
  t.content = j.at("content").get<SymbolicAVContent>();
}

void write_corpus(const std::vector<GeneratedTask>& corpus, const std::string& path) {
  std::string out;
  for (const auto& t : corpus) {
    out += json(t).dump();
    out += '\n';
  }
  write_file(path, out);
}

std::vector<GeneratedTask> read_corpus(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<GeneratedTask> corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      corpus.push_back(json::parse(line).get<GeneratedTask>());
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return corpus;
}

ContentStore::ContentStore(const std::vector<GeneratedTask>& tasks) {
  for (const auto& t : tasks) add(t);
}

void ContentStore::add(GeneratedTask task) {
  std::string id = task.id;
  tasks_[id] = std::make_shared<const GeneratedTask>(std::move(task));
}

std::string ablated_ref(const std::string& id, ModalitySetting setting) {
  if (setting == ModalitySetting::kAudioVisual) return id;
  return id + "@" + std::string(to_string(setting));
}

std::pair<std::string, ModalitySetting> split_content_ref(const std::string& content_ref) {
  const auto at = content_ref.find('@');
  if (at == std::string::npos) return {content_ref, ModalitySetting::kAudioVisual};
  return {content_ref.substr(0, at), parse_setting(content_ref.substr(at + 1))};
}

const GeneratedTask& ContentStore::task(const std::string& content_ref) const {
  const auto base = split_content_ref(content_ref).first;
  auto it = tasks_.find(base);
  if (it == tasks_.end()) throw ContentNotFound("unknown content '" + content_ref + "'");
  return *it->second;
}

SymbolicAVContent ContentStore::content(const std::string& content_ref) const {
  const auto [base, setting] = split_content_ref(content_ref);
  return mask_content(task(base).content, setting);
}

std::string ablate_modality(const ContentStore& store, const std::string& content_ref,
                            ModalitySetting setting) {
  const auto [base, current] = split_content_ref(content_ref);
  if (setting == ModalitySetting::kAudioVisual) return content_ref;
  if (current != ModalitySetting::kAudioVisual && current != setting) {
    throw UnsupportedSetting("content '" + content_ref + "' already lacks the " +
                             std::string(to_string(setting)) + " track");
  }
  mask_content(store.task(base).content, setting);  // throws when the track is missing
  return ablated_ref(base, setting);
}

}  // namespace avrl
