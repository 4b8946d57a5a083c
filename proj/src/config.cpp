#include "avrl/config.hpp"

#include <filesystem>
#include <set>

#include "avrl/util.hpp"

namespace avrl {

using nlohmann::json;

namespace {

json settings_json(const std::vector<ModalitySetting>& settings) {
  json j = json::array();
  for (auto s : settings) j.push_back(std::string(to_string(s)));
  return j;
}

}  // namespace

json RunConfig::to_json() const {
  return json{
      {"preset", preset},
      {"seed", seed},
      {"paths",
       {{"corpus", paths.corpus},
        {"heldout", paths.heldout},
        {"manifest", paths.manifest},
        {"output_dir", paths.output_dir}}},
      {"world",
       {{"n_tasks", world.n_tasks},
        {"weight_visual", world.weight_visual},
        {"weight_audio", world.weight_audio},
        {"weight_audio_visual", world.weight_audio_visual},
        {"min_duration", world.min_duration},
        {"max_duration", world.max_duration},
        {"gap_probability", world.gap_probability},
        {"corrupt_fraction", corrupt_fraction}}},
      {"trainer",
       {{"group_size", trainer.group_size},
        {"eps_low", trainer.eps_low},
        {"eps_high", trainer.eps_high},
        {"beta_kl", trainer.beta_kl},
        {"lr", trainer.lr},
        {"warmup_fraction", trainer.warmup_fraction},
        {"total_steps", trainer.total_steps},
        {"std_guard", trainer.std_guard},
        {"ratio_mode", std::string(to_string(trainer.ratio_mode))},
        {"updates_per_batch", trainer.updates_per_batch}}},
      {"stage",
       {{"stage", std::string(to_string(stage.stage))},
        {"alpha", stage.alpha},
        {"judger", stage.judger},
        {"snapshot_cadence", stage.snapshot_cadence},
        {"prompts_per_step", stage.prompts_per_step},
        {"segment_slots", stage.segment_slots},
        {"temperature", stage.temperature},
        {"workers", stage.workers},
        {"checkpoint_every", stage.checkpoint_every}}},
      {"rewards",
       {{"format", coefficients.format},
        {"answer", coefficients.answer},
        {"intent", coefficients.intent},
        {"attention", coefficients.attention}}},
      {"curation",
       {{"weights", curation.weights},
        {"required_s_r", curation.required_s_r},
        {"min_s_q", curation.min_s_q},
        {"min_s_c", curation.min_s_c},
        {"min_category_count", curation.min_category_count},
        {"cap_ratio", curation.cap_ratio},
        {"global_cap", curation.global_cap},
        {"must_keep_s_a", curation.must_keep_s_a},
        {"must_keep_s_v", curation.must_keep_s_v},
        {"stage2_min_s_v", curation.stage2_min_s_v},
        {"stage2_min_s_a", curation.stage2_min_s_a},
        {"taxonomy", curation.taxonomy},
        {"template_labels", curation.template_labels}}},
      {"judge",
       {{"endpoint", judge.endpoint},
        {"timeout_ms", judge.timeout_ms},
        {"max_attempts", judge.max_attempts},
        {"backoff_ms", judge.backoff_ms},
        {"max_in_flight", judge.max_in_flight},
        {"transcript", judge.transcript}}},
      {"eval",
       {{"samples_per_task", eval.samples_per_task},
        {"temperature", eval.temperature},
        {"settings", settings_json(eval.settings)}}},
      {"model",
       {{"global_batch_size", model.global_batch_size},
        {"max_seq_len", model.max_seq_len},
        {"moe_aux_loss_coeff", model.moe_aux_loss_coeff},
        {"fps_max_frames", model.fps_max_frames}}},
  };
}

std::string RunConfig::digest() const {
  json j = to_json();
  j["paths"].erase("output_dir");
  return sha256_hex(j.dump());
}

void RunConfig::validate() const {
  if (world.n_tasks == 0) throw ConfigError("world.n_tasks must be positive");
  if (world.min_duration < 1 || world.max_duration < world.min_duration) {
    throw ConfigError("world durations must satisfy 1 <= min_duration <= max_duration");
  }
  for (double w : {world.weight_visual, world.weight_audio, world.weight_audio_visual}) {
    if (!(w >= 0.0)) throw ConfigError("world mix weights must be non-negative");
  }
  if (!(world.weight_visual + world.weight_audio + world.weight_audio_visual > 0.0)) {
    throw ConfigError("world mix weights must not all be zero");
  }
  if (!(world.gap_probability >= 0.0 && world.gap_probability <= 1.0)) {
    throw ConfigError("world.gap_probability must lie in [0, 1]");
  }
  if (!(corrupt_fraction >= 0.0 && corrupt_fraction <= 1.0)) {
    throw ConfigError("world.corrupt_fraction must lie in [0, 1]");
  }
  trainer.validate();
  stage.validate(trainer);
  curation.validate();
  if (judge.timeout_ms <= 0 || judge.max_attempts < 1 || judge.backoff_ms < 0 || judge.max_in_flight < 1) {
    throw ConfigError("judge timeout, attempts and in-flight bound must be positive");
  }
  if (stage.judger == "remote" && judge.endpoint.empty() && judge.transcript.empty()) {
    throw ConfigError("remote judging needs judge.endpoint or a judge.transcript");
  }
  if (eval.samples_per_task == 0) throw ConfigError("eval.samples_per_task must be positive");
  if (!(eval.temperature >= 0.0)) throw ConfigError("eval.temperature must be non-negative");
  if (eval.settings.empty()) throw ConfigError("eval.settings is empty");
}

RemoteJudgeConfig RunConfig::remote_judge_config() const {
  RemoteJudgeConfig c;
  c.endpoint = judge.endpoint;
  c.timeout = std::chrono::milliseconds(judge.timeout_ms);
  c.max_attempts = judge.max_attempts;
  c.backoff = std::chrono::milliseconds(judge.backoff_ms);
  c.max_in_flight = judge.max_in_flight;
  return c;
}

RewardSettings RunConfig::reward_settings() const {
  RewardSettings s;
  s.coefficients = coefficients;
  return s;
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "paper") {
    return c;
  }
  if (name == "toy") {
    // The large-model learning rate leaves a desk-scale policy almost unchanged.
    c.trainer.lr = 1.0;
    return c;
  }
  throw ConfigError("unknown preset: " + name);
}

namespace {

// Reads known keys from one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key: " + path_ + "." + key);
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const char* key) const { return j_.at(key); }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Parse>
void get_enum(Section& s, const char* key, Parse parse) {
  std::string value;
  if (!s.has(key)) return;
  s.get(key, value);
  try {
    parse(value);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

}  // namespace

RunConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c = preset_config(doc.value("preset", std::string("toy")));
  Section root(doc, "config");
  root.get("preset", c.preset);
  root.get("seed", c.seed);

  if (root.has("paths")) {
    Section s(root.at("paths"), "paths");
    s.get("corpus", c.paths.corpus);
    s.get("heldout", c.paths.heldout);
    s.get("manifest", c.paths.manifest);
    s.get("output_dir", c.paths.output_dir);
  }
  if (root.has("world")) {
    Section s(root.at("world"), "world");
    s.get("n_tasks", c.world.n_tasks);
    s.get("weight_visual", c.world.weight_visual);
    s.get("weight_audio", c.world.weight_audio);
    s.get("weight_audio_visual", c.world.weight_audio_visual);
    s.get("min_duration", c.world.min_duration);
    s.get("max_duration", c.world.max_duration);
    s.get("gap_probability", c.world.gap_probability);
    s.get("corrupt_fraction", c.corrupt_fraction);
  }
  if (root.has("trainer")) {
    Section s(root.at("trainer"), "trainer");
    s.get("group_size", c.trainer.group_size);
    s.get("eps_low", c.trainer.eps_low);
    s.get("eps_high", c.trainer.eps_high);
    s.get("beta_kl", c.trainer.beta_kl);
    s.get("lr", c.trainer.lr);
    s.get("warmup_fraction", c.trainer.warmup_fraction);
    s.get("total_steps", c.trainer.total_steps);
    s.get("std_guard", c.trainer.std_guard);
    get_enum(s, "ratio_mode", [&](const std::string& v) { c.trainer.ratio_mode = parse_ratio_mode(v); });
    s.get("updates_per_batch", c.trainer.updates_per_batch);
  }
  c.stage.group_size = c.trainer.group_size;
  if (root.has("stage")) {
    Section s(root.at("stage"), "stage");
    get_enum(s, "stage", [&](const std::string& v) { c.stage.stage = parse_stage(v); });
    s.get("alpha", c.stage.alpha);
    s.get("judger", c.stage.judger);
    s.get("snapshot_cadence", c.stage.snapshot_cadence);
    s.get("prompts_per_step", c.stage.prompts_per_step);
    s.get("segment_slots", c.stage.segment_slots);
    s.get("temperature", c.stage.temperature);
    s.get("workers", c.stage.workers);
    s.get("checkpoint_every", c.stage.checkpoint_every);
  }
  if (root.has("rewards")) {
    Section s(root.at("rewards"), "rewards");
    s.get("format", c.coefficients.format);
    s.get("answer", c.coefficients.answer);
    s.get("intent", c.coefficients.intent);
    s.get("attention", c.coefficients.attention);
  }
  if (root.has("curation")) {
    Section s(root.at("curation"), "curation");
    s.get("weights", c.curation.weights);
    s.get("required_s_r", c.curation.required_s_r);
    s.get("min_s_q", c.curation.min_s_q);
    s.get("min_s_c", c.curation.min_s_c);
    s.get("min_category_count", c.curation.min_category_count);
    s.get("cap_ratio", c.curation.cap_ratio);
    s.get("global_cap", c.curation.global_cap);
    s.get("must_keep_s_a", c.curation.must_keep_s_a);
    s.get("must_keep_s_v", c.curation.must_keep_s_v);
    s.get("stage2_min_s_v", c.curation.stage2_min_s_v);
    s.get("stage2_min_s_a", c.curation.stage2_min_s_a);
    s.get("taxonomy", c.curation.taxonomy);
    s.get("template_labels", c.curation.template_labels);
  }
  if (root.has("judge")) {
    Section s(root.at("judge"), "judge");
    s.get("endpoint", c.judge.endpoint);
    s.get("timeout_ms", c.judge.timeout_ms);
    s.get("max_attempts", c.judge.max_attempts);
    s.get("backoff_ms", c.judge.backoff_ms);
    s.get("max_in_flight", c.judge.max_in_flight);
    s.get("transcript", c.judge.transcript);
  }
  if (root.has("eval")) {
    Section s(root.at("eval"), "eval");
    s.get("samples_per_task", c.eval.samples_per_task);
    s.get("temperature", c.eval.temperature);
    if (s.has("settings")) {
      std::vector<std::string> names;
      s.get("settings", names);
      c.eval.settings.clear();
      for (const auto& n : names) {
        try {
          c.eval.settings.push_back(parse_setting(n));
        } catch (const std::invalid_argument& e) {
          throw ConfigError(std::string("eval.settings: ") + e.what());
        }
      }
    }
  }
  if (root.has("model")) {
    Section s(root.at("model"), "model");
    s.get("global_batch_size", c.model.global_batch_size);
    s.get("max_seq_len", c.model.max_seq_len);
    s.get("moe_aux_loss_coeff", c.model.moe_aux_loss_coeff);
    s.get("fps_max_frames", c.model.fps_max_frames);
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(doc);
}

void write_resolved_config(const RunConfig& cfg, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_file((std::filesystem::path(dir) / "config.json").string(), cfg.to_json().dump(2) + "\n");
  write_file((std::filesystem::path(dir) / "config.sha256").string(), cfg.digest() + "\n");
}

}  // namespace avrl
