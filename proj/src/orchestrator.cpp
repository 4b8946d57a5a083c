#include "avrl/orchestrator.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>

#include "avrl/util.hpp"

namespace avrl {

using nlohmann::json;

std::string_view to_string(Stage s) { return s == Stage::kQI ? "qi" : "ma"; }

Stage parse_stage(std::string_view s) {
  if (s == "qi" || s == "QI") return Stage::kQI;
  if (s == "ma" || s == "MA") return Stage::kMA;
  throw ConfigError("unknown stage: " + std::string(s));
}

void StageConfig::validate(const TrainerConfig& trainer) const {
  if (group_size != trainer.group_size) {
    throw ConfigError("stage group_size must match the trainer group_size");
  }
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be finite and non-negative");
  if (judger != "oracle" && judger != "remote") throw ConfigError("judger must be oracle or remote");
  if (snapshot_cadence < 1) throw ConfigError("snapshot_cadence must be at least 1");
  if (prompts_per_step < 1) throw ConfigError("prompts_per_step must be at least 1");
  if (segment_slots < 1) throw ConfigError("segment_slots must be at least 1");
  if (!(temperature > 0.0)) throw ConfigError("training temperature must be positive");
  if (workers < 1) throw ConfigError("workers must be at least 1");
}

void to_json(json& j, const RolloutRecord& r) {
  j = json{{"step", r.step},
           {"prompt_id", r.prompt_id},
           {"stage", to_string(r.stage)},
           {"setting", to_string(r.setting)},
           {"rollout_idx", r.rollout_idx},
           {"raw_text", r.raw_text},
           {"breakdown", r.breakdown},
           {"advantage", r.advantage},
           {"seq_ratio", r.seq_ratio},
           {"snapshot_version", r.snapshot_version},
           {"actions", r.actions},
           {"logp_old", r.logp_old}};
  if (!r.judge_error.empty()) j["judge_error"] = r.judge_error;
}

void from_json(const json& j, RolloutRecord& r) {
  r.step = j.at("step").get<std::size_t>();
  r.prompt_id = j.at("prompt_id").get<std::string>();
  r.stage = parse_stage(j.at("stage").get<std::string>());
  r.setting = parse_setting(j.at("setting").get<std::string>());
  r.rollout_idx = j.at("rollout_idx").get<std::size_t>();
  r.raw_text = j.at("raw_text").get<std::string>();
  r.breakdown = j.at("breakdown").get<RewardBreakdown>();
  r.advantage = j.at("advantage").get<double>();
  r.seq_ratio = j.at("seq_ratio").get<double>();
  r.snapshot_version = j.at("snapshot_version").get<std::uint64_t>();
  r.actions = j.at("actions").get<std::vector<int>>();
  r.logp_old = j.at("logp_old").get<std::vector<double>>();
  r.judge_error = j.value("judge_error", std::string());
}

RewardContext reward_context(const GeneratedTask& task, ModalitySetting setting) {
  return RewardContext{ablated_ref(task.id, setting), task.content.duration, task.question,
                       std::string(1, task.answer_key), task.option_list()};
}

Orchestrator::Orchestrator(std::shared_ptr<Judger> judger, RewardSettings rewards, StageConfig stage,
                           TrainerConfig trainer)
    : judger_(std::move(judger)),
      rewards_(std::move(rewards)),
      stage_(std::move(stage)),
      trainer_(std::move(trainer)) {
  if (!judger_) throw std::invalid_argument("orchestrator needs a judger");
  trainer_.validate();
  stage_.validate(trainer_);
}

Orchestrator::Scored Orchestrator::score(const std::string& text, const RewardContext& context,
                                         double attention) const {
  Scored out;
  try {
    out.breakdown = stage_.stage == Stage::kQI ? qi_reward(text, context, *judger_, rewards_)
                                               : ma_reward(text, context, attention, *judger_, rewards_);
  } catch (const JudgeUnavailable& e) {
    out.breakdown = RewardBreakdown{};
    out.error = e.what();
  } catch (const ProtocolError& e) {
    out.breakdown = RewardBreakdown{};
    out.error = e.what();
  }
  if (!out.error.empty()) spdlog::warn("{}: judge failed ({}); rollout reward set to 0", context.content_ref, out.error);
  return out;
}

std::vector<Response> Orchestrator::sample_responses(const TaskPrompt& prompt,
                                                     const FactoredCategoricalPolicy& policy, Rng& rng,
                                                     std::span<const std::vector<int>> forced) const {
  std::vector<Response> out(stage_.group_size);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i < forced.size() && !forced[i].empty()) {
      out[i].actions = forced[i];
      out[i].logp_old = policy.logprob(prompt, out[i].actions);
    } else {
      PolicySample s = policy.sample(prompt, rng, stage_.temperature);
      out[i].actions = std::move(s.actions);
      // Sampling at another temperature still records the policy's own log-probs.
      out[i].logp_old = stage_.temperature == 1.0 ? std::move(s.logprobs)
                                                  : policy.logprob(prompt, out[i].actions);
    }
    out[i].text = prompt.render_to_trace(out[i].actions);
  }
  return out;
}

namespace {

FactoredCategoricalPolicy snapshot_policy(const PolicySnapshot& snapshot) {
  return FactoredCategoricalPolicy(task_policy_layout(), snapshot.params);
}

RolloutRecord make_record(const GeneratedTask& task, Stage stage, ModalitySetting setting,
                          std::size_t idx, const Response& r, std::uint64_t version,
                          const std::string& error) {
  RolloutRecord rec;
  rec.prompt_id = task.id;
  rec.stage = stage;
  rec.setting = setting;
  rec.rollout_idx = idx;
  rec.raw_text = r.text;
  rec.breakdown = r.breakdown;
  rec.advantage = r.advantage;
  rec.snapshot_version = version;
  rec.actions = r.actions;
  rec.logp_old = r.logp_old;
  rec.judge_error = error;
  return rec;
}

}  // namespace

GroupResult Orchestrator::run_qi_group(const std::shared_ptr<const GeneratedTask>& task,
                                       const PolicySnapshot& snapshot, Rng& rng,
                                       std::span<const std::vector<int>> forced) const {
  if (stage_.stage != Stage::kQI) throw std::logic_error("run_qi_group called outside the QI stage");
  const auto policy = snapshot_policy(snapshot);
  auto prompt = std::make_shared<const TaskPrompt>(task, ModalitySetting::kAudioVisual, stage_.segment_slots);
  const RewardContext context = reward_context(*task, ModalitySetting::kAudioVisual);

  GroupResult out;
  out.group.prompt_id = task->id;
  out.group.prompt = prompt;
  out.group.responses = sample_responses(*prompt, policy, rng, forced);
  std::vector<std::string> errors;
  for (auto& r : out.group.responses) {
    Scored s = score(r.text, context, 0.0);
    r.breakdown = s.breakdown;
    r.reward = s.breakdown.total;
    errors.push_back(std::move(s.error));
    out.ious.push_back(segment_iou(merge_overlaps(prompt->chosen_segments(r.actions)), task->ground_truth));
  }
  out.group.assign_advantages(trainer_.std_guard);
  double sum = 0.0;
  for (std::size_t i = 0; i < out.group.responses.size(); ++i) {
    const auto& r = out.group.responses[i];
    sum += r.breakdown.r_ans;
    out.records.push_back(make_record(*task, Stage::kQI, ModalitySetting::kAudioVisual, i, r,
                                      snapshot.version, errors[i]));
    out.record_prompts.push_back(prompt);
  }
  out.setting_means[0] = sum / static_cast<double>(out.group.responses.size());
  return out;
}

GroupResult Orchestrator::run_ma_group(const std::shared_ptr<const GeneratedTask>& task,
                                       const PolicySnapshot& snapshot, Rng& rng,
                                       const std::array<std::span<const std::vector<int>>, 3>& forced) const {
  if (stage_.stage != Stage::kMA) throw std::logic_error("run_ma_group called outside the MA stage");
  const auto policy = snapshot_policy(snapshot);

  struct SettingRun {
    ModalitySetting setting;
    std::shared_ptr<const TaskPrompt> prompt;
    RewardContext context;
    std::vector<Response> responses;
    std::vector<std::string> errors;
  };
  std::vector<SettingRun> runs;
  GroupResult out;
  for (std::size_t k = 0; k < kAllSettings.size(); ++k) {
    const ModalitySetting setting = kAllSettings[k];
    std::shared_ptr<const TaskPrompt> prompt;
    try {
      prompt = std::make_shared<const TaskPrompt>(task, setting, stage_.segment_slots);
    } catch (const UnsupportedSetting& e) {
      if (setting == ModalitySetting::kAudioVisual) throw;
      spdlog::debug("{}: {} skipped ({})", task->id, to_string(setting), e.what());
      continue;
    }
    SettingRun run{setting, prompt, reward_context(*task, setting), {}, {}};
    run.responses = sample_responses(*prompt, policy, rng, forced[k]);
    double sum = 0.0;
    for (auto& r : run.responses) {
      Scored s = score(r.text, run.context, 0.0);
      r.breakdown = s.breakdown;
      r.reward = s.breakdown.total;
      run.errors.push_back(std::move(s.error));
      sum += s.breakdown.r_ans;
    }
    out.setting_means[k] = sum / static_cast<double>(run.responses.size());
    runs.push_back(std::move(run));
  }

  std::vector<double> single;
  for (std::size_t k = 1; k < out.setting_means.size(); ++k) {
    if (out.setting_means[k]) single.push_back(*out.setting_means[k]);
  }
  out.attention = attention_reward(*out.setting_means[0], single, stage_.alpha);

  SettingRun& full = runs.front();
  for (std::size_t i = 0; i < full.responses.size(); ++i) {
    auto& r = full.responses[i];
    if (full.errors[i].empty()) {
      Scored s = score(r.text, full.context, out.attention);
      r.breakdown = s.breakdown;
      r.reward = s.breakdown.total;
      full.errors[i] = s.error;
    }
    out.ious.push_back(segment_iou(merge_overlaps(full.prompt->chosen_segments(r.actions)), task->ground_truth));
  }
  out.group.prompt_id = task->id;
  out.group.prompt = full.prompt;
  out.group.responses = full.responses;
  out.group.assign_advantages(trainer_.std_guard);
  full.responses = out.group.responses;

  for (const auto& run : runs) {
    for (std::size_t i = 0; i < run.responses.size(); ++i) {
      out.records.push_back(make_record(*task, Stage::kMA, run.setting, i, run.responses[i],
                                        snapshot.version, run.errors[i]));
      out.record_prompts.push_back(run.prompt);
    }
  }
  return out;
}

GroupResult Orchestrator::run_group(const std::shared_ptr<const GeneratedTask>& task,
                                    const PolicySnapshot& snapshot, Rng& rng) const {
  return stage_.stage == Stage::kQI ? run_qi_group(task, snapshot, rng) : run_ma_group(task, snapshot, rng);
}

PolicySnapshot snapshot_old_policy(const FactoredCategoricalPolicy& policy, std::size_t cadence,
                                   std::size_t step, const std::optional<PolicySnapshot>& previous) {
  if (cadence == 0) throw ConfigError("snapshot cadence must be at least 1");
  if (previous && step % cadence != 0) return *previous;
  return PolicySnapshot{policy.params(), previous ? previous->version + 1 : 1};
}

// ---------------------------------------------------------------------------

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  json j{{"format", "avrl-checkpoint-1"},
         {"stage", c.stage},
         {"schema", FeatureLayout{c.block_dims}.describe()},
         {"block_dims", c.block_dims},
         {"params", c.params},
         {"snapshot", {{"params", c.snapshot.params}, {"version", c.snapshot.version}}},
         {"reference", c.reference},
         {"next_step", c.next_step},
         {"config_digest", c.config_digest}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  write_file(tmp, j.dump() + "\n");
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path.string()));
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint " + path.string() + ": " + e.what());
  }
  if (j.value("format", std::string()) != "avrl-checkpoint-1") {
    throw std::runtime_error("checkpoint " + path.string() + ": unknown format");
  }
  Checkpoint c;
  c.stage = j.at("stage").get<std::string>();
  c.block_dims = j.at("block_dims").get<std::vector<std::size_t>>();
  c.params = j.at("params").get<std::vector<double>>();
  c.snapshot.params = j.at("snapshot").at("params").get<std::vector<double>>();
  c.snapshot.version = j.at("snapshot").at("version").get<std::uint64_t>();
  c.reference = j.at("reference").get<std::vector<double>>();
  c.next_step = j.at("next_step").get<std::size_t>();
  c.config_digest = j.at("config_digest").get<std::string>();
  const FeatureLayout layout{c.block_dims};
  if (c.params.size() != layout.total() || c.reference.size() != layout.total() ||
      (!c.snapshot.params.empty() && c.snapshot.params.size() != layout.total())) {
    throw SchemaMismatch("checkpoint " + path.string() + ": parameter count does not match its schema");
  }
  return c;
}

// ---------------------------------------------------------------------------

json metrics_json(const StepMetrics& m) {
  json j{{"step", m.stats.step},
         {"stage", to_string(m.stage)},
         {"mean_reward", m.stats.mean_reward},
         {"mean_abs_advantage", m.stats.mean_abs_advantage},
         {"clip_fraction", m.stats.clip_fraction},
         {"kl", m.stats.kl},
         {"grad_norm", m.stats.grad_norm},
         {"lr", m.stats.lr},
         {"objective", m.stats.objective},
         {"mean_r_ans", m.mean_r_ans},
         {"mean_r_cons", m.mean_r_cons},
         {"mean_r_comp", m.mean_r_comp},
         {"mean_iou", m.mean_iou},
         {"snapshot_version", m.snapshot_version}};
  if (m.stage == Stage::kMA) {
    j["attention_fraction"] = m.attention_fraction;
    j["accuracy_av"] = m.setting_accuracy[0];
    j["accuracy_v_only"] = m.setting_accuracy[1];
    j["accuracy_a_only"] = m.setting_accuracy[2];
  }
  return j;
}

std::string metrics_csv_header() {
  return "step,stage,mean_reward,mean_abs_advantage,clip_fraction,kl,grad_norm,lr,objective,"
         "mean_r_ans,mean_r_cons,mean_r_comp,mean_iou,attention_fraction,accuracy_av,"
         "accuracy_v_only,accuracy_a_only,snapshot_version";
}

std::string metrics_csv_row(const StepMetrics& m) {
  std::ostringstream os;
  os.precision(10);
  os << m.stats.step << ',' << to_string(m.stage) << ',' << m.stats.mean_reward << ','
     << m.stats.mean_abs_advantage << ',' << m.stats.clip_fraction << ',' << m.stats.kl << ','
     << m.stats.grad_norm << ',' << m.stats.lr << ',' << m.stats.objective << ',' << m.mean_r_ans << ','
     << m.mean_r_cons << ',' << m.mean_r_comp << ',' << m.mean_iou << ',' << m.attention_fraction << ','
     << m.setting_accuracy[0] << ',' << m.setting_accuracy[1] << ',' << m.setting_accuracy[2] << ','
     << m.snapshot_version;
  return os.str();
}

// ---------------------------------------------------------------------------

Trainer::Trainer(std::shared_ptr<const Orchestrator> orchestrator,
                 std::vector<std::shared_ptr<const GeneratedTask>> corpus, TrainerRun run)
    : orch_(std::move(orchestrator)),
      corpus_(std::move(corpus)),
      run_(std::move(run)),
      policy_(task_policy_layout()),
      reference_(task_policy_layout()) {
  if (!orch_) throw std::invalid_argument("trainer needs an orchestrator");
  if (corpus_.empty()) throw std::invalid_argument("training corpus is empty");
  if (run_.resume_from) {
    const Checkpoint c = load_checkpoint(*run_.resume_from);
    if (c.config_digest != run_.config_digest) {
      throw std::runtime_error("checkpoint was written under a different configuration");
    }
    if (FeatureLayout{c.block_dims} != task_policy_layout()) {
      throw SchemaMismatch("checkpoint schema does not match the task policy");
    }
    policy_.set_params(c.params);
    reference_.set_params(c.reference);
    if (!c.snapshot.params.empty()) snapshot_ = c.snapshot;
    next_step_ = c.next_step;
  } else if (!run_.init_params.empty()) {
    policy_.set_params(run_.init_params);
    reference_.set_params(run_.init_params);
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.stage = std::string(to_string(orch_->stage().stage));
  c.block_dims = policy_.layout().block_dims;
  c.params = policy_.params();
  if (snapshot_) c.snapshot = *snapshot_;
  c.reference = reference_.params();
  c.next_step = next_step_;
  c.config_digest = run_.config_digest;
  return c;
}

std::vector<std::size_t> Trainer::draw_prompts(std::size_t step) const {
  std::vector<std::size_t> idx(corpus_.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t k = std::min(orch_->stage().prompts_per_step, idx.size());
  Rng rng(derive_seed(run_.seed, step, 0, 0x70726f6d));
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + std::uniform_int_distribution<std::size_t>(0, idx.size() - 1 - i)(rng);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

namespace {

// Drops log lines written after the checkpoint a run resumes from.
void trim_log(const std::filesystem::path& path, std::size_t next_step, bool csv) {
  if (!std::filesystem::exists(path)) return;
  std::ifstream in(path);
  std::string kept;
  std::string line;
  bool header = csv;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t step = 0;
    if (header) {
      header = false;
    } else if (csv) {
      step = std::stoull(line.substr(0, line.find(',')));
    } else {
      step = json::parse(line).at("step").get<std::size_t>();
    }
    if (step < next_step) kept += line + '\n';
  }
  in.close();
  write_file(path.string(), kept);
}

}  // namespace

std::vector<StepMetrics> Trainer::run(const std::function<void(const StepMetrics&)>& on_step) {
  const StageConfig& sc = orch_->stage();
  const TrainerConfig& tc = orch_->trainer();
  const std::size_t stop = std::min(tc.total_steps, run_.stop_at.value_or(tc.total_steps));
  std::vector<StepMetrics> all;

  const bool appending = run_.resume_from.has_value();
  std::ofstream rollouts;
  std::ofstream metrics_csv;
  std::ofstream metrics_jsonl;
  if (!run_.output_dir.empty()) {
    std::filesystem::create_directories(run_.output_dir);
    if (appending) {
      trim_log(run_.output_dir / "rollouts.jsonl", next_step_, false);
      trim_log(run_.output_dir / "metrics.csv", next_step_, true);
      trim_log(run_.output_dir / "metrics.jsonl", next_step_, false);
    }
    const auto mode = appending ? std::ios::app : std::ios::trunc;
    if (run_.write_rollouts) rollouts.open(run_.output_dir / "rollouts.jsonl", std::ios::out | mode);
    const bool fresh_csv = !appending || !std::filesystem::exists(run_.output_dir / "metrics.csv");
    metrics_csv.open(run_.output_dir / "metrics.csv", std::ios::out | mode);
    metrics_jsonl.open(run_.output_dir / "metrics.jsonl", std::ios::out | mode);
    if (fresh_csv) metrics_csv << metrics_csv_header() << '\n';
  }

  for (std::size_t step = next_step_; step < stop; ++step) {
    const auto started = std::chrono::steady_clock::now();
    snapshot_ = snapshot_old_policy(policy_, sc.snapshot_cadence, step, snapshot_);
    const auto indices = draw_prompts(step);

    std::vector<GroupResult> results(indices.size());
    auto work = [&](std::size_t j) {
      Rng rng(derive_seed(run_.seed, step, j + 1, static_cast<std::uint64_t>(sc.stage)));
      results[j] = orch_->run_group(corpus_[indices[j]], *snapshot_, rng);
    };
    if (sc.workers <= 1) {
      for (std::size_t j = 0; j < indices.size(); ++j) work(j);
    } else {
      std::vector<std::future<void>> pending;
      const std::size_t per = (indices.size() + sc.workers - 1) / sc.workers;
      for (std::size_t w = 0; w < sc.workers; ++w) {
        const std::size_t lo = w * per;
        const std::size_t hi = std::min(indices.size(), lo + per);
        if (lo >= hi) break;
        pending.push_back(std::async(std::launch::async, [&, lo, hi] {
          for (std::size_t j = lo; j < hi; ++j) work(j);
        }));
      }
      for (auto& f : pending) f.get();
    }

    std::vector<RolloutGroup> groups;
    groups.reserve(results.size());
    for (auto& r : results) groups.push_back(r.group);

    StepMetrics m;
    m.stage = sc.stage;
    m.snapshot_version = snapshot_->version;
    std::size_t n_trained = 0;
    std::array<std::size_t, 3> setting_counts{};
    for (auto& r : results) {
      for (std::size_t i = 0; i < r.records.size(); ++i) {
        auto& rec = r.records[i];
        rec.step = step;
        const auto lp = policy_.logprob(*r.record_prompts[i], rec.actions);
        rec.seq_ratio = sequence_importance_ratio(lp, rec.logp_old);
      }
      for (const auto& resp : r.group.responses) {
        m.mean_r_ans += resp.breakdown.r_ans;
        m.mean_r_cons += resp.breakdown.r_cons;
        m.mean_r_comp += resp.breakdown.r_comp;
        ++n_trained;
      }
      for (double iou : r.ious) m.mean_iou += iou;
      if (r.attention > 0.0) m.attention_fraction += 1.0;
      for (std::size_t k = 0; k < 3; ++k) {
        if (r.setting_means[k]) {
          m.setting_accuracy[k] += *r.setting_means[k];
          ++setting_counts[k];
        }
      }
    }
    if (n_trained > 0) {
      const double n = static_cast<double>(n_trained);
      m.mean_r_ans /= n;
      m.mean_r_cons /= n;
      m.mean_r_comp /= n;
      m.mean_iou /= n;
    }
    m.attention_fraction /= static_cast<double>(results.size());
    for (std::size_t k = 0; k < 3; ++k) {
      if (setting_counts[k]) m.setting_accuracy[k] /= static_cast<double>(setting_counts[k]);
    }

    try {
      m.stats = train_step(groups, policy_, &reference_, tc, step);
    } catch (const NonFiniteGradient&) {
      if (!run_.output_dir.empty()) save_checkpoint(checkpoint(), run_.output_dir / "checkpoint.json");
      throw;
    }
    next_step_ = step + 1;
    m.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    if (rollouts.is_open()) {
      for (const auto& r : results) {
        for (const auto& rec : r.records) rollouts << json(rec).dump() << '\n';
      }
    }
    if (metrics_csv.is_open()) {
      metrics_csv << metrics_csv_row(m) << '\n';
      metrics_jsonl << metrics_json(m).dump() << '\n';
    }
    const bool last = next_step_ == stop;
    if (!run_.output_dir.empty() &&
        (last || (sc.checkpoint_every > 0 && next_step_ % sc.checkpoint_every == 0))) {
      rollouts.flush();
      metrics_csv.flush();
      metrics_jsonl.flush();
      const Checkpoint c = checkpoint();
      char name[32];
      std::snprintf(name, sizeof name, "step-%06zu.json", next_step_);
      save_checkpoint(c, run_.output_dir / "checkpoints" / name);
      save_checkpoint(c, run_.output_dir / "checkpoint.json");
    }
    spdlog::debug("{} step {}: reward {:.4f} iou {:.3f} ({:.2f}s)", to_string(sc.stage), step,
                  m.stats.mean_reward, m.mean_iou, m.elapsed_seconds);
    if (on_step) on_step(m);
    all.push_back(m);
  }
  return all;
}

std::vector<RolloutRecord> read_rollouts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open rollout log " + path);
  std::vector<RolloutRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line).get<RolloutRecord>());
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace avrl
