#pragma once

// Rollout collection and the two-stage training loop.
//
// QI: G rollouts per prompt on the full content, scored with the grounding
// reward. MA: G rollouts in each of the three modality settings; the mean
// answer score per setting decides the attention bonus, which every
// full-modality rollout receives. Only full-modality rollouts are trained on.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "avrl/gspo.hpp"
#include "avrl/judge.hpp"
#include "avrl/reward.hpp"
#include "avrl/task_policy.hpp"
#include "avrl/world.hpp"

namespace avrl {

enum class Stage { kQI, kMA };

std::string_view to_string(Stage s);
Stage parse_stage(std::string_view s);

struct StageConfig {
  Stage stage = Stage::kQI;
  std::size_t group_size = 8;
  double alpha = 0.3;
  std::string judger = "oracle";  // oracle | remote
  std::size_t snapshot_cadence = 1;
  std::size_t prompts_per_step = 32;
  std::size_t segment_slots = 2;
  double temperature = 1.0;
  std::size_t workers = 1;
  std::size_t checkpoint_every = 100;

  // Throws ConfigError.
  void validate(const TrainerConfig& trainer) const;
};

struct RolloutRecord {
  std::size_t step = 0;
  std::string prompt_id;
  Stage stage = Stage::kQI;
  ModalitySetting setting = ModalitySetting::kAudioVisual;
  std::size_t rollout_idx = 0;
  std::string raw_text;
  RewardBreakdown breakdown;
  double advantage = 0.0;
  double seq_ratio = 1.0;
  std::uint64_t snapshot_version = 0;
  std::vector<int> actions;
  std::vector<double> logp_old;
  std::string judge_error;
};

void to_json(nlohmann::json& j, const RolloutRecord& r);
void from_json(const nlohmann::json& j, RolloutRecord& r);

struct GroupResult {
  RolloutGroup group;                 // the rollouts that receive gradients
  std::vector<RolloutRecord> records; // every rollout, in (setting, index) order
  std::vector<std::shared_ptr<const TaskPrompt>> record_prompts;  // parallel to records
  // Mean answer score per setting (AV, V_ONLY, A_ONLY); empty when skipped.
  std::array<std::optional<double>, 3> setting_means{};
  double attention = 0.0;
  std::vector<double> ious;  // full-modality rollouts
};

// Prompt-level view of a task in one setting for reward computation.
RewardContext reward_context(const GeneratedTask& task, ModalitySetting setting);

class Orchestrator {
 public:
  Orchestrator(std::shared_ptr<Judger> judger, RewardSettings rewards, StageConfig stage,
               TrainerConfig trainer);

  // G rollouts sampled from the snapshot. Rollout i uses forced[i] instead
  // of a sample when given.
  GroupResult run_qi_group(const std::shared_ptr<const GeneratedTask>& task,
                           const PolicySnapshot& snapshot, Rng& rng,
                           std::span<const std::vector<int>> forced = {}) const;

  GroupResult run_ma_group(const std::shared_ptr<const GeneratedTask>& task,
                           const PolicySnapshot& snapshot, Rng& rng,
                           const std::array<std::span<const std::vector<int>>, 3>& forced = {}) const;

  GroupResult run_group(const std::shared_ptr<const GeneratedTask>& task,
                        const PolicySnapshot& snapshot, Rng& rng) const;

  const StageConfig& stage() const { return stage_; }
  const TrainerConfig& trainer() const { return trainer_; }
  const RewardSettings& rewards() const { return rewards_; }

 private:
  struct Scored {
    RewardBreakdown breakdown;
    std::string error;
  };
  Scored score(const std::string& text, const RewardContext& context, double attention) const;
  std::vector<Response> sample_responses(const TaskPrompt& prompt, const FactoredCategoricalPolicy& policy,
                                         Rng& rng, std::span<const std::vector<int>> forced) const;

  std::shared_ptr<Judger> judger_;
  RewardSettings rewards_;
  StageConfig stage_;
  TrainerConfig trainer_;
};

// Snapshot of the current parameters every `cadence` steps; otherwise the
// previous snapshot is kept.
PolicySnapshot snapshot_old_policy(const FactoredCategoricalPolicy& policy, std::size_t cadence,
                                   std::size_t step, const std::optional<PolicySnapshot>& previous);

struct Checkpoint {
  std::string stage;
  std::vector<std::size_t> block_dims;
  std::vector<double> params;
  PolicySnapshot snapshot;
  std::vector<double> reference;
  std::size_t next_step = 0;
  std::string config_digest;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct StepMetrics {
  StepStats stats;
  Stage stage = Stage::kQI;
  double mean_r_ans = 0.0;
  double mean_r_cons = 0.0;
  double mean_r_comp = 0.0;
  double mean_iou = 0.0;
  double attention_fraction = 0.0;
  std::array<double, 3> setting_accuracy{};  // MA only
  std::uint64_t snapshot_version = 0;
  double elapsed_seconds = 0.0;
};

nlohmann::json metrics_json(const StepMetrics& m);
std::string metrics_csv_header();
std::string metrics_csv_row(const StepMetrics& m);

struct TrainerRun {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  std::string config_digest;
  // Initial parameters; zeros (uniform policy) when empty.
  std::vector<double> init_params;
  std::optional<std::filesystem::path> resume_from;
  // Stop before this step even if total_steps is larger.
  std::optional<std::size_t> stop_at;
  bool write_rollouts = true;
};

class Trainer {
 public:
  Trainer(std::shared_ptr<const Orchestrator> orchestrator,
          std::vector<std::shared_ptr<const GeneratedTask>> corpus, TrainerRun run);

  // Runs the remaining steps. Returns the metrics of each step run.
  std::vector<StepMetrics> run(const std::function<void(const StepMetrics&)>& on_step = {});

  const FactoredCategoricalPolicy& policy() const { return policy_; }
  std::size_t next_step() const { return next_step_; }
  Checkpoint checkpoint() const;

 private:
  std::vector<std::size_t> draw_prompts(std::size_t step) const;

  std::shared_ptr<const Orchestrator> orch_;
  std::vector<std::shared_ptr<const GeneratedTask>> corpus_;
  TrainerRun run_;
  FactoredCategoricalPolicy policy_;
  FactoredCategoricalPolicy reference_;
  std::optional<PolicySnapshot> snapshot_;
  std::size_t next_step_ = 0;
};

std::vector<RolloutRecord> read_rollouts(const std::string& path);

}  // namespace avrl
