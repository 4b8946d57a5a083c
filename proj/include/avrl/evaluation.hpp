#pragma once

// Held-out evaluation and rollout-log replay.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "avrl/judge.hpp"
#include "avrl/orchestrator.hpp"
#include "avrl/policy.hpp"
#include "avrl/reward.hpp"
#include "avrl/world.hpp"

namespace avrl {

struct EvalOptions {
  std::uint64_t seed = 0;
  std::vector<ModalitySetting> settings{ModalitySetting::kAudioVisual};
  std::size_t samples_per_task = 1;
  // 0 evaluates the argmax sequence.
  double temperature = 1.0;
  std::size_t segment_slots = 2;
  // Use each task's scripted (ideal) actions instead of the policy.
  bool scripted = false;
};

struct EvalRow {
  std::string task_id;
  ModalityRequirement requirement = ModalityRequirement::kVisual;
  ModalitySetting setting = ModalitySetting::kAudioVisual;
  std::size_t sample = 0;
  char prediction = 'A';
  bool correct = false;
  double iou = 0.0;
  RewardBreakdown breakdown;  // grounding reward of the rendered trace
};

struct AccuracyCell {
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy() const { return n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0; }
};

struct EvalSummary {
  std::size_t rows = 0;
  AccuracyCell overall;
  std::map<std::string, AccuracyCell> by_requirement;
  std::map<std::string, AccuracyCell> by_setting;
  std::map<std::string, AccuracyCell> by_requirement_setting;  // "<req>/<setting>"
  double mean_iou = 0.0;  // full-modality rows
  double mean_r_format = 0.0;
  double mean_r_ans = 0.0;
  double mean_r_cons = 0.0;
  double mean_r_comp = 0.0;
  double mean_reward = 0.0;
  std::size_t skipped = 0;  // task/setting pairs the content cannot support

  nlohmann::json to_json() const;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  EvalSummary summary;
};

EvalReport evaluate_policy(const std::vector<GeneratedTask>& tasks, const FactoredCategoricalPolicy& policy,
                           Judger& judger, const EvalOptions& options,
                           const RewardSettings& rewards = {});

std::string eval_csv(const std::vector<EvalRow>& rows);

// Exact two-sided binomial acceptance region [lo, hi] for the success count
// with at most (1 - level)/2 probability in each tail.
std::pair<std::size_t, std::size_t> binomial_interval(std::size_t n, double p, double level);

struct ReplayMismatch {
  std::size_t line = 0;  // 1-based line in the rollout log
  std::string field;
  double logged = 0.0;
  double recomputed = 0.0;
};

struct ReplayOptions {
  std::optional<double> alpha;  // override of the logged run's alpha
  double default_alpha = 0.3;
  RewardSettings rewards;
};

struct ReplayReport {
  std::size_t records = 0;
  std::size_t groups = 0;
  std::vector<ReplayMismatch> mismatches;
};

// Re-scores every logged rollout and compares all breakdown fields exactly.
// MA attention rewards are recomputed from the logged unimodal rollouts.
ReplayReport replay_rollouts(const std::vector<RolloutRecord>& records, Judger& judger,
                             const ContentStore& store, const ReplayOptions& options);

}  // namespace avrl
