#pragma once

// Group sequence policy optimization.
//
// For a group of G responses to one prompt:
//
//   A_i = (R_i - mean R) / std R                       (population std)
//   s_i = exp( (1/|y_i|) sum_t log pi(y_it) / pi_old(y_it) )
//   P   = (1/G) sum_i min(s_i A_i, clip(s_i, 1 - eps_low, 1 + eps_high) A_i)
//
// The batch objective is the mean over groups of P - beta * KL, where KL is
// the mean per-token KL(pi || pi_ref) along each response's prefixes,
// averaged over the group's responses.

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "avrl/policy.hpp"
#include "avrl/reward.hpp"
#include "avrl/util.hpp"

namespace avrl {

class LengthMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class GroupTooSmall : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  NonFiniteGradient(const std::string& what, std::size_t group)
      : std::runtime_error(what), group_(group) {}
  std::size_t group() const { return group_; }

 private:
  std::size_t group_;
};

enum class RatioMode { kSequence, kToken };

std::string_view to_string(RatioMode m);
RatioMode parse_ratio_mode(std::string_view s);

struct TrainerConfig {
  std::size_t group_size = 8;
  double eps_low = 3e-4;
  double eps_high = 4e-4;
  double beta_kl = 0.03;
  double lr = 1e-6;
  double warmup_fraction = 0.05;
  std::size_t total_steps = 500;
  double std_guard = 1e-6;
  RatioMode ratio_mode = RatioMode::kSequence;
  // Gradient steps taken on each sampled batch.
  std::size_t updates_per_batch = 1;

  // Throws ConfigError.
  void validate() const;
};

struct PolicySnapshot {
  std::vector<double> params;
  std::uint64_t version = 0;
};

struct Response {
  std::vector<int> actions;
  std::vector<double> logp_old;
  double reward = 0.0;
  double advantage = 0.0;
  std::string text;
  RewardBreakdown breakdown;
};

struct RolloutGroup {
  std::string prompt_id;
  std::shared_ptr<const DecisionPrompt> prompt;
  std::vector<Response> responses;

  std::vector<double> rewards() const;
  // Fills every response's advantage from its reward.
  void assign_advantages(double std_guard);
};

// Throws LengthMismatch for unequal or empty inputs.
double sequence_importance_ratio(std::span<const double> logp_new, std::span<const double> logp_old);
std::vector<double> token_importance_ratios(std::span<const double> logp_new,
                                            std::span<const double> logp_old);

// Throws GroupTooSmall for fewer than two rewards. All zeros when the
// population std is below std_guard.
std::vector<double> group_advantages(std::span<const double> rewards, double std_guard);

// min(r A, clip(r, 1 - eps_low, 1 + eps_high) A)
double clipped_term(double ratio, double advantage, const TrainerConfig& cfg);

// The clipped branch is strictly smaller, so the term is flat in r.
bool clip_active(double ratio, double advantage, const TrainerConfig& cfg);

struct ObjectiveEvaluation {
  double surrogate = 0.0;  // mean over groups of P
  double kl = 0.0;         // mean over groups of the per-group KL
  double value = 0.0;      // surrogate - beta * kl
  double clip_fraction = 0.0;
  std::vector<double> gradient;  // empty unless requested
};

// reference may be null, in which case the KL term is zero.
ObjectiveEvaluation evaluate_objective(std::span<const RolloutGroup> groups,
                                       const FactoredCategoricalPolicy& policy,
                                       const FactoredCategoricalPolicy* reference,
                                       const TrainerConfig& cfg, bool with_gradient = true);

double clipped_objective(std::span<const RolloutGroup> groups, const FactoredCategoricalPolicy& policy,
                         const FactoredCategoricalPolicy* reference, const TrainerConfig& cfg);

std::vector<double> objective_gradient(std::span<const RolloutGroup> groups,
                                       const FactoredCategoricalPolicy& policy,
                                       const FactoredCategoricalPolicy* reference,
                                       const TrainerConfig& cfg);

// lr * min(1, step / (warmup_fraction * total_steps)); plain lr without warmup.
double learning_rate(const TrainerConfig& cfg, std::size_t step);

struct StepStats {
  std::size_t step = 0;
  double mean_reward = 0.0;
  double mean_abs_advantage = 0.0;
  double clip_fraction = 0.0;
  double kl = 0.0;
  double grad_norm = 0.0;
  double lr = 0.0;
  double objective = 0.0;
};

// Gradient ascent on the batch objective, updates_per_batch times. Throws
// NonFiniteGradient naming the first offending group; the policy is left
// unchanged in that case.
StepStats train_step(std::span<const RolloutGroup> groups, FactoredCategoricalPolicy& policy,
                     const FactoredCategoricalPolicy* reference, const TrainerConfig& cfg,
                     std::size_t step);

struct GradCheckResult {
  std::size_t cases = 0;
  std::size_t failures = 0;
  double max_relative_error = 0.0;
  std::size_t clipped_terms = 0;
  std::size_t unclipped_terms = 0;
};

// Relative error per component is |a - f| / max(|a|, |f|, floor).
inline constexpr double kGradCheckFloor = 1e-6;

struct GradCheckOptions {
  std::size_t cases = 100;
  std::uint64_t seed = 1;
  RatioMode mode = RatioMode::kSequence;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::size_t max_params = 50;
  // Test hook: scales the analytic gradient before comparison.
  double analytic_scale = 1.0;
};

// Random small policies and groups with ratios straddling the clip band;
// analytic gradient against central finite differences.
GradCheckResult run_grad_check(const GradCheckOptions& options);

}  // namespace avrl
