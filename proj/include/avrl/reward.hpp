#pragma once

// Per-rollout rewards for both training stages.
//
//   QI:  R = r_format + r_ans + (r_cons + r_comp) / 2
//   MA:  R = r_format + r_ans + r_attn,   r_attn in {0, alpha}
//
// Unparseable outputs earn nothing: every component and the total are zero.

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "avrl/judge.hpp"
#include "avrl/trace.hpp"

namespace avrl {

struct RewardBreakdown {
  double r_format = 0.0;
  double r_ans = 0.0;
  double r_cons = 0.0;
  double r_comp = 0.0;
  double r_intent = 0.0;
  double r_attn = 0.0;
  double total = 0.0;
  // Non-empty when process rewards were zeroed (e.g. span beyond content).
  std::string violation;

  friend bool operator==(const RewardBreakdown&, const RewardBreakdown&) = default;
};

void to_json(nlohmann::json& j, const RewardBreakdown& r);
void from_json(const nlohmann::json& j, RewardBreakdown& r);

// Balancing coefficients; all 1 by default.
struct RewardCoefficients {
  double format = 1.0;
  double answer = 1.0;
  double intent = 1.0;
  double attention = 1.0;
};

struct RewardSettings {
  RuleSet consistency_rules = default_consistency_rules();
  RuleSet completeness_rules = default_completeness_rules();
  RewardCoefficients coefficients;
};

// What a reward needs to know about the prompt.
struct RewardContext {
  std::string content_ref;
  double content_duration = 0.0;
  std::string question;
  std::string reference;
  std::vector<std::string> options;
};

// Mean consistency judgment over the trace's time/caption pairs.
double consistency_reward(const StructuredTrace& trace, const std::string& content_ref,
                          Judger& judger, const RuleSet& rules);

// Completeness judgment of the temporally ordered concatenation of the
// trace's spans. Throws IntervalError when a span exceeds the content.
double completeness_reward(const StructuredTrace& trace, const RewardContext& context,
                           Judger& judger, const RuleSet& rules);

RewardBreakdown qi_reward(std::string_view text, const RewardContext& context, Judger& judger,
                          const RewardSettings& settings = {});

// alpha when the full-modality score is at least each single-modality score.
double attention_reward(double full, double visual_only, double audio_only, double alpha);

// Same comparison over any number of single-modality scores.
double attention_reward(double full, const std::vector<double>& single_modality, double alpha);

RewardBreakdown ma_reward(std::string_view text, const RewardContext& context, double attention,
                          Judger& judger, const RewardSettings& settings = {});

}  // namespace avrl
