#include "avrl/reward.hpp"

#include <spdlog/spdlog.h>

namespace avrl {

using nlohmann::json;

void to_json(json& j, const RewardBreakdown& r) {
  j = json{{"r_format", r.r_format}, {"r_ans", r.r_ans},   {"r_cons", r.r_cons},
           {"r_comp", r.r_comp},     {"r_intent", r.r_intent}, {"r_attn", r.r_attn},
           {"total", r.total}};
  if (!r.violation.empty()) j["violation"] = r.violation;
}

void from_json(const json& j, RewardBreakdown& r) {
  r.r_format = j.at("r_format").get<double>();
  r.r_ans = j.at("r_ans").get<double>();
  r.r_cons = j.at("r_cons").get<double>();
  r.r_comp = j.at("r_comp").get<double>();
  r.r_intent = j.at("r_intent").get<double>();
  r.r_attn = j.at("r_attn").get<double>();
  r.total = j.at("total").get<double>();
  r.violation = j.value("violation", std::string());
}

double consistency_reward(const StructuredTrace& trace, const std::string& content_ref,
                          Judger& judger, const RuleSet& rules) {
  if (trace.pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& pair : trace.pairs) {
    sum += judger.judge_consistency(content_ref, pair.span, pair.caption, rules).value;
  }
  return sum / static_cast<double>(trace.pairs.size());
}

double completeness_reward(const StructuredTrace& trace, const RewardContext& context,
                           Judger& judger, const RuleSet& rules) {
  CropDirective crop{context.content_ref, context.content_duration, trace.spans()};
  const CompositeContentRef composite = temporal_concat(crop);
  return judger.judge_completeness(composite, context.question, trace.final_answer, rules).value;
}

namespace {

// Shared prefix of both stages: format gate and answer score.
std::optional<StructuredTrace> gate(std::string_view text, RewardBreakdown& out) {
  auto parsed = parse_trace(text);
  if (auto* trace = std::get_if<StructuredTrace>(&parsed)) {
    out.r_format = 1.0;
    return std::move(*trace);
  }
  return std::nullopt;
}

bool spans_within(const StructuredTrace& trace, double duration) {
  for (const auto& p : trace.pairs) {
    if (!p.span.within(duration)) return false;
  }
  return true;
}

}  // namespace

RewardBreakdown qi_reward(std::string_view text, const RewardContext& context, Judger& judger,
                          const RewardSettings& settings) {
  RewardBreakdown out;
  auto trace = gate(text, out);
  if (!trace) return out;
  out.r_ans = judger.judge_answer(context.question, trace->final_answer, context.reference,
                                  context.options).value;
  if (spans_within(*trace, context.content_duration)) {
    out.r_cons = consistency_reward(*trace, context.content_ref, judger, settings.consistency_rules);
    out.r_comp = completeness_reward(*trace, context, judger, settings.completeness_rules);
  } else {
    out.violation = "span beyond content duration";
    spdlog::warn("{}: {}; process rewards zeroed", context.content_ref, out.violation);
  }
  out.r_intent = 0.5 * (out.r_cons + out.r_comp);
  const auto& c = settings.coefficients;
  out.total = c.format * out.r_format + c.answer * out.r_ans + c.intent * out.r_intent;
  return out;
}

double attention_reward(double full, double visual_only, double audio_only, double alpha) {
  return full >= visual_only && full >= audio_only ? alpha : 0.0;
}

double attention_reward(double full, const std::vector<double>& single_modality, double alpha) {
  for (double s : single_modality) {
    if (!(full >= s)) return 0.0;
  }
  return alpha;
}

RewardBreakdown ma_reward(std::string_view text, const RewardContext& context, double attention,
                          Judger& judger, const RewardSettings& settings) {
  RewardBreakdown out;
  auto trace = gate(text, out);
  if (!trace) return out;
  out.r_ans = judger.judge_answer(context.question, trace->final_answer, context.reference,
                                  context.options).value;
  out.r_attn = attention;
  const auto& c = settings.coefficients;
  out.total = c.format * out.r_format + c.answer * out.r_ans + c.attention * out.r_attn;
  return out;
}

}  // namespace avrl
