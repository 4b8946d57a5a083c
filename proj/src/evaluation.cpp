#include "avrl/evaluation.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "avrl/task_policy.hpp"
#include "avrl/util.hpp"

namespace avrl {

using nlohmann::json;

namespace {

json cell_json(const AccuracyCell& c) {
  return json{{"n", c.n}, {"correct", c.correct}, {"accuracy", c.accuracy()}};
}

json cells_json(const std::map<std::string, AccuracyCell>& cells) {
  json j = json::object();
  for (const auto& [k, c] : cells) j[k] = cell_json(c);
  return j;
}

}  // namespace

json EvalSummary::to_json() const {
  return json{{"rows", rows},
              {"overall", cell_json(overall)},
              {"by_requirement", cells_json(by_requirement)},
              {"by_setting", cells_json(by_setting)},
              {"by_requirement_setting", cells_json(by_requirement_setting)},
              {"mean_iou", mean_iou},
              {"mean_r_format", mean_r_format},
              {"mean_r_ans", mean_r_ans},
              {"mean_r_cons", mean_r_cons},
              {"mean_r_comp", mean_r_comp},
              {"mean_reward", mean_reward},
              {"skipped", skipped}};
}

EvalReport evaluate_policy(const std::vector<GeneratedTask>& tasks, const FactoredCategoricalPolicy& policy,
                           Judger& judger, const EvalOptions& options, const RewardSettings& rewards) {
  if (options.samples_per_task == 0) throw std::invalid_argument("samples_per_task must be positive");
  EvalReport report;
  EvalSummary& s = report.summary;
  std::size_t full_rows = 0;
  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    auto task = std::make_shared<const GeneratedTask>(tasks[ti]);
    for (ModalitySetting setting : options.settings) {
      std::unique_ptr<TaskPrompt> prompt;
      try {
        prompt = std::make_unique<TaskPrompt>(task, setting, options.segment_slots);
      } catch (const UnsupportedSetting&) {
        ++s.skipped;
        continue;
      }
      const RewardContext context = reward_context(*task, setting);
      for (std::size_t k = 0; k < options.samples_per_task; ++k) {
        std::vector<int> actions;
        if (options.scripted) {
          actions = prompt->scripted_actions();
        } else {
          Rng rng(derive_seed(options.seed, ti, static_cast<std::uint64_t>(setting), k));
          actions = policy.sample(*prompt, rng, options.temperature).actions;
        }
        EvalRow row;
        row.task_id = task->id;
        row.requirement = task->requirement;
        row.setting = setting;
        row.sample = k;
        row.prediction = prompt->chosen_letter(actions);
        row.correct = row.prediction == task->answer_key;
        row.iou = segment_iou(merge_overlaps(prompt->chosen_segments(actions)), task->ground_truth);
        row.breakdown = qi_reward(prompt->render_to_trace(actions), context, judger, rewards);
        report.rows.push_back(row);

        const std::string req(to_string(row.requirement));
        const std::string set(to_string(row.setting));
        for (AccuracyCell* c : {&s.overall, &s.by_requirement[req], &s.by_setting[set],
                                &s.by_requirement_setting[req + "/" + set]}) {
          ++c->n;
          c->correct += row.correct;
        }
        if (setting == ModalitySetting::kAudioVisual) {
          s.mean_iou += row.iou;
          ++full_rows;
        }
        s.mean_r_format += row.breakdown.r_format;
        s.mean_r_ans += row.breakdown.r_ans;
        s.mean_r_cons += row.breakdown.r_cons;
        s.mean_r_comp += row.breakdown.r_comp;
        s.mean_reward += row.breakdown.total;
      }
    }
  }
  s.rows = report.rows.size();
  if (full_rows) s.mean_iou /= static_cast<double>(full_rows);
  if (s.rows) {
    const double n = static_cast<double>(s.rows);
    s.mean_r_format /= n;
    s.mean_r_ans /= n;
    s.mean_r_cons /= n;
    s.mean_r_comp /= n;
    s.mean_reward /= n;
  }
  return report;
}

std::string eval_csv(const std::vector<EvalRow>& rows) {
  std::ostringstream os;
  os.precision(10);
  os << "task_id,requirement,setting,sample,prediction,correct,iou,r_format,r_ans,r_cons,r_comp,reward\n";
  for (const auto& r : rows) {
    os << r.task_id << ',' << to_string(r.requirement) << ',' << to_string(r.setting) << ','
       << r.sample << ',' << r.prediction << ',' << (r.correct ? 1 : 0) << ',' << r.iou << ','
       << r.breakdown.r_format << ',' << r.breakdown.r_ans << ',' << r.breakdown.r_cons << ','
       << r.breakdown.r_comp << ',' << r.breakdown.total << '\n';
  }
  return os.str();
}

std::pair<std::size_t, std::size_t> binomial_interval(std::size_t n, double p, double level) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("binomial p must lie in (0, 1)");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level must lie in (0, 1)");
  std::vector<double> pmf(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    const double logc = std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
                        std::lgamma(static_cast<double>(n - k) + 1.0);
    pmf[k] = std::exp(logc + static_cast<double>(k) * std::log(p) +
                      static_cast<double>(n - k) * std::log1p(-p));
  }
  const double tail = (1.0 - level) / 2.0;
  std::size_t lo = 0;
  double below = 0.0;  // P(X < lo)
  while (lo < n && below + pmf[lo] <= tail) below += pmf[lo++];
  std::size_t hi = n;
  double above = 0.0;  // P(X > hi)
  while (hi > 0 && above + pmf[hi] <= tail) above += pmf[hi--];
  return {lo, hi};
}

// ---------------------------------------------------------------------------

namespace {

void compare(const RewardBreakdown& logged, const RewardBreakdown& got, std::size_t line,
             std::vector<ReplayMismatch>& out) {
  const std::pair<const char*, double RewardBreakdown::*> fields[] = {
      {"r_format", &RewardBreakdown::r_format}, {"r_ans", &RewardBreakdown::r_ans},
      {"r_cons", &RewardBreakdown::r_cons},     {"r_comp", &RewardBreakdown::r_comp},
      {"r_intent", &RewardBreakdown::r_intent}, {"r_attn", &RewardBreakdown::r_attn},
      {"total", &RewardBreakdown::total}};
  for (const auto& [name, member] : fields) {
    if (logged.*member != got.*member) out.push_back({line, name, logged.*member, got.*member});
  }
  if (logged.violation != got.violation) {
    out.push_back({line, "violation", logged.violation.empty() ? 0.0 : 1.0, got.violation.empty() ? 0.0 : 1.0});
  }
}

}  // namespace

ReplayReport replay_rollouts(const std::vector<RolloutRecord>& records, Judger& judger,
                             const ContentStore& store, const ReplayOptions& options) {
  ReplayReport report;
  report.records = records.size();
  const double alpha = options.alpha.value_or(options.default_alpha);

  std::size_t i = 0;
  while (i < records.size()) {
    // A group is a run of consecutive records sharing (step, prompt).
    std::size_t j = i + 1;
    while (j < records.size() && records[j].step == records[i].step &&
           records[j].prompt_id == records[i].prompt_id && records[j].stage == records[i].stage) {
      ++j;
    }
    ++report.groups;
    const GeneratedTask& task = store.task(records[i].prompt_id);

    if (records[i].stage == Stage::kQI) {
      for (std::size_t k = i; k < j; ++k) {
        const auto& rec = records[k];
        if (!rec.judge_error.empty()) continue;
        const RewardBreakdown got =
            qi_reward(rec.raw_text, reward_context(task, rec.setting), judger, options.rewards);
        compare(rec.breakdown, got, k + 1, report.mismatches);
      }
    } else {
      std::array<double, 3> sums{};
      std::array<std::size_t, 3> counts{};
      std::vector<RewardBreakdown> base(j - i);
      for (std::size_t k = i; k < j; ++k) {
        const auto& rec = records[k];
        base[k - i] = ma_reward(rec.raw_text, reward_context(task, rec.setting), 0.0, judger, options.rewards);
        const auto s = static_cast<std::size_t>(rec.setting);
        sums[s] += base[k - i].r_ans;
        ++counts[s];
      }
      if (counts[0] == 0) throw std::runtime_error("MA group without full-modality rollouts at line " +
                                                   std::to_string(i + 1));
      std::vector<double> single;
      for (std::size_t s = 1; s < 3; ++s) {
        if (counts[s]) single.push_back(sums[s] / static_cast<double>(counts[s]));
      }
      const double attention = attention_reward(sums[0] / static_cast<double>(counts[0]), single, alpha);
      for (std::size_t k = i; k < j; ++k) {
        const auto& rec = records[k];
        if (!rec.judge_error.empty()) continue;
        const RewardBreakdown got =
            rec.setting == ModalitySetting::kAudioVisual
                ? ma_reward(rec.raw_text, reward_context(task, rec.setting), attention, judger, options.rewards)
                : base[k - i];
        compare(rec.breakdown, got, k + 1, report.mismatches);
      }
    }
    i = j;
  }
  return report;
}

}  // namespace avrl
