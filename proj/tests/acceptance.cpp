// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit when any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "avrl/config.hpp"
#include "avrl/curation.hpp"
#include "avrl/evaluation.hpp"
#include "avrl/gspo.hpp"
#include "avrl/interval.hpp"
#include "avrl/orchestrator.hpp"
#include "avrl/reward.hpp"
#include "avrl/util.hpp"
#include "oracles.hpp"
#include "reward_cases.hpp"

using namespace avrl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<std::shared_ptr<const GeneratedTask>> shared_tasks(const std::vector<GeneratedTask>& tasks) {
  std::vector<std::shared_ptr<const GeneratedTask>> out;
  for (const auto& t : tasks) out.push_back(std::make_shared<const GeneratedTask>(t));
  return out;
}

// ---------------------------------------------------------------------------

Outcome gradient_check() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t failures = 0, clipped = 0, unclipped = 0;
  for (auto mode : {RatioMode::kSequence, RatioMode::kToken}) {
    GradCheckOptions opt;
    opt.cases = 100;
    opt.mode = mode;
    opt.seed = 2024;
    const auto r = run_grad_check(opt);
    worst = std::max(worst, r.max_relative_error);
    failures += r.failures;
    clipped += r.clipped_terms;
    unclipped += r.unclipped_terms;
  }
  const double elapsed = seconds_since(t0);
  return {failures == 0 && worst < 1e-4 && elapsed < 60.0 && clipped > 0 && unclipped > 0,
          fmt::format("max rel err {:.2e}, {} clipped / {} unclipped terms, {:.1f}s", worst, clipped, unclipped,
                      elapsed)};
}

Outcome advantage_normalization() {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  double worst_sum = 0.0, worst_std = 0.0;
  std::size_t guarded = 0;
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> rewards(8);
    for (auto& r : rewards) r = u(rng);
    if (oracle::mean_pop_std(rewards).second < 1e-6) {
      ++guarded;
      continue;
    }
    const auto adv = group_advantages(rewards, 1e-6);
    const auto [mean, sd] = oracle::mean_pop_std(adv);
    worst_sum = std::max(worst_sum, std::abs(mean * 8.0));
    worst_std = std::max(worst_std, std::abs(sd - 1.0));
  }
  bool zero_ok = true;
  for (double v : {0.0, 1.0, 2.3, 3.0}) {
    for (double a : group_advantages(std::vector<double>(8, v), 1e-6)) zero_ok = zero_ok && a == 0.0;
  }
  return {worst_sum <= 1e-12 && worst_std <= 1e-12 && zero_ok && guarded == 0,
          fmt::format("max |sum| {:.1e}, max |std-1| {:.1e}, zero-variance groups {}", worst_sum, worst_std,
                      zero_ok ? "all zero" : "NONZERO")};
}

Outcome ratio_identities() {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(-8.0, 0.0);
  bool exact = true;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> lp(1 + rng() % 40);
    for (auto& v : lp) v = u(rng);
    exact = exact && sequence_importance_ratio(lp, lp) == 1.0;
  }
  const std::vector<double> num{std::log(2.0), std::log(0.5)}, zero{0.0, 0.0};
  const double sym = sequence_importance_ratio(num, zero);

  TrainerConfig cfg;
  cfg.beta_kl = 0.0;
  const bool band = cfg.eps_low == 3e-4 && cfg.eps_high == 4e-4;
  // A response sampled from old parameters, scored under parameters that make
  // it more likely: s > 1 + eps_high with a positive advantage.
  auto prompt = std::make_shared<StaticPrompt>(
      std::vector<CandidateSet>{CandidateSet{0, {{1.0, 0.0}, {0.0, 1.0}}}, CandidateSet{0, {{1.0, 0.0}, {0.0, 1.0}}}});
  FactoredCategoricalPolicy old(FeatureLayout{{2}}, {0.0, 0.0});
  FactoredCategoricalPolicy pi(FeatureLayout{{2}}, {0.5, -0.5});
  RolloutGroup g;
  g.prompt_id = "p";
  g.prompt = prompt;
  for (auto [a, r] : std::vector<std::pair<int, double>>{{0, 1.0}, {1, 0.0}}) {
    Response resp;
    resp.actions = {a, a};
    resp.logp_old = old.logprob(*prompt, resp.actions);
    resp.reward = r;
    g.responses.push_back(resp);
  }
  g.assign_advantages(cfg.std_guard);
  const double s0 = sequence_importance_ratio(pi.logprob(*prompt, g.responses[0].actions), g.responses[0].logp_old);
  // Drop the other response so only the saturated term is present.
  RolloutGroup sat = g;
  sat.responses.resize(1);
  const auto ev = evaluate_objective(std::span<const RolloutGroup>(&sat, 1), pi, nullptr, cfg);
  bool zero_grad = s0 > 1.0 + cfg.eps_high && sat.responses[0].advantage > 0.0;
  for (double v : ev.gradient) zero_grad = zero_grad && v == 0.0;
  return {exact && std::abs(sym - 1.0) <= 1e-12 && band && zero_grad,
          fmt::format("s(theta_old) exact: {}, geometric symmetry |s-1| = {:.1e}, saturated s = {:.3f} gradient {}",
                      exact ? "yes" : "no", std::abs(sym - 1.0), s0, zero_grad ? "zero" : "NONZERO")};
}

Outcome coverage_oracle() {
  std::mt19937_64 rng(33);
  std::uniform_int_distribution<std::int64_t> dur(100, 12000);
  std::size_t disagreements = 0, positives = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::int64_t cells = dur(rng);
    const SegmentSet gt = oracle::random_grid_set(rng, cells, 3, 1);
    // Half the instances are perturbations of the ground truth so both
    // outcomes are well represented.
    SegmentSet s = oracle::random_grid_set(rng, cells, 4);
    if (i % 2 == 0) {
      s = SegmentSet{};
      for (const auto& sp : merge_overlaps(gt)) {
        const auto a = oracle::cell_of(sp.start) - static_cast<std::int64_t>(rng() % 3);
        const auto b = oracle::cell_of(sp.end) + static_cast<std::int64_t>(rng() % 3) - 1;
        if (a < b) s.insert(oracle::grid_span(std::max<std::int64_t>(a, 0), std::min(b, cells)));
      }
    }
    const bool truth = oracle::grid_coverage(s, gt, cells);
    positives += truth;
    disagreements += coverage_predicate(s, gt) != truth;
  }
  return {disagreements == 0, fmt::format("{} disagreements over 10000 instances ({} covering)", disagreements, positives)};
}

Outcome reward_tables() {
  std::size_t cases = 0, bad = 0;
  for (const auto& c : fixture::grounding_cases()) {
    fixture::ScriptedJudger j;
    j.completeness = c.completeness;
    j.free_text = c.free_text_score;
    ++cases;
    bad += std::abs(qi_reward(fixture::case_text(c), fixture::case_context(c), j).total - c.expected_total) > 1e-12;
  }
  for (const auto& c : fixture::attention_cases()) {
    fixture::ScriptedJudger j;
    j.free_text = c.free_text_score;
    ++cases;
    bad += std::abs(ma_reward(fixture::case_text(c), fixture::case_context(c), c.attention, j).total -
                    c.expected_total) > 1e-12;
  }
  // (AV, V, A) -> expected r_attn with alpha = 0.3.
  const std::vector<std::tuple<double, double, double, double>> split{
      {0.8, 0.7, 0.6, 0.3}, {0.5, 0.8, 0.2, 0.0}, {0.5, 0.2, 0.8, 0.0}, {0.7, 0.7, 0.7, 0.3},
      {0.5, 0.5, 0.2, 0.3}, {0.5, 0.2, 0.5, 0.3}, {0.0, 0.0, 0.0, 0.3}, {0.2, 0.5, 0.5, 0.0}};
  std::size_t split_bad = 0;
  for (const auto& [av, v, a, want] : split) split_bad += attention_reward(av, v, a, 0.3) != want;
  return {bad == 0 && split_bad == 0 && cases == 50,
          fmt::format("{} / {} reward cases off, {} / {} attention split cases off", bad, cases, split_bad,
                      split.size())};
}

// ---------------------------------------------------------------------------

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
  return h;
}

// Judge stand-in whose replies depend only on the request fields.
class SyntheticQualityJudge : public JudgeTransport {
 public:
  json post(const json& body, std::chrono::milliseconds) override {
    const std::string ref = body["content_ref"].get<std::string>();
    if (body["kind"] == "category") {
      // Skewed over five labels so caps and pruning both occur.
      const std::uint64_t h = fnv1a(ref + "/cat") % 100;
      const std::size_t idx = h < 45 ? 0 : h < 70 ? 1 : h < 88 ? 2 : h < 97 ? 3 : 4;
      return json{{"label", body["options"][idx]}};
    }
    const std::string dim = body["dimension"].get<std::string>();
    const std::uint64_t h = fnv1a(ref + "/" + dim);
    if (dim == "response_accuracy") return json{{"score", h % 100 < 85 ? 1.0 : 0.0}};
    if (dim == "question_logic") return json{{"score", 0.6 + 0.1 * static_cast<double>(h % 5)}};
    return json{{"score", static_cast<double>(h % 5) / 4.0}};
  }
};

std::string check_curation(const CurationResult& r, const CurationConfig& cfg) {
  std::set<std::string> stage1;
  for (const auto& s : r.stage1) {
    if (!(s.s_r == 1.0 && s.s_q >= 0.8 && s.s_c >= 0.7)) return "retained record violates the filter: " + s.id;
    stage1.insert(s.id);
  }
  const auto hist = category_histogram(r.stage1);
  std::vector<std::size_t> sizes;
  for (const auto& [label, n] : hist) {
    if (n < 10) return "category " + label + " has fewer than 10 records";
    sizes.push_back(n);
  }
  std::sort(sizes.rbegin(), sizes.rend());
  if (sizes.size() < 2) return "fewer than two categories";
  const auto largest_label = std::max_element(hist.begin(), hist.end(), [](const auto& a, const auto& b) {
                               return a.second < b.second;
                             })->first;
  std::size_t keep = 0;
  for (const auto& s : r.stage1) keep += s.category == largest_label && must_keep(s, cfg);
  if (sizes[0] > std::max<std::size_t>(3 * sizes[1], keep)) return "largest category above its cap";
  for (const auto& s : r.stage2) {
    if (!stage1.count(s.id)) return "stage-2 record outside stage 1: " + s.id;
    if (!(s.s_v >= 0.7 && s.s_a >= 0.7)) return "stage-2 record below threshold: " + s.id;
  }
  return {};
}

Outcome curation_invariants(const fs::path& dir) {
  std::mt19937_64 rng(34);
  CurationConfig cfg;
  RemoteJudgeConfig jc;
  jc.backoff = std::chrono::milliseconds(1);
  const auto transcript = (dir / "curation_transcript.jsonl").string();
  std::size_t violations = 0, degenerate = 0, reruns_differ = 0, stage1_total = 0, stage2_total = 0;
  std::string first_problem;
  for (int m = 0; m < 1000; ++m) {
    std::vector<SampleRecord> manifest;
    const std::size_t n = 80 + rng() % 221;
    for (std::size_t i = 0; i < n; ++i) {
      SampleRecord r;
      r.id = fmt::format("m{}-{:03}", m, i);
      r.content_ref = r.id;
      r.question = "q";
      r.reference_answer = "A";
      r.duration = 10.0 + static_cast<double>(rng() % 200);
      manifest.push_back(r);
    }
    auto live_judger = std::make_shared<RemoteJudger>(jc, std::make_shared<SyntheticQualityJudge>());
    RemoteSampleScorer live_scorer(live_judger);
    CurationResult live;
    bool live_degenerate = false;
    try {
      live = run_curation(manifest, live_scorer, cfg);
    } catch (const DegenerateTaxonomy&) {
      live_degenerate = true;
      ++degenerate;
    }
    if (!live_degenerate) {
      const auto problem = check_curation(live, cfg);
      if (!problem.empty()) {
        ++violations;
        if (first_problem.empty()) first_problem = fmt::format("manifest {}: {}", m, problem);
      }
      stage1_total += live.stage1.size();
      stage2_total += live.stage2.size();
    }
    live_judger->cache()->save_transcript(transcript);

    auto cache = std::make_shared<JudgeCache>();
    cache->load_transcript(transcript);
    RemoteSampleScorer replay_scorer(std::make_shared<RemoteJudger>(jc, nullptr, cache));
    try {
      const auto again = run_curation(manifest, replay_scorer, cfg);
      if (live_degenerate || json(again.scored) != json(live.scored) || json(again.stage1) != json(live.stage1) ||
          json(again.stage2) != json(live.stage2)) {
        ++reruns_differ;
      }
    } catch (const DegenerateTaxonomy&) {
      reruns_differ += !live_degenerate;
    }
  }
  return {violations == 0 && reruns_differ == 0 && degenerate < 1000,
          fmt::format("{} invariant violations, {} rerun differences, {} degenerate manifests, {} stage-1 / {} "
                      "stage-2 records{}",
                      violations, reruns_differ, degenerate, stage1_total, stage2_total,
                      first_problem.empty() ? "" : "; " + first_problem)};
}

// ---------------------------------------------------------------------------

struct TrainingRuns {
  std::shared_ptr<ContentStore> store;
  std::vector<GeneratedTask> qi_corpus, qi_heldout, ma_corpus, ma_heldout;
  std::vector<StepMetrics> qi_metrics, ma_metrics;
  std::vector<double> qi_params, ma_params;
  fs::path qi_dir, ma_dir;
  double qi_seconds = 0.0, ma_seconds = 0.0;
  std::string error;
};

TrainingRuns train(const fs::path& out, std::size_t qi_steps, std::size_t ma_steps) {
  TrainingRuns t;
  const RunConfig cfg = preset_config("toy");
  WorldParams qp = cfg.world;
  qp.n_tasks = 256;
  qp.weight_audio_visual = 0.0;
  WorldParams mp = cfg.world;
  mp.n_tasks = 256;
  mp.weight_visual = mp.weight_audio = 0.0;
  t.qi_corpus = generate_corpus(7, qp);
  t.qi_heldout = generate_corpus(107, qp);
  t.ma_corpus = generate_corpus(8, mp);
  t.ma_heldout = generate_corpus(108, mp);
  t.store = std::make_shared<ContentStore>(t.qi_corpus);
  for (const auto* c : {&t.qi_heldout, &t.ma_corpus, &t.ma_heldout}) {
    for (const auto& task : *c) t.store->add(task);
  }
  auto judger = std::make_shared<OracleJudger>(t.store);

  TrainerConfig tc = cfg.trainer;
  tc.total_steps = qi_steps;
  StageConfig sc = cfg.stage;
  sc.stage = Stage::kQI;
  t.qi_dir = out / "qi";
  fs::remove_all(t.qi_dir);
  TrainerRun qr;
  qr.seed = 1;
  qr.output_dir = t.qi_dir;
  qr.config_digest = cfg.digest();
  auto t0 = Clock::now();
  Trainer qi(std::make_shared<const Orchestrator>(judger, cfg.reward_settings(), sc, tc), shared_tasks(t.qi_corpus), qr);
  t.qi_metrics = qi.run();
  t.qi_params = qi.policy().params();
  t.qi_seconds = seconds_since(t0);

  tc.total_steps = ma_steps;
  sc.stage = Stage::kMA;
  t.ma_dir = out / "ma";
  fs::remove_all(t.ma_dir);
  TrainerRun mr;
  mr.seed = 2;
  mr.output_dir = t.ma_dir;
  mr.config_digest = cfg.digest();
  mr.init_params = t.qi_params;
  t0 = Clock::now();
  Trainer ma(std::make_shared<const Orchestrator>(judger, cfg.reward_settings(), sc, tc), shared_tasks(t.ma_corpus), mr);
  t.ma_metrics = ma.run();
  t.ma_params = ma.policy().params();
  t.ma_seconds = seconds_since(t0);
  return t;
}

Outcome qi_training(const TrainingRuns& t) {
  const double r0 = t.qi_metrics.front().stats.mean_reward;
  const double r1 = t.qi_metrics.back().stats.mean_reward;
  OracleJudger judger(t.store);
  FactoredCategoricalPolicy pi(task_policy_layout(), t.qi_params);
  EvalOptions opt;
  opt.seed = 17;
  const auto report = evaluate_policy(t.qi_heldout, pi, judger, opt);
  const double iou = report.summary.mean_iou;
  return {r1 > r0 && r1 >= 1.5 * r0 && iou >= 0.7 && t.qi_seconds < 600.0,
          fmt::format("mean reward {:.3f} -> {:.3f} ({:+.0f}%), held-out IoU {:.3f}, {} steps in {:.0f}s", r0, r1,
                      100.0 * (r1 / r0 - 1.0), iou, t.qi_metrics.size(), t.qi_seconds)};
}

Outcome ma_training(const TrainingRuns& t) {
  OracleJudger judger(t.store);
  FactoredCategoricalPolicy pi(task_policy_layout(), t.ma_params);
  EvalOptions opt;
  opt.seed = 18;
  opt.settings = {kAllSettings.begin(), kAllSettings.end()};
  const auto report = evaluate_policy(t.ma_heldout, pi, judger, opt);
  auto acc = [&](ModalitySetting s) { return report.summary.by_setting.at(std::string(to_string(s))).accuracy(); };
  const double av = acc(ModalitySetting::kAudioVisual);
  const double v = acc(ModalitySetting::kVisualOnly);
  const double a = acc(ModalitySetting::kAudioOnly);
  const double f0 = t.ma_metrics.front().attention_fraction;
  const double f1 = t.ma_metrics.back().attention_fraction;
  return {av >= v && av >= a && f1 > f0,
          fmt::format("held-out accuracy AV {:.3f}, V_ONLY {:.3f}, A_ONLY {:.3f}; attention fraction {:.3f} -> {:.3f} "
                      "over {} steps in {:.0f}s",
                      av, v, a, f0, f1, t.ma_metrics.size(), t.ma_seconds)};
}

Outcome calibration() {
  const auto tasks = generate_corpus(9, WorldParams{});
  OracleJudger judger(std::make_shared<const ContentStore>(tasks));
  FactoredCategoricalPolicy pi(task_policy_layout());
  EvalOptions opt;
  opt.seed = 19;
  const auto report = evaluate_policy(tasks, pi, judger, opt);
  const auto [lo, hi] = binomial_interval(256, 0.25, 0.99);
  const std::size_t k = report.summary.overall.correct;
  return {report.summary.overall.n == 256 && k >= lo && k <= hi,
          fmt::format("{} / {} correct, 99% interval [{}, {}]", k, report.summary.overall.n, lo, hi)};
}

Outcome replay(const TrainingRuns& t) {
  OracleJudger judger(t.store);
  std::size_t records = 0, mismatches = 0;
  std::string first;
  for (const auto& dir : {t.qi_dir, t.ma_dir}) {
    const auto log = read_rollouts((dir / "rollouts.jsonl").string());
    const auto r = replay_rollouts(log, judger, *t.store, ReplayOptions{});
    records += r.records;
    mismatches += r.mismatches.size();
    if (!r.mismatches.empty() && first.empty()) {
      const auto& m = r.mismatches.front();
      first = fmt::format("; first at {}:{} {}", dir.filename().string(), m.line, m.field);
    }
  }
  return {mismatches == 0 && records > 0, fmt::format("{} records, {} mismatches{}", records, mismatches, first)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string out = "acceptance_runs";
  std::size_t qi_steps = 500;
  std::size_t ma_steps = 200;
  app.add_option("--out", out, "Directory for training runs");
  app.add_option("--qi-steps", qi_steps, "Grounding-stage steps");
  app.add_option("--ma-steps", ma_steps, "Attention-stage steps");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);
  fs::create_directories(out);

  std::size_t failed = 0;
  json summary = json::object();
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2d %-28s %s  %s\n", id, name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    summary[std::to_string(id)] = {{"name", name}, {"pass", o.pass}, {"detail", o.detail}};
  };

  report(1, "gradient check", gradient_check);
  report(2, "advantage normalization", advantage_normalization);
  report(3, "ratio identities", ratio_identities);
  report(4, "coverage predicate oracle", coverage_oracle);
  report(5, "reward truth tables", reward_tables);
  report(6, "curation invariants", [&] { return curation_invariants(out); });

  std::optional<TrainingRuns> runs;
  std::string train_error;
  try {
    runs = train(out, qi_steps, ma_steps);
  } catch (const std::exception& e) {
    train_error = e.what();
  }
  auto needs_runs = [&](auto f) {
    return [&, f]() -> Outcome {
      if (!runs) return {false, "training failed: " + train_error};
      return f(*runs);
    };
  };
  report(7, "grounding-stage training", needs_runs(qi_training));
  report(8, "attention-stage training", needs_runs(ma_training));
  report(9, "untrained calibration", calibration);
  report(10, "replay integrity", needs_runs(replay));

  write_file((fs::path(out) / "acceptance.json").string(), summary.dump(2) + "\n");
  std::printf("%zu of 10 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
