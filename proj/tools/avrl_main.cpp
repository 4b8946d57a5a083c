// Operator CLI: gen-world, curate, train, eval, grad-check, replay.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 judge unavailable,
// 4 numerical failure.

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "avrl/config.hpp"
#include "avrl/curation.hpp"
#include "avrl/evaluation.hpp"
#include "avrl/gspo.hpp"
#include "avrl/judge.hpp"
#include "avrl/orchestrator.hpp"
#include "avrl/util.hpp"
#include "avrl/world.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace avrl;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitJudge = 3;
constexpr int kExitNumerical = 4;

constexpr const char* kTokenEnv = "AVRL_JUDGE_TOKEN";

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON run configuration");
  cmd->add_option("--seed", c.seed, "Override the configured seed");
  cmd->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
}

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? preset_config("toy") : load_config(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  if (c.workers) cfg.stage.workers = *c.workers;
  return cfg;
}

std::string token_from_env() {
  const char* t = std::getenv(kTokenEnv);
  return t ? t : "";
}

std::vector<GeneratedTask> load_corpus(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("no ") + what + " corpus given");
  if (!fs::exists(path)) throw DataError(std::string(what) + " corpus not found: " + path);
  auto corpus = read_corpus(path);
  if (corpus.empty()) throw DataError(std::string(what) + " corpus is empty: " + path);
  return corpus;
}

std::shared_ptr<RemoteJudger> make_remote_judger(const RunConfig& cfg) {
  auto cache = std::make_shared<JudgeCache>();
  if (!cfg.judge.transcript.empty() && fs::exists(cfg.judge.transcript)) {
    cache->load_transcript(cfg.judge.transcript);
  }
  std::shared_ptr<JudgeTransport> transport;
  if (!cfg.judge.endpoint.empty()) {
    transport = std::make_shared<HttpJudgeTransport>(cfg.judge.endpoint, token_from_env());
  }
  return std::make_shared<RemoteJudger>(cfg.remote_judge_config(), transport, cache);
}

void save_transcript(const RunConfig& cfg, const std::shared_ptr<RemoteJudger>& judger) {
  if (judger && !cfg.judge.transcript.empty()) judger->cache()->save_transcript(cfg.judge.transcript);
}

// ---------------------------------------------------------------------------

struct GenWorldArgs {
  Common common;
  std::optional<std::size_t> n;
  std::string out;
  std::vector<double> mix;
  std::optional<double> corrupt;
};

int cmd_gen_world(const GenWorldArgs& a) {
  RunConfig cfg = resolve_config(a.common);
  if (a.n) cfg.world.n_tasks = *a.n;
  if (!a.mix.empty()) {
    if (a.mix.size() != 3) throw ConfigError("--mix takes three weights: V A AV");
    cfg.world.weight_visual = a.mix[0];
    cfg.world.weight_audio = a.mix[1];
    cfg.world.weight_audio_visual = a.mix[2];
  }
  if (a.corrupt) cfg.corrupt_fraction = *a.corrupt;
  if (!a.out.empty()) cfg.paths.output_dir = a.out;
  cfg.validate();

  const auto corpus = generate_corpus(cfg.seed, cfg.world);
  const fs::path dir = cfg.paths.output_dir;
  fs::create_directories(dir);
  write_corpus(corpus, (dir / "corpus.jsonl").string());
  write_manifest(export_manifest(corpus, cfg.corrupt_fraction, cfg.seed), (dir / "manifest.jsonl").string());
  write_resolved_config(cfg, dir.string());
  const std::string digest = corpus_digest(corpus);
  write_file((dir / "corpus.sha256").string(), digest + "\n");
  std::cout << digest << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct CurateArgs {
  Common common;
  std::string in;
  std::string out;
  std::string corpus;
  std::string judge;
  std::string transcript;
  bool stage2_only = false;
};

void write_audit(const std::vector<AuditEntry>& audit, const fs::path& path) {
  std::string out;
  for (const auto& e : audit) {
    out += json{{"id", e.id}, {"stage", e.stage}, {"rule", e.rule}}.dump();
    out += '\n';
  }
  write_file(path.string(), out);
}

int cmd_curate(const CurateArgs& a) {
  RunConfig cfg = resolve_config(a.common);
  if (!a.corpus.empty()) cfg.paths.corpus = a.corpus;
  if (!a.judge.empty()) cfg.stage.judger = a.judge;
  if (!a.transcript.empty()) cfg.judge.transcript = a.transcript;
  cfg.paths.manifest = a.in;
  cfg.paths.output_dir = a.out;
  cfg.validate();

  const fs::path dir = a.out;
  fs::create_directories(dir);
  write_resolved_config(cfg, dir.string());
  std::vector<AuditEntry> audit;
  try {
    const auto records = read_manifest(a.in, cfg.curation);
    std::shared_ptr<RemoteJudger> remote;
    std::unique_ptr<SampleScorer> scorer;
    if (cfg.stage.judger == "remote") {
      remote = make_remote_judger(cfg);
      scorer = std::make_unique<RemoteSampleScorer>(remote, remote->config().quality_template,
                                                    remote->config().category_template);
    } else {
      auto store = std::make_shared<const ContentStore>(load_corpus(cfg.paths.corpus, "content"));
      scorer = std::make_unique<OracleSampleScorer>(store);
    }
    CurationResult result = run_curation(records, *scorer, cfg.curation, cfg.stage.workers);
    save_transcript(cfg, remote);
    audit = result.audit;

    json hist;
    if (!a.stage2_only) {
      write_manifest(result.stage1, (dir / "stage1.jsonl").string());
      hist["stage1"] = category_histogram(result.stage1);
    }
    write_manifest(result.stage2, (dir / "stage2.jsonl").string());
    hist["stage2"] = category_histogram(result.stage2);
    write_file((dir / "histogram.json").string(), hist.dump(2) + "\n");
    write_audit(audit, dir / "audit.jsonl");
    std::cout << "scored " << result.scored.size() << ", stage1 " << result.stage1.size() << ", stage2 "
              << result.stage2.size() << ", discarded " << audit.size() << "\n";
  } catch (const std::exception& e) {
    audit.push_back({"*", "error", e.what()});
    write_audit(audit, dir / "audit.jsonl");
    throw;
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string stage;
  std::string corpus;
  std::string out;
  std::string init;
  std::string judge;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> stop_at;
  std::optional<double> lr;
  bool resume = false;
  bool no_rollouts = false;
};

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = resolve_config(a.common);
  if (!a.stage.empty()) cfg.stage.stage = parse_stage(a.stage);
  if (!a.corpus.empty()) cfg.paths.corpus = a.corpus;
  if (!a.out.empty()) cfg.paths.output_dir = a.out;
  if (!a.judge.empty()) cfg.stage.judger = a.judge;
  if (a.steps) cfg.trainer.total_steps = *a.steps;
  if (a.lr) cfg.trainer.lr = *a.lr;
  cfg.validate();

  const auto tasks = load_corpus(cfg.paths.corpus, "training");
  if (cfg.stage.stage == Stage::kMA) {
    const bool any_av = std::any_of(tasks.begin(), tasks.end(), [](const GeneratedTask& t) {
      return t.requirement == ModalityRequirement::kAudioVisual;
    });
    if (!any_av) throw DataError("ma training needs audio-visual tasks; the corpus has none");
  }

  auto store = std::make_shared<const ContentStore>(tasks);
  std::shared_ptr<RemoteJudger> remote;
  std::shared_ptr<Judger> judger;
  if (cfg.stage.judger == "remote") {
    remote = make_remote_judger(cfg);
    judger = remote;
  } else {
    judger = std::make_shared<OracleJudger>(store);
  }
  auto orch = std::make_shared<const Orchestrator>(judger, cfg.reward_settings(), cfg.stage, cfg.trainer);

  std::vector<std::shared_ptr<const GeneratedTask>> corpus;
  corpus.reserve(tasks.size());
  for (const auto& t : tasks) corpus.push_back(std::make_shared<const GeneratedTask>(t));

  const fs::path dir = cfg.paths.output_dir;
  fs::create_directories(dir);
  write_resolved_config(cfg, dir.string());

  TrainerRun run;
  run.seed = cfg.seed;
  run.output_dir = dir;
  run.config_digest = cfg.digest();
  run.stop_at = a.stop_at;
  run.write_rollouts = !a.no_rollouts;
  if (a.resume) {
    const fs::path ckpt = dir / "checkpoint.json";
    if (!fs::exists(ckpt)) throw DataError("no checkpoint to resume from: " + ckpt.string());
    run.resume_from = ckpt;
  } else if (!a.init.empty()) {
    if (!fs::exists(a.init)) throw DataError("init checkpoint not found: " + a.init);
    run.init_params = load_checkpoint(a.init).params;
  }

  Trainer trainer(orch, std::move(corpus), run);
  const auto metrics = trainer.run([](const StepMetrics& m) {
    spdlog::debug("step {} reward {:.4f} iou {:.4f}", m.stats.step, m.stats.mean_reward, m.mean_iou);
  });
  save_transcript(cfg, remote);
  if (!metrics.empty()) {
    const auto& first = metrics.front();
    const auto& last = metrics.back();
    std::cout << "steps " << first.stats.step << ".." << last.stats.step << " reward " << first.stats.mean_reward
              << " -> " << last.stats.mean_reward << " iou " << first.mean_iou << " -> " << last.mean_iou << "\n";
  } else {
    std::cout << "nothing to do\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string checkpoint;
  std::string corpus;
  std::string out;
  std::vector<std::string> settings;
  std::optional<std::size_t> samples;
  std::optional<double> temperature;
  bool scripted = false;
  bool untrained = false;
};

int cmd_eval(const EvalArgs& a) {
  RunConfig cfg = resolve_config(a.common);
  if (!a.corpus.empty()) cfg.paths.heldout = a.corpus;
  if (!a.out.empty()) cfg.paths.output_dir = a.out;
  if (a.samples) cfg.eval.samples_per_task = *a.samples;
  if (a.temperature) cfg.eval.temperature = *a.temperature;
  if (!a.settings.empty()) {
    cfg.eval.settings.clear();
    for (const auto& s : a.settings) {
      try {
        cfg.eval.settings.push_back(parse_setting(s));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("--settings: ") + e.what());
      }
    }
  }
  cfg.validate();

  FactoredCategoricalPolicy policy(task_policy_layout());
  if (!a.scripted && !a.untrained) {
    if (a.checkpoint.empty()) throw ConfigError("eval needs --checkpoint, --untrained or --scripted");
    if (!fs::exists(a.checkpoint)) throw DataError("checkpoint not found: " + a.checkpoint);
    const Checkpoint c = load_checkpoint(a.checkpoint);
    if (FeatureLayout{c.block_dims} != task_policy_layout()) {
      throw DataError("checkpoint schema does not match the task policy");
    }
    policy.set_params(c.params);
  }

  const auto tasks = load_corpus(cfg.paths.heldout, "held-out");
  auto store = std::make_shared<const ContentStore>(tasks);
  OracleJudger judger(store);
  EvalOptions opts;
  opts.seed = cfg.seed;
  opts.settings = cfg.eval.settings;
  opts.samples_per_task = cfg.eval.samples_per_task;
  opts.temperature = cfg.eval.temperature;
  opts.segment_slots = cfg.stage.segment_slots;
  opts.scripted = a.scripted;
  const EvalReport report = evaluate_policy(tasks, policy, judger, opts, cfg.reward_settings());

  const fs::path dir = cfg.paths.output_dir;
  fs::create_directories(dir);
  write_resolved_config(cfg, dir.string());
  write_file((dir / "eval.csv").string(), eval_csv(report.rows));
  write_file((dir / "eval_summary.json").string(), report.summary.to_json().dump(2) + "\n");
  std::cout << "rows " << report.summary.rows << " accuracy " << report.summary.overall.accuracy() << " iou "
            << report.summary.mean_iou << " reward " << report.summary.mean_reward << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct GradCheckArgs {
  std::size_t cases = 100;
  std::uint64_t seed = 1;
  std::string mode = "both";
  double tolerance = 1e-4;
  double analytic_scale = 1.0;
};

int cmd_grad_check(const GradCheckArgs& a) {
  std::vector<RatioMode> modes;
  if (a.mode == "both") {
    modes = {RatioMode::kSequence, RatioMode::kToken};
  } else {
    modes = {parse_ratio_mode(a.mode)};
  }
  bool ok = true;
  for (RatioMode m : modes) {
    GradCheckOptions opts;
    opts.cases = a.cases;
    opts.seed = a.seed;
    opts.mode = m;
    opts.tolerance = a.tolerance;
    opts.analytic_scale = a.analytic_scale;
    const GradCheckResult r = run_grad_check(opts);
    std::cout << to_string(m) << ": cases " << r.cases << " failures " << r.failures << " max_rel_err "
              << r.max_relative_error << " clipped_terms " << r.clipped_terms << " unclipped_terms "
              << r.unclipped_terms << "\n";
    ok = ok && r.failures == 0;
  }
  if (!ok) throw NumericalFailure("gradient check failed");
  return 0;
}

// ---------------------------------------------------------------------------

struct ReplayArgs {
  Common common;
  std::string rollouts;
  std::string corpus;
  std::optional<double> alpha;
};

int cmd_replay(const ReplayArgs& a) {
  fs::path log = a.rollouts;
  Common common = a.common;
  if (fs::is_directory(log)) {
    if (common.config_path.empty() && fs::exists(log / "config.json")) {
      common.config_path = (log / "config.json").string();
    }
    log /= "rollouts.jsonl";
  }
  RunConfig cfg = resolve_config(common);
  if (!a.corpus.empty()) cfg.paths.corpus = a.corpus;
  if (!fs::exists(log)) throw DataError("rollout log not found: " + log.string());

  const auto tasks = load_corpus(cfg.paths.corpus, "content");
  ContentStore store(tasks);
  OracleJudger judger(std::make_shared<const ContentStore>(tasks));
  ReplayOptions opts;
  opts.alpha = a.alpha;
  opts.default_alpha = cfg.stage.alpha;
  opts.rewards = cfg.reward_settings();
  const ReplayReport report = replay_rollouts(read_rollouts(log.string()), judger, store, opts);
  std::cout << "records " << report.records << " groups " << report.groups << " mismatches "
            << report.mismatches.size() << "\n";
  for (const auto& m : report.mismatches) {
    std::cout << "line " << m.line << " field " << m.field << " logged " << m.logged << " recomputed "
              << m.recomputed << "\n";
  }
  if (!report.mismatches.empty()) {
    const auto& m = report.mismatches.front();
    throw DataError("replay mismatch at line " + std::to_string(m.line) + " in field " + m.field);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-visual grounding RL toolkit"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  GenWorldArgs gw;
  auto* gen = app.add_subcommand("gen-world", "Generate a synthetic corpus and its manifest");
  add_common(gen, gw.common);
  gen->add_option("--n", gw.n, "Number of tasks");
  gen->add_option("--out", gw.out, "Output directory");
  gen->add_option("--mix", gw.mix, "Relative weights of V, A and AV tasks")->expected(3);
  gen->add_option("--corrupt", gw.corrupt, "Fraction of manifest records with a wrong reference");

  CurateArgs cu;
  auto* cur = app.add_subcommand("curate", "Score, filter and balance a manifest");
  add_common(cur, cu.common);
  cur->add_option("--in", cu.in, "Input manifest")->required();
  cur->add_option("--out", cu.out, "Output directory")->required();
  cur->add_option("--corpus", cu.corpus, "Corpus with the manifest's content (oracle scoring)");
  cur->add_option("--judge", cu.judge, "oracle | remote")->check(CLI::IsMember({"oracle", "remote"}));
  cur->add_option("--transcript", cu.transcript, "Judge transcript to reuse and extend");
  cur->add_flag("--stage2", cu.stage2_only, "Write only the stage-2 manifest");

  TrainArgs tr;
  auto* trn = app.add_subcommand("train", "Run a training stage");
  add_common(trn, tr.common);
  trn->add_option("--stage", tr.stage, "qi | ma")->check(CLI::IsMember({"qi", "ma"}));
  trn->add_option("--corpus", tr.corpus, "Training corpus");
  trn->add_option("--out", tr.out, "Run directory");
  trn->add_option("--init", tr.init, "Checkpoint whose parameters start the run");
  trn->add_option("--judge", tr.judge, "oracle | remote")->check(CLI::IsMember({"oracle", "remote"}));
  trn->add_option("--steps", tr.steps, "Total steps");
  trn->add_option("--stop-at", tr.stop_at, "Stop before this step");
  trn->add_option("--lr", tr.lr, "Learning rate");
  trn->add_flag("--resume", tr.resume, "Continue from the run directory's checkpoint");
  trn->add_flag("--no-rollouts", tr.no_rollouts, "Skip the rollout log");

  EvalArgs ev;
  auto* evl = app.add_subcommand("eval", "Evaluate a policy on a held-out corpus");
  add_common(evl, ev.common);
  evl->add_option("--checkpoint", ev.checkpoint, "Policy checkpoint");
  evl->add_option("--corpus", ev.corpus, "Held-out corpus");
  evl->add_option("--out", ev.out, "Output directory");
  evl->add_option("--settings", ev.settings, "Modality settings (AV, V_ONLY, A_ONLY)");
  evl->add_option("--samples", ev.samples, "Samples per task");
  evl->add_option("--temperature", ev.temperature, "Sampling temperature; 0 is argmax");
  auto* scripted = evl->add_flag("--scripted", ev.scripted, "Evaluate each task's scripted trace");
  evl->add_flag("--untrained", ev.untrained, "Evaluate the uniform policy")->excludes(scripted);

  GradCheckArgs gc;
  auto* grd = app.add_subcommand("grad-check", "Finite-difference check of the objective gradient");
  grd->add_option("--cases", gc.cases, "Random cases per mode");
  grd->add_option("--seed", gc.seed, "Seed");
  grd->add_option("--mode", gc.mode, "sequence | token | both")
      ->check(CLI::IsMember({"sequence", "token", "both"}));
  grd->add_option("--tolerance", gc.tolerance, "Maximum relative error");
  grd->add_option("--analytic-scale", gc.analytic_scale, "Scale the analytic gradient (fault injection)");

  ReplayArgs rp;
  auto* rpl = app.add_subcommand("replay", "Re-score a rollout log and compare");
  add_common(rpl, rp.common);
  rpl->add_option("--rollouts", rp.rollouts, "Rollout log or run directory")->required();
  rpl->add_option("--corpus", rp.corpus, "Corpus the run trained on");
  rpl->add_option("--alpha", rp.alpha, "Override the logged run's alpha");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    if (*gen) return cmd_gen_world(gw);
    if (*cur) return cmd_curate(cu);
    if (*trn) return cmd_train(tr);
    if (*evl) return cmd_eval(ev);
    if (*grd) return cmd_grad_check(gc);
    if (*rpl) return cmd_replay(rp);
  } catch (const NonFiniteGradient& e) {
    std::cerr << "error: " << e.what() << " (group " << e.group() << ")\n";
    return kExitNumerical;
  } catch (const NumericalFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const JudgeUnavailable& e) {
    std::cerr << "error: judge unavailable: " << e.what() << "\n";
    return kExitJudge;
  } catch (const ProtocolError& e) {
    std::cerr << "error: judge protocol: " << e.what() << "\n";
    return kExitJudge;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
