#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "avrl/orchestrator.hpp"
#include "avrl/util.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace avrl;
namespace fs = std::filesystem;

namespace {

std::shared_ptr<const GeneratedTask> shared(GeneratedTask t) {
  return std::make_shared<const GeneratedTask>(std::move(t));
}

StageConfig stage_config(Stage s) {
  StageConfig c;
  c.stage = s;
  c.prompts_per_step = 4;
  c.checkpoint_every = 2;
  return c;
}

TrainerConfig trainer_config(std::size_t steps) {
  TrainerConfig c;
  c.lr = 1.0;
  c.total_steps = steps;
  return c;
}

// Actions for the prompt with the answer position set to the given letter.
std::vector<int> with_letter(const TaskPrompt& p, std::vector<int> actions, char letter) {
  actions.back() = letter - 'A';
  (void)p.chosen_letter(actions);
  return actions;
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("avrl_orch_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

class FailingJudger : public OracleJudger {
 public:
  using OracleJudger::OracleJudger;
  JudgeScore judge_consistency(const std::string&, const TimeSpan&, const std::string&, const RuleSet&) override {
    throw JudgeUnavailable("offline");
  }
};

std::vector<std::shared_ptr<const GeneratedTask>> shared_corpus(const std::vector<GeneratedTask>& tasks) {
  std::vector<std::shared_ptr<const GeneratedTask>> out;
  for (const auto& t : tasks) out.push_back(shared(t));
  return out;
}

}  // namespace

TEST_CASE("grounding-stage group") {
  auto judger = std::make_shared<OracleJudger>(fixture::store());
  Orchestrator orch(judger, {}, stage_config(Stage::kQI), trainer_config(10));
  PolicySnapshot snap{std::vector<double>(13, 0.0), 1};
  Rng rng(3);
  const auto task = shared(fixture::next_audio_task());
  const auto g = orch.run_qi_group(task, snap, rng);
  REQUIRE(g.records.size() == 8);
  REQUIRE(g.group.responses.size() == 8);
  CHECK(g.ious.size() == 8);
  FactoredCategoricalPolicy pi(task_policy_layout());
  std::vector<double> adv;
  for (std::size_t i = 0; i < 8; ++i) {
    const auto& rec = g.records[i];
    CHECK(rec.stage == Stage::kQI);
    CHECK(rec.setting == ModalitySetting::kAudioVisual);
    CHECK(rec.rollout_idx == i);
    CHECK(rec.snapshot_version == 1);
    CHECK(rec.logp_old == pi.logprob(*g.record_prompts[i], rec.actions));
    CHECK(rec.breakdown == qi_reward(rec.raw_text, reward_context(*task, ModalitySetting::kAudioVisual), *judger));
    CHECK(rec.advantage == g.group.responses[i].advantage);
    adv.push_back(rec.advantage);
  }
  const auto [mean, sd] = oracle::mean_pop_std(adv);
  CHECK(std::abs(mean) < 1e-12);
  CHECK((sd == 0.0 || std::abs(sd - 1.0) < 1e-12));
}

TEST_CASE("attention stage rewards the full-modality win") {
  auto judger = std::make_shared<OracleJudger>(fixture::store());
  Orchestrator orch(judger, {}, stage_config(Stage::kMA), trainer_config(10));
  PolicySnapshot snap{std::vector<double>(13, 0.0), 0};
  const auto task = shared(fixture::cooccurrence_task());
  TaskPrompt av(task, ModalitySetting::kAudioVisual);
  TaskPrompt v(task, ModalitySetting::kVisualOnly);
  TaskPrompt a(task, ModalitySetting::kAudioOnly);
  FactoredCategoricalPolicy pi(task_policy_layout());
  Rng sampler(1);
  auto forced_for = [&](const TaskPrompt& p, std::vector<char> letters) {
    std::vector<std::vector<int>> out;
    for (char l : letters) out.push_back(with_letter(p, pi.sample(p, sampler).actions, l));
    return out;
  };

  SUBCASE("full modality strictly better") {
    const auto fav = forced_for(av, {'C', 'C', 'C', 'C', 'C', 'C', 'A', 'B'});
    const auto fv = forced_for(v, {'A', 'B', 'C', 'D', 'A', 'B', 'C', 'D'});
    const auto fa = forced_for(a, {'A', 'A', 'A', 'A', 'A', 'A', 'A', 'C'});
    Rng rng(2);
    const auto g = orch.run_ma_group(task, snap, rng, {fav, fv, fa});
    CHECK(*g.setting_means[0] == 0.75);
    CHECK(*g.setting_means[1] == 0.25);
    CHECK(*g.setting_means[2] == 0.125);
    CHECK(g.attention == 0.3);
    REQUIRE(g.records.size() == 24);
    for (const auto& r : g.records) {
      if (r.setting == ModalitySetting::kAudioVisual) {
        CHECK(r.breakdown.r_attn == 0.3);
        CHECK(r.breakdown.total == doctest::Approx(1.0 + r.breakdown.r_ans + 0.3).epsilon(1e-15));
      } else {
        CHECK(r.breakdown.r_attn == 0.0);
        CHECK(r.advantage == 0.0);
      }
    }
    CHECK(g.group.responses.size() == 8);
  }
  SUBCASE("ties earn the bonus, losses do not") {
    const auto fav = forced_for(av, {'C', 'C', 'A', 'A', 'A', 'A', 'A', 'A'});
    const auto tie_v = forced_for(v, {'C', 'C', 'A', 'A', 'A', 'A', 'A', 'A'});
    const auto tie_a = forced_for(a, {'C', 'C', 'A', 'A', 'A', 'A', 'A', 'A'});
    const auto win_a = forced_for(a, {'C', 'C', 'C', 'A', 'A', 'A', 'A', 'A'});
    Rng rng(2);
    CHECK(orch.run_ma_group(task, snap, rng, {fav, tie_v, tie_a}).attention == 0.3);
    CHECK(orch.run_ma_group(task, snap, rng, {fav, tie_v, win_a}).attention == 0.0);
  }
}

TEST_CASE("judge failures score zero and are logged") {
  auto judger = std::make_shared<FailingJudger>(fixture::store());
  Orchestrator orch(judger, {}, stage_config(Stage::kQI), trainer_config(10));
  Rng rng(5);
  const auto g = orch.run_qi_group(shared(fixture::next_audio_task()), PolicySnapshot{std::vector<double>(13, 0.0), 0}, rng);
  for (const auto& r : g.records) {
    CHECK(r.breakdown.total == 0.0);
    CHECK(r.judge_error.find("offline") != std::string::npos);
  }
}

TEST_CASE("snapshot cadence") {
  FactoredCategoricalPolicy pi(task_policy_layout());
  auto s0 = snapshot_old_policy(pi, 2, 0, std::nullopt);
  CHECK(s0.version == 1);
  pi.set_params(std::vector<double>(13, 0.5));
  auto s1 = snapshot_old_policy(pi, 2, 1, s0);
  CHECK(s1.version == 1);
  CHECK(s1.params == std::vector<double>(13, 0.0));
  auto s2 = snapshot_old_policy(pi, 2, 2, s1);
  CHECK(s2.version == 2);
  CHECK(s2.params == std::vector<double>(13, 0.5));
}

TEST_CASE("checkpoints round trip and reject corruption") {
  const auto dir = fresh_dir("ckpt");
  Checkpoint c;
  c.stage = "qi";
  c.block_dims = task_policy_layout().block_dims;
  c.params = std::vector<double>(13, 0.1 + 0.2);
  c.reference = std::vector<double>(13, -1.0 / 3.0);
  c.snapshot = {std::vector<double>(13, 2.5e-17), 4};
  c.next_step = 17;
  c.config_digest = "abc";
  save_checkpoint(c, dir / "c.json");
  const auto back = load_checkpoint(dir / "c.json");
  CHECK(back.params == c.params);
  CHECK(back.reference == c.reference);
  CHECK(back.snapshot.params == c.snapshot.params);
  CHECK(back.snapshot.version == 4);
  CHECK(back.next_step == 17);

  write_file((dir / "bad.json").string(), "{\"format\": \"other\"}");
  CHECK_THROWS(load_checkpoint(dir / "bad.json"));
  c.params.pop_back();
  save_checkpoint(c, dir / "short.json");
  CHECK_THROWS_AS(load_checkpoint(dir / "short.json"), SchemaMismatch);
}

TEST_CASE("rollout records round trip through JSON") {
  RolloutRecord r;
  r.step = 3;
  r.prompt_id = "p";
  r.stage = Stage::kMA;
  r.setting = ModalitySetting::kAudioOnly;
  r.rollout_idx = 5;
  r.raw_text = "<time>";
  r.breakdown.r_ans = 1.0 / 3.0;
  r.advantage = -0.7;
  r.seq_ratio = 1.0000001;
  r.actions = {1, 2};
  r.logp_old = {-0.1, -2.0 / 7.0};
  const RolloutRecord back = nlohmann::json(r).get<RolloutRecord>();
  CHECK(nlohmann::json(back) == nlohmann::json(r));
  CHECK(back.logp_old == r.logp_old);
}

TEST_CASE("training run writes metrics, rollouts and checkpoints") {
  const auto tasks = generate_corpus(31, WorldParams{16, 1, 1, 0, 20, 60, 0.5});
  auto judger = std::make_shared<OracleJudger>(std::make_shared<const ContentStore>(tasks));
  auto orch = std::make_shared<const Orchestrator>(judger, RewardSettings{}, stage_config(Stage::kQI), trainer_config(5));
  const auto dir = fresh_dir("run");
  TrainerRun run;
  run.seed = 3;
  run.output_dir = dir;
  run.config_digest = "d";
  Trainer trainer(orch, shared_corpus(tasks), run);
  const auto metrics = trainer.run();
  CHECK(metrics.size() == 5);
  CHECK(line_count(dir / "metrics.csv") == 6);
  CHECK(line_count(dir / "metrics.jsonl") == 5);
  CHECK(line_count(dir / "rollouts.jsonl") == 5 * 4 * 8);
  CHECK(fs::exists(dir / "checkpoint.json"));
  CHECK(fs::exists(dir / "checkpoints" / "step-000002.json"));
  CHECK(read_rollouts((dir / "rollouts.jsonl").string()).size() == 160);
  CHECK(load_checkpoint(dir / "checkpoint.json").next_step == 5);
  CHECK(metrics[0].stats.lr == 0.0);
}

TEST_CASE("resumed and multi-worker runs reproduce the trajectory bit-exactly") {
  const auto tasks = generate_corpus(32, WorldParams{16, 1, 1, 1, 20, 60, 0.5});
  auto store = std::make_shared<const ContentStore>(tasks);
  for (Stage stage : {Stage::kQI, Stage::kMA}) {
    auto make = [&](std::size_t workers) {
      auto sc = stage_config(stage);
      sc.workers = workers;
      return std::make_shared<const Orchestrator>(std::make_shared<OracleJudger>(store), RewardSettings{}, sc,
                                                  trainer_config(6));
    };
    const auto full_dir = fresh_dir("full");
    TrainerRun full;
    full.seed = 9;
    full.output_dir = full_dir;
    full.config_digest = "d";
    Trainer a(make(1), shared_corpus(tasks), full);
    a.run();

    const auto part_dir = fresh_dir("part");
    TrainerRun part = full;
    part.output_dir = part_dir;
    part.stop_at = 3;
    Trainer b(make(1), shared_corpus(tasks), part);
    b.run();
    CHECK(b.next_step() == 3);
    TrainerRun resume = full;
    resume.output_dir = part_dir;
    // An earlier checkpoint than the last logged step: later log lines are dropped.
    resume.resume_from = part_dir / "checkpoints" / "step-000002.json";
    Trainer c(make(2), shared_corpus(tasks), resume);
    c.run();

    CHECK(c.policy().params() == a.policy().params());
    CHECK(read_file((part_dir / "metrics.csv").string()) == read_file((full_dir / "metrics.csv").string()));
    CHECK(read_file((part_dir / "rollouts.jsonl").string()) == read_file((full_dir / "rollouts.jsonl").string()));

    TrainerRun wrong = resume;
    wrong.config_digest = "other";
    CHECK_THROWS(Trainer(make(1), shared_corpus(tasks), wrong));
  }
}

TEST_CASE("stage config validation") {
  TrainerConfig t;
  StageConfig s;
  CHECK_NOTHROW(s.validate(t));
  s.group_size = 4;
  CHECK_THROWS_AS(s.validate(t), ConfigError);
  s = StageConfig{};
  s.judger = "llm";
  CHECK_THROWS_AS(s.validate(t), ConfigError);
  CHECK(parse_stage("ma") == Stage::kMA);
}
