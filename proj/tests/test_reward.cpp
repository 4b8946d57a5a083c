#include "doctest.h"

#include <cmath>
#include <random>

#include "avrl/orchestrator.hpp"
#include "avrl/reward.hpp"
#include "avrl/task_policy.hpp"
#include "fixtures.hpp"
#include "reward_cases.hpp"

using namespace avrl;

namespace {

std::string text_with_spans(const std::vector<std::pair<TimeSpan, std::string>>& pairs, const std::string& answer) {
  StructuredTrace t;
  for (const auto& [span, caption] : pairs) t.pairs.push_back({span, caption});
  t.thinking = "t";
  t.final_answer = answer;
  return serialize_trace(t);
}

}  // namespace

TEST_CASE("consistency reward is the mean pair score") {
  fixture::ScriptedJudger j;
  StructuredTrace t;
  t.pairs = {{{0, 1}, "1.0"}, {{2, 3}, "0.5"}};
  CHECK(consistency_reward(t, "c", j, default_consistency_rules()) == 0.75);
  t.pairs = {{{0, 1}, "0.8"}};
  CHECK(consistency_reward(t, "c", j, default_consistency_rules()) == 0.8);
}

TEST_CASE("grounding reward fixture") {
  for (const auto& c : fixture::grounding_cases()) {
    fixture::ScriptedJudger j;
    j.completeness = c.completeness;
    j.free_text = c.free_text_score;
    const auto r = qi_reward(fixture::case_text(c), fixture::case_context(c), j);
    INFO(fixture::case_text(c));
    CHECK(std::abs(r.total - c.expected_total) <= 1e-12);
    CHECK(r.r_intent == 0.5 * (r.r_cons + r.r_comp));
    CHECK(r.r_attn == 0.0);
    if (!c.well_formed) {
      CHECK(r == RewardBreakdown{});
    }
  }
}

TEST_CASE("attention-stage reward fixture") {
  for (const auto& c : fixture::attention_cases()) {
    fixture::ScriptedJudger j;
    j.free_text = c.free_text_score;
    const auto r = ma_reward(fixture::case_text(c), fixture::case_context(c), c.attention, j);
    CHECK(std::abs(r.total - c.expected_total) <= 1e-12);
    CHECK(r.r_cons == 0.0);
    CHECK(r.r_comp == 0.0);
    if (!c.well_formed) CHECK(r == RewardBreakdown{});
  }
}

TEST_CASE("attention reward case split") {
  CHECK(attention_reward(0.8, 0.7, 0.6, 0.3) == 0.3);
  CHECK(attention_reward(0.5, 0.8, 0.2, 0.3) == 0.0);
  CHECK(attention_reward(0.7, 0.7, 0.7, 0.3) == 0.3);
  CHECK(attention_reward(0.5, 0.2, 0.8, 0.3) == 0.0);
  CHECK(attention_reward(0.5, 0.5, 0.2, 0.3) == 0.3);
  CHECK(attention_reward(0.5, std::vector<double>{0.4}, 0.3) == 0.3);
  CHECK(attention_reward(0.5, std::vector<double>{}, 0.3) == 0.3);
  CHECK(attention_reward(0.5, std::vector<double>{0.4, 0.6}, 0.3) == 0.0);
}

TEST_CASE("property: attention reward depends only on order") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> level(0, 4);
  for (int i = 0; i < 2000; ++i) {
    const double a = level(rng) / 4.0, b = level(rng) / 4.0, c = level(rng) / 4.0;
    const double base = attention_reward(a, b, c, 0.3);
    auto f = [](double x) { return std::exp(3.0 * x) - 7.0; };
    auto g = [](double x) { return x * x * x + x; };
    CHECK(attention_reward(f(a), f(b), f(c), 0.3) == base);
    CHECK(attention_reward(g(a), g(b), g(c), 0.3) == base);
    CHECK((base == 0.3 || base == 0.0));
  }
}

TEST_CASE("oracle rewards on a hand-built task") {
  auto store = fixture::store();
  OracleJudger j(store);
  const auto task = fixture::next_audio_task();
  const auto ctx = reward_context(task, ModalitySetting::kAudioVisual);
  CHECK(ctx.reference == "B");

  SUBCASE("ideal trace earns the maximum") {
    const auto r = qi_reward(text_with_spans({{{2, 5}, "a bark is heard"}, {{6, 9}, "a siren is heard"}}, "B"), ctx, j);
    CHECK(r.r_cons == 1.0);
    CHECK(r.r_comp == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.total == doctest::Approx(3.0).epsilon(1e-12));
  }
  SUBCASE("one irrelevant span") {
    const auto r = qi_reward(text_with_spans({{{10, 12}, "a bell is heard"}}, "B"), ctx, j);
    CHECK(r.r_comp <= 1.0 / 3.0 + 1e-12);
  }
  SUBCASE("doubled duration cover") {
    const auto r = qi_reward(text_with_spans({{{0, 5}, "a bark is heard"}, {{5, 12}, "a siren is heard"}}, "B"), ctx, j);
    CHECK(r.r_comp == doctest::Approx(2.5 / 3.0).epsilon(1e-12));
  }
  SUBCASE("span beyond the content zeroes process rewards") {
    const auto r = qi_reward(text_with_spans({{{2, 5}, "a bark is heard"}, {{6, 30}, "a siren"}}, "B"), ctx, j);
    CHECK(r.r_format == 1.0);
    CHECK(r.r_ans == 1.0);
    CHECK(r.r_cons == 0.0);
    CHECK(r.r_comp == 0.0);
    CHECK(r.total == 2.0);
    CHECK_FALSE(r.violation.empty());
  }
  SUBCASE("malformed output") {
    const auto r = qi_reward("<answer>B</answer>", ctx, j);
    CHECK(r == RewardBreakdown{});
    CHECK(ma_reward("<answer>B</answer>", ctx, 0.3, j) == RewardBreakdown{});
  }
  SUBCASE("attention-stage totals") {
    const std::string text = text_with_spans({{{2, 5}, "a bark is heard"}}, "B");
    CHECK(ma_reward(text, ctx, 0.3, j).total == doctest::Approx(2.3).epsilon(1e-12));
    CHECK(ma_reward(text, ctx, 0.0, j).total == 2.0);
  }
}

TEST_CASE("property: reward bounds and determinism under the oracle") {
  const auto corpus = generate_corpus(21, WorldParams{60, 1, 1, 1, 20, 120, 0.5});
  OracleJudger j(std::make_shared<const ContentStore>(corpus));
  Rng rng(4);
  FactoredCategoricalPolicy uniform(task_policy_layout());
  for (const auto& t : corpus) {
    auto shared = std::make_shared<const GeneratedTask>(t);
    TaskPrompt prompt(shared, ModalitySetting::kAudioVisual);
    const auto ctx = reward_context(t, ModalitySetting::kAudioVisual);
    for (int k = 0; k < 4; ++k) {
      const std::string text = prompt.render_to_trace(uniform.sample(prompt, rng).actions);
      const auto a = qi_reward(text, ctx, j);
      const auto b = qi_reward(text, ctx, j);
      CHECK(a == b);
      CHECK(a.total >= 0.0);
      CHECK(a.total <= 3.0);
      const auto m = ma_reward(text, ctx, 0.3, j);
      CHECK(m.total >= 0.0);
      CHECK(m.total <= 2.3 + 1e-12);
    }
    // Scripted trace: spans cover the ground truth disjointly and captions name their events.
    const std::string ideal = prompt.render_to_trace(prompt.scripted_actions());
    const auto r = qi_reward(ideal, ctx, j);
    CHECK(coverage_predicate(prompt.chosen_segments(prompt.scripted_actions()), t.ground_truth));
    CHECK(r.r_cons == 1.0);
    CHECK(r.r_comp == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.r_ans == 1.0);
  }
}
