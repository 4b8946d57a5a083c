#pragma once

// Reward fixture: 30 grounding-stage and 20 attention-stage cases with totals
// evaluated by hand from the stage formulas. A scripted judger returns each
// caption's own text as its consistency score.

#include <string>
#include <vector>

#include "avrl/judge.hpp"
#include "avrl/trace.hpp"

namespace avrl::fixture {

class ScriptedJudger : public Judger {
 public:
  double completeness = 0.0;
  double free_text = 0.0;

  JudgeScore judge_consistency(const std::string&, const TimeSpan&, const std::string& caption,
                               const RuleSet&) override {
    return JudgeScore{std::stod(caption), {}};
  }
  JudgeScore judge_completeness(const CompositeContentRef&, const std::string&, const std::string&,
                                const RuleSet&) override {
    return JudgeScore{completeness, {}};
  }

 protected:
  JudgeScore judge_free_text(const std::string&, const std::string&, const std::string&) override {
    return JudgeScore{free_text, {}};
  }
};

struct RewardCase {
  bool well_formed;
  std::string answer;  // "free" selects free-text scoring with free_text_score
  double free_text_score;
  std::vector<double> consistency;  // one pair per entry
  double completeness;
  double attention;
  double expected_total;
};

// Reference answer is "B" among four options unless the case uses free text.
inline const std::vector<RewardCase>& grounding_cases() {
  static const std::vector<RewardCase> kCases = {
    {true, "free", 0.5, {0.8}, 0.6, 0.0, 2.2},
    {false, "B", 0.0, {1.0}, 1.0, 0.0, 0.0},
    {true, "B", 0.0, {1.0, 1.0}, 1.0, 0.0, 3.0},
    {true, "A", 0.0, {1.0, 0.5}, 0.0, 0.0, 1.375},
    {true, "B", 0.5, {0.9, 0.5}, 0.8, 0.0, 2.75},
    {true, "free", 0.5, {0.75}, 0.25, 0.0, 2.0},
    {true, "C", 1.0, {0.6, 0.25, 0.75, 0.25}, 0.3333333333333333, 0.0, 1.3979166666666667},
    {true, "A", 0.25, {1.0, 0.0, 1.0, 0.0}, 0.6, 0.0, 1.55},
    {true, "free", 1.0, {0.9, 0.25, 0.8, 0.5}, 0.0, 0.0, 2.30625},
    {true, "b)", 1.0, {0.0, 0.6}, 0.8, 0.0, 2.55},
    {true, "C", 1.0, {0.75, 0.8, 1.0, 0.0}, 0.8, 0.0, 1.71875},
    {true, "b)", 0.0, {0.75, 0.0}, 0.5, 0.0, 2.4375},
    {false, "free", 0.0, {0.8}, 0.3333333333333333, 0.0, 0.0},
    {true, "B", 0.0, {0.0}, 0.6, 0.0, 2.3},
    {true, "A", 0.0, {0.6, 0.8, 0.0, 0.75}, 0.0, 0.0, 1.26875},
    {false, "A", 0.0, {0.75, 0.6, 0.0}, 0.8, 0.0, 0.0},
    {true, "A", 0.5, {0.8, 0.8, 0.25}, 0.3333333333333333, 0.0, 1.475},
    {true, "C", 1.0, {0.5, 0.0, 0.6, 0.75}, 0.5, 0.0, 1.48125},
    {true, "C", 0.5, {0.8, 1.0, 0.6, 0.8}, 0.0, 0.0, 1.4},
    {true, "B", 0.0, {0.8, 0.9, 0.8, 0.8}, 0.8, 0.0, 2.8125},
    {true, "A", 0.0, {1.0, 0.8, 0.0}, 1.0, 0.0, 1.8},
    {true, "C", 0.5, {0.25, 0.8, 0.25, 0.8}, 0.3333333333333333, 0.0, 1.4291666666666667},
    {true, "b)", 0.5, {0.6, 0.5, 1.0}, 0.8, 0.0, 2.75},
    {true, "B", 0.5, {0.75, 0.8}, 0.25, 0.0, 2.5125},
    {true, "A", 0.0, {0.8, 0.8, 0.75, 0.9}, 0.3333333333333333, 0.0, 1.5729166666666665},
    {false, "B", 1.0, {0.0, 0.75}, 0.3333333333333333, 0.0, 0.0},
    {false, "B", 0.5, {0.25}, 0.3333333333333333, 0.0, 0.0},
    {true, "A", 0.5, {0.25, 0.6, 0.0}, 0.8, 0.0, 1.5416666666666667},
    {true, "free", 0.5, {0.6, 0.6, 1.0}, 0.6, 0.0, 2.166666666666667},
    {true, "free", 1.0, {0.75, 1.0}, 1.0, 0.0, 2.9375},
  };
  return kCases;
}

inline const std::vector<RewardCase>& attention_cases() {
  static const std::vector<RewardCase> kCases = {
    {true, "B", 0.0, {}, 0.0, 0.3, 2.3},
    {false, "B", 0.0, {}, 0.0, 0.3, 0.0},
    {true, "A", 0.0, {}, 0.0, 0.0, 1.0},
    {true, "D", 0.5, {}, 0.0, 0.3, 1.3},
    {true, "A", 0.5, {}, 0.0, 0.0, 1.0},
    {true, "A", 0.0, {}, 0.0, 0.0, 1.0},
    {true, "free", 0.0, {}, 0.0, 0.0, 1.0},
    {true, "A", 0.25, {}, 0.0, 0.3, 1.3},
    {true, "A", 1.0, {}, 0.0, 0.0, 1.0},
    {true, "D", 0.0, {}, 0.0, 0.3, 1.3},
    {false, "D", 1.0, {}, 0.0, 0.0, 0.0},
    {true, "B", 0.0, {}, 0.0, 0.0, 2.0},
    {true, "(B)", 0.25, {}, 0.0, 0.0, 2.0},
    {true, "D", 1.0, {}, 0.0, 0.0, 1.0},
    {true, "B", 0.5, {}, 0.0, 0.3, 2.3},
    {false, "(B)", 0.0, {}, 0.0, 0.0, 0.0},
    {true, "A", 0.0, {}, 0.0, 0.0, 1.0},
    {false, "A", 0.0, {}, 0.0, 0.3, 0.0},
    {true, "(B)", 0.0, {}, 0.0, 0.3, 2.3},
    {true, "free", 0.5, {}, 0.0, 0.3, 1.8},
  };
  return kCases;
}

// Trace text for a case; malformed cases drop the closing answer tag.
inline std::string case_text(const RewardCase& c) {
  StructuredTrace t;
  const std::vector<double> scores = c.consistency.empty() ? std::vector<double>{1.0} : c.consistency;
  double start = 0.0;
  for (double s : scores) {
    t.pairs.push_back({TimeSpan{start, start + 1.0}, std::to_string(s)});
    start += 2.0;
  }
  t.thinking = "t";
  t.final_answer = c.answer == "free" ? "some words" : c.answer;
  std::string text = serialize_trace(t);
  if (!c.well_formed) text.resize(text.size() - std::string("</answer>").size());
  return text;
}

inline RewardContext case_context(const RewardCase& c) {
  RewardContext ctx;
  ctx.content_ref = "scripted";
  ctx.content_duration = 100.0;
  ctx.question = "q";
  ctx.reference = c.answer == "free" ? "reference words" : "B";
  if (c.answer != "free") ctx.options = {"w", "x", "y", "z"};
  return ctx;
}

}  // namespace avrl::fixture
