#pragma once

// Factored categorical policies with exact log-probabilities and gradients.
//
// An action sequence is one choice per decision position. At each position
// the prompt supplies a finite candidate set with one feature row per
// candidate; the policy scores a candidate with the dot product of that row
// and the parameter block assigned to the position, and normalizes with a
// softmax. Candidate sets may depend on the choices already made.

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace avrl {

using Rng = std::mt19937_64;

class InvalidAction : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class SchemaMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct CandidateSet {
  std::size_t block = 0;
  std::vector<std::vector<double>> features;  // one row per candidate

  std::size_t size() const { return features.size(); }
};

class DecisionPrompt {
 public:
  virtual ~DecisionPrompt() = default;
  virtual std::size_t num_positions() const = 0;
  virtual CandidateSet candidates(std::size_t position, std::span<const int> prefix) const = 0;
};

// Prefix-independent candidate sets, given explicitly.
class StaticPrompt : public DecisionPrompt {
 public:
  explicit StaticPrompt(std::vector<CandidateSet> positions) : positions_(std::move(positions)) {}
  std::size_t num_positions() const override { return positions_.size(); }
  CandidateSet candidates(std::size_t position, std::span<const int>) const override {
    return positions_.at(position);
  }

 private:
  std::vector<CandidateSet> positions_;
};

// Dimensions of the parameter blocks.
struct FeatureLayout {
  std::vector<std::size_t> block_dims;

  std::size_t total() const;
  std::size_t offset(std::size_t block) const;
  std::string describe() const;

  friend bool operator==(const FeatureLayout&, const FeatureLayout&) = default;
};

struct PolicySample {
  std::vector<int> actions;
  std::vector<double> logprobs;
};

// Per-token quantities of one action sequence under a policy.
struct TokenEvaluation {
  std::vector<double> logprobs;
  std::vector<std::vector<double>> logprob_grads;  // |y| x P
  // Mean over positions of KL(policy || reference) at the visited prefixes,
  // and its gradient. Zero when no reference was given.
  double kl = 0.0;
  std::vector<double> kl_grad;
};

class FactoredCategoricalPolicy {
 public:
  explicit FactoredCategoricalPolicy(FeatureLayout layout);
  FactoredCategoricalPolicy(FeatureLayout layout, std::vector<double> params);

  const FeatureLayout& layout() const { return layout_; }
  std::size_t num_params() const { return params_.size(); }
  const std::vector<double>& params() const { return params_; }
  void set_params(std::vector<double> params);

  // Log-softmax over a candidate set.
  std::vector<double> log_probabilities(const CandidateSet& set) const;

  // Ancestral sampling. temperature 0 picks the argmax (lowest index on ties).
  // Recorded log-probs are always those of the policy itself.
  PolicySample sample(const DecisionPrompt& prompt, Rng& rng, double temperature = 1.0) const;

  // Throws InvalidAction for a choice outside its candidate set.
  std::vector<double> logprob(const DecisionPrompt& prompt, std::span<const int> actions) const;

  // Sum over positions of the per-position score gradients.
  std::vector<double> grad_logprob(const DecisionPrompt& prompt, std::span<const int> actions) const;

  TokenEvaluation evaluate(const DecisionPrompt& prompt, std::span<const int> actions,
                           const FactoredCategoricalPolicy* reference = nullptr) const;

  // Mean per-token KL(this || other) along the prefixes of the given actions.
  // For prefix-independent prompts this is the closed-form factored KL
  // divided by the number of positions, whatever the actions.
  double exact_kl(const DecisionPrompt& prompt, std::span<const int> actions,
                  const FactoredCategoricalPolicy& other) const;

 private:
  std::vector<double> logits(const CandidateSet& set) const;

  FeatureLayout layout_;
  std::vector<double> params_;
};

// Every action sequence the prompt admits (for exhaustive checks on small schemas).
std::vector<std::vector<int>> enumerate_sequences(const DecisionPrompt& prompt,
                                                  std::size_t limit = 100000);

}  // namespace avrl
