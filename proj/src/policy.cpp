#include "avrl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace avrl {

std::size_t FeatureLayout::total() const {
  return std::accumulate(block_dims.begin(), block_dims.end(), std::size_t{0});
}

std::size_t FeatureLayout::offset(std::size_t block) const {
  if (block >= block_dims.size()) throw SchemaMismatch("unknown parameter block");
  return std::accumulate(block_dims.begin(), block_dims.begin() + static_cast<long>(block),
                         std::size_t{0});
}

std::string FeatureLayout::describe() const {
  std::ostringstream os;
  os << "blocks:";
  for (std::size_t i = 0; i < block_dims.size(); ++i) os << (i ? "," : "") << block_dims[i];
  return os.str();
}

FactoredCategoricalPolicy::FactoredCategoricalPolicy(FeatureLayout layout)
    : layout_(std::move(layout)), params_(layout_.total(), 0.0) {}

FactoredCategoricalPolicy::FactoredCategoricalPolicy(FeatureLayout layout,
                                                     std::vector<double> params)
    : layout_(std::move(layout)) {
  set_params(std::move(params));
}

void FactoredCategoricalPolicy::set_params(std::vector<double> params) {
  if (params.size() != layout_.total()) throw SchemaMismatch("parameter vector size mismatch");
  params_ = std::move(params);
}

std::vector<double> FactoredCategoricalPolicy::logits(const CandidateSet& set) const {
  if (set.size() == 0) throw SchemaMismatch("empty candidate set");
  const std::size_t off = layout_.offset(set.block);
  const std::size_t dim = layout_.block_dims[set.block];
  std::vector<double> z(set.size(), 0.0);
  for (std::size_t c = 0; c < set.size(); ++c) {
    const auto& row = set.features[c];
    if (row.size() != dim) throw SchemaMismatch("feature row does not match block dimension");
    double acc = 0.0;
    for (std::size_t k = 0; k < dim; ++k) acc += params_[off + k] * row[k];
    z[c] = acc;
  }
  return z;
}

namespace {

std::vector<double> log_softmax(const std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  const double lse = m + std::log(s);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
  return out;
}

}  // namespace

std::vector<double> FactoredCategoricalPolicy::log_probabilities(const CandidateSet& set) const {
  return log_softmax(logits(set));
}

PolicySample FactoredCategoricalPolicy::sample(const DecisionPrompt& prompt, Rng& rng,
                                               double temperature) const {
  PolicySample out;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t t = 0; t < prompt.num_positions(); ++t) {
    const CandidateSet set = prompt.candidates(t, out.actions);
    const auto z = logits(set);
    const auto logp = log_softmax(z);
    int choice = 0;
    if (temperature <= 0.0) {
      choice = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    } else {
      std::vector<double> scaled(z.size());
      for (std::size_t c = 0; c < z.size(); ++c) scaled[c] = z[c] / temperature;
      const auto lp = log_softmax(scaled);
      const double u = unit(rng);
      double cum = 0.0;
      choice = static_cast<int>(z.size()) - 1;
      for (std::size_t c = 0; c < z.size(); ++c) {
        cum += std::exp(lp[c]);
        if (u < cum) {
          choice = static_cast<int>(c);
          break;
        }
      }
    }
    out.actions.push_back(choice);
    out.logprobs.push_back(logp[static_cast<std::size_t>(choice)]);
  }
  return out;
}

TokenEvaluation FactoredCategoricalPolicy::evaluate(const DecisionPrompt& prompt,
                                                    std::span<const int> actions,
                                                    const FactoredCategoricalPolicy* reference) const {
  if (actions.size() != prompt.num_positions()) {
    throw InvalidAction("action sequence length does not match the prompt schema");
  }
  if (reference != nullptr && reference->layout_ != layout_) {
    throw SchemaMismatch("reference policy has a different layout");
  }
  TokenEvaluation ev;
  const std::size_t n = actions.size();
  ev.logprobs.reserve(n);
  ev.logprob_grads.assign(n, std::vector<double>(params_.size(), 0.0));
  if (reference != nullptr) ev.kl_grad.assign(params_.size(), 0.0);

  for (std::size_t t = 0; t < n; ++t) {
    const CandidateSet set = prompt.candidates(t, actions.first(t));
    const int a = actions[t];
    if (a < 0 || static_cast<std::size_t>(a) >= set.size()) {
      throw InvalidAction("action " + std::to_string(a) + " outside candidate set at position " +
                          std::to_string(t));
    }
    const auto logp = log_probabilities(set);
    ev.logprobs.push_back(logp[static_cast<std::size_t>(a)]);

    const std::size_t off = layout_.offset(set.block);
    const std::size_t dim = layout_.block_dims[set.block];
    // d log p_a / d theta = phi_a - sum_c p_c phi_c
    auto& g = ev.logprob_grads[t];
    for (std::size_t k = 0; k < dim; ++k) g[off + k] = set.features[static_cast<std::size_t>(a)][k];
    for (std::size_t c = 0; c < set.size(); ++c) {
      const double p = std::exp(logp[c]);
      for (std::size_t k = 0; k < dim; ++k) g[off + k] -= p * set.features[c][k];
    }

    if (reference != nullptr) {
      const auto logq = reference->log_probabilities(set);
      double kl = 0.0;
      for (std::size_t c = 0; c < set.size(); ++c) kl += std::exp(logp[c]) * (logp[c] - logq[c]);
      ev.kl += kl;
      // dKL/dz_c = p_c (log p_c - log q_c - KL)
      for (std::size_t c = 0; c < set.size(); ++c) {
        const double w = std::exp(logp[c]) * (logp[c] - logq[c] - kl);
        for (std::size_t k = 0; k < dim; ++k) ev.kl_grad[off + k] += w * set.features[c][k];
      }
    }
  }
  if (reference != nullptr && n > 0) {
    ev.kl /= static_cast<double>(n);
    for (auto& v : ev.kl_grad) v /= static_cast<double>(n);
  }
  return ev;
}

std::vector<double> FactoredCategoricalPolicy::logprob(const DecisionPrompt& prompt,
                                                       std::span<const int> actions) const {
  if (actions.size() != prompt.num_positions()) {
    throw InvalidAction("action sequence length does not match the prompt schema");
  }
  std::vector<double> out;
  for (std::size_t t = 0; t < actions.size(); ++t) {
    const CandidateSet set = prompt.candidates(t, actions.first(t));
    const int a = actions[t];
    if (a < 0 || static_cast<std::size_t>(a) >= set.size()) {
      throw InvalidAction("action " + std::to_string(a) + " outside candidate set at position " +
                          std::to_string(t));
    }
    out.push_back(log_probabilities(set)[static_cast<std::size_t>(a)]);
  }
  return out;
}

std::vector<double> FactoredCategoricalPolicy::grad_logprob(const DecisionPrompt& prompt,
                                                            std::span<const int> actions) const {
  const TokenEvaluation ev = evaluate(prompt, actions);
  std::vector<double> g(params_.size(), 0.0);
  for (const auto& row : ev.logprob_grads) {
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += row[k];
  }
  return g;
}

double FactoredCategoricalPolicy::exact_kl(const DecisionPrompt& prompt,
                                           std::span<const int> actions,
                                           const FactoredCategoricalPolicy& other) const {
  return evaluate(prompt, actions, &other).kl;
}

std::vector<std::vector<int>> enumerate_sequences(const DecisionPrompt& prompt, std::size_t limit) {
  std::vector<std::vector<int>> out;
  std::vector<int> prefix;
  const std::size_t n = prompt.num_positions();
  // Depth-first walk over the candidate tree.
  auto walk = [&](auto&& self) -> void {
    if (out.size() > limit) throw std::length_error("too many action sequences to enumerate");
    if (prefix.size() == n) {
      out.push_back(prefix);
      return;
    }
    const std::size_t count = prompt.candidates(prefix.size(), prefix).size();
    for (std::size_t c = 0; c < count; ++c) {
      prefix.push_back(static_cast<int>(c));
      self(self);
      prefix.pop_back();
    }
  };
  walk(walk);
  return out;
}

}  // namespace avrl
