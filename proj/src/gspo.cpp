#include "avrl/gspo.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace avrl {

std::string_view to_string(RatioMode m) { return m == RatioMode::kSequence ? "sequence" : "token"; }

RatioMode parse_ratio_mode(std::string_view s) {
  if (s == "sequence") return RatioMode::kSequence;
  if (s == "token") return RatioMode::kToken;
  throw ConfigError("unknown ratio mode: " + std::string(s));
}

void TrainerConfig::validate() const {
  if (group_size < 2) throw ConfigError("group_size must be at least 2");
  if (!(eps_low > 0.0) || !(eps_high > 0.0)) throw ConfigError("clip offsets must be positive");
  if (eps_low >= 1.0) throw ConfigError("eps_low must be below 1");
  if (!(beta_kl >= 0.0)) throw ConfigError("beta_kl must be non-negative");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and non-negative");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
    throw ConfigError("warmup_fraction must lie in [0, 1]");
  }
  if (!(std_guard > 0.0)) throw ConfigError("std_guard must be positive");
  if (updates_per_batch < 1) throw ConfigError("updates_per_batch must be at least 1");
}

std::vector<double> RolloutGroup::rewards() const {
  std::vector<double> out;
  out.reserve(responses.size());
  for (const auto& r : responses) out.push_back(r.reward);
  return out;
}

void RolloutGroup::assign_advantages(double std_guard) {
  const auto adv = group_advantages(rewards(), std_guard);
  for (std::size_t i = 0; i < responses.size(); ++i) responses[i].advantage = adv[i];
}

namespace {

void check_lengths(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw LengthMismatch("log-prob sequences differ in length");
  if (a.empty()) throw LengthMismatch("empty log-prob sequence");
}

}  // namespace

double sequence_importance_ratio(std::span<const double> logp_new, std::span<const double> logp_old) {
  check_lengths(logp_new, logp_old);
  double sum = 0.0;
  for (std::size_t t = 0; t < logp_new.size(); ++t) sum += logp_new[t] - logp_old[t];
  return std::exp(sum / static_cast<double>(logp_new.size()));
}

std::vector<double> token_importance_ratios(std::span<const double> logp_new,
                                            std::span<const double> logp_old) {
  check_lengths(logp_new, logp_old);
  std::vector<double> out(logp_new.size());
  for (std::size_t t = 0; t < logp_new.size(); ++t) out[t] = std::exp(logp_new[t] - logp_old[t]);
  return out;
}

std::vector<double> group_advantages(std::span<const double> rewards, double std_guard) {
  if (rewards.size() < 2) throw GroupTooSmall("advantage normalization needs at least two rollouts");
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> out(rewards.size(), 0.0);
  if (!(sd >= std_guard)) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / sd;
  return out;
}

double clipped_term(double ratio, double advantage, const TrainerConfig& cfg) {
  const double clipped = std::clamp(ratio, 1.0 - cfg.eps_low, 1.0 + cfg.eps_high);
  return std::min(ratio * advantage, clipped * advantage);
}

bool clip_active(double ratio, double advantage, const TrainerConfig& cfg) {
  const double clipped = std::clamp(ratio, 1.0 - cfg.eps_low, 1.0 + cfg.eps_high);
  return clipped * advantage < ratio * advantage;
}

ObjectiveEvaluation evaluate_objective(std::span<const RolloutGroup> groups,
                                       const FactoredCategoricalPolicy& policy,
                                       const FactoredCategoricalPolicy* reference,
                                       const TrainerConfig& cfg, bool with_gradient) {
  ObjectiveEvaluation out;
  const std::size_t P = policy.num_params();
  if (with_gradient) out.gradient.assign(P, 0.0);
  if (groups.empty()) return out;

  std::size_t clip_count = 0;
  std::size_t clip_total = 0;
  std::vector<double> group_grad(P);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const RolloutGroup& group = groups[g];
    if (!group.prompt) throw std::invalid_argument("rollout group without a prompt");
    if (group.responses.empty()) throw GroupTooSmall("rollout group has no responses");
    const double G = static_cast<double>(group.responses.size());
    double surrogate = 0.0;
    double kl = 0.0;
    std::fill(group_grad.begin(), group_grad.end(), 0.0);

    for (const Response& r : group.responses) {
      const TokenEvaluation ev = policy.evaluate(*group.prompt, r.actions, reference);
      check_lengths(ev.logprobs, r.logp_old);
      const double A = r.advantage;
      const double n = static_cast<double>(ev.logprobs.size());
      if (cfg.ratio_mode == RatioMode::kSequence) {
        const double s = sequence_importance_ratio(ev.logprobs, r.logp_old);
        surrogate += clipped_term(s, A, cfg) / G;
        const bool flat = clip_active(s, A, cfg);
        clip_count += flat;
        ++clip_total;
        if (with_gradient && !flat && A != 0.0) {
          // d s / d theta = s * (1/|y|) sum_t d log pi_t
          const double w = A * s / (n * G);
          for (const auto& row : ev.logprob_grads) {
            for (std::size_t k = 0; k < P; ++k) group_grad[k] += w * row[k];
          }
        }
      } else {
        const auto ratios = token_importance_ratios(ev.logprobs, r.logp_old);
        double term = 0.0;
        for (std::size_t t = 0; t < ratios.size(); ++t) {
          term += clipped_term(ratios[t], A, cfg);
          const bool flat = clip_active(ratios[t], A, cfg);
          clip_count += flat;
          ++clip_total;
          if (with_gradient && !flat && A != 0.0) {
            const double w = A * ratios[t] / (n * G);
            for (std::size_t k = 0; k < P; ++k) group_grad[k] += w * ev.logprob_grads[t][k];
          }
        }
        surrogate += term / (n * G);
      }
      if (reference != nullptr) {
        kl += ev.kl / G;
        if (with_gradient) {
          for (std::size_t k = 0; k < P; ++k) group_grad[k] -= cfg.beta_kl * ev.kl_grad[k] / G;
        }
      }
    }

    if (with_gradient) {
      for (double v : group_grad) {
        if (!std::isfinite(v)) {
          throw NonFiniteGradient("non-finite gradient in group " + group.prompt_id, g);
        }
      }
      for (std::size_t k = 0; k < P; ++k) out.gradient[k] += group_grad[k];
    }
    out.surrogate += surrogate;
    out.kl += kl;
  }

  const double ng = static_cast<double>(groups.size());
  out.surrogate /= ng;
  out.kl /= ng;
  out.value = out.surrogate - cfg.beta_kl * out.kl;
  out.clip_fraction = clip_total ? static_cast<double>(clip_count) / static_cast<double>(clip_total) : 0.0;
  for (auto& v : out.gradient) v /= ng;
  return out;
}

double clipped_objective(std::span<const RolloutGroup> groups, const FactoredCategoricalPolicy& policy,
                         const FactoredCategoricalPolicy* reference, const TrainerConfig& cfg) {
  return evaluate_objective(groups, policy, reference, cfg, false).value;
}

std::vector<double> objective_gradient(std::span<const RolloutGroup> groups,
                                       const FactoredCategoricalPolicy& policy,
                                       const FactoredCategoricalPolicy* reference,
                                       const TrainerConfig& cfg) {
  return evaluate_objective(groups, policy, reference, cfg, true).gradient;
}

double learning_rate(const TrainerConfig& cfg, std::size_t step) {
  const double warm = cfg.warmup_fraction * static_cast<double>(cfg.total_steps);
  if (!(warm > 0.0)) return cfg.lr;
  return cfg.lr * std::min(1.0, static_cast<double>(step) / warm);
}

StepStats train_step(std::span<const RolloutGroup> groups, FactoredCategoricalPolicy& policy,
                     const FactoredCategoricalPolicy* reference, const TrainerConfig& cfg,
                     std::size_t step) {
  StepStats stats;
  stats.step = step;
  stats.lr = learning_rate(cfg, step);
  std::size_t n = 0;
  for (const auto& g : groups) {
    for (const auto& r : g.responses) {
      stats.mean_reward += r.reward;
      stats.mean_abs_advantage += std::abs(r.advantage);
      ++n;
    }
  }
  if (n > 0) {
    stats.mean_reward /= static_cast<double>(n);
    stats.mean_abs_advantage /= static_cast<double>(n);
  }

  std::vector<double> params = policy.params();
  FactoredCategoricalPolicy working(policy.layout(), params);
  for (std::size_t u = 0; u < cfg.updates_per_batch; ++u) {
    ObjectiveEvaluation ev;
    try {
      ev = evaluate_objective(groups, working, reference, cfg, true);
    } catch (const NonFiniteGradient& e) {
      spdlog::error("step {}: {}; update aborted", step, e.what());
      throw;
    }
    if (u == 0) {
      stats.clip_fraction = ev.clip_fraction;
      stats.kl = ev.kl;
      stats.objective = ev.value;
      double sq = 0.0;
      for (double v : ev.gradient) sq += v * v;
      stats.grad_norm = std::sqrt(sq);
    }
    for (std::size_t k = 0; k < params.size(); ++k) params[k] += stats.lr * ev.gradient[k];
    working.set_params(params);
  }
  policy.set_params(std::move(params));
  return stats;
}

// ---------------------------------------------------------------------------

namespace {

struct GradCase {
  std::shared_ptr<StaticPrompt> prompt;
  FeatureLayout layout;
  std::vector<double> params;
  std::vector<double> reference;
  std::vector<RolloutGroup> groups;
};

GradCase random_case(Rng& rng, const GradCheckOptions& opt, const TrainerConfig& cfg) {
  std::uniform_int_distribution<int> n_blocks(1, 3);
  std::uniform_int_distribution<int> dim(1, 4);
  std::uniform_int_distribution<int> n_pos(1, 5);
  std::uniform_int_distribution<int> n_cand(2, 5);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double edge_margin = 20.0 * opt.step;
  for (int attempt = 0; attempt < 10000; ++attempt) {
    GradCase c;
    const int nb = n_blocks(rng);
    for (int b = 0; b < nb; ++b) c.layout.block_dims.push_back(static_cast<std::size_t>(dim(rng)));
    if (c.layout.total() > opt.max_params) continue;

    std::vector<CandidateSet> positions;
    const int np = n_pos(rng);
    for (int p = 0; p < np; ++p) {
      CandidateSet set;
      set.block = static_cast<std::size_t>(std::uniform_int_distribution<int>(0, nb - 1)(rng));
      const int nc = n_cand(rng);
      for (int k = 0; k < nc; ++k) {
        std::vector<double> row(c.layout.block_dims[set.block]);
        for (auto& v : row) v = normal(rng);
        set.features.push_back(std::move(row));
      }
      positions.push_back(std::move(set));
    }
    c.prompt = std::make_shared<StaticPrompt>(std::move(positions));

    const std::size_t P = c.layout.total();
    c.params.resize(P);
    c.reference.resize(P);
    for (std::size_t k = 0; k < P; ++k) {
      c.params[k] = 0.5 * normal(rng);
      c.reference[k] = c.params[k] + 0.3 * normal(rng);
    }
    // The sampling policy sits close to the current one so that ratios fall
    // on both sides of the clip band edges.
    const double spread = 1e-3 * (0.25 + 2.0 * unit(rng));
    std::vector<double> old = c.params;
    for (auto& v : old) v += spread * normal(rng);
    FactoredCategoricalPolicy old_policy(c.layout, old);
    FactoredCategoricalPolicy current(c.layout, c.params);

    bool near_edge = false;
    for (int g = 0; g < 2 && !near_edge; ++g) {
      RolloutGroup group;
      group.prompt_id = "case-" + std::to_string(g);
      group.prompt = c.prompt;
      for (int i = 0; i < 4; ++i) {
        PolicySample s = old_policy.sample(*c.prompt, rng);
        Response r;
        r.actions = s.actions;
        r.logp_old = s.logprobs;
        r.reward = normal(rng);
        group.responses.push_back(std::move(r));
      }
      group.assign_advantages(cfg.std_guard);
      for (const auto& r : group.responses) {
        const auto lp = current.logprob(*c.prompt, r.actions);
        std::vector<double> ratios;
        if (opt.mode == RatioMode::kSequence) {
          ratios.push_back(sequence_importance_ratio(lp, r.logp_old));
        } else {
          ratios = token_importance_ratios(lp, r.logp_old);
        }
        for (double s : ratios) {
          if (std::abs(s - (1.0 - cfg.eps_low)) < edge_margin ||
              std::abs(s - (1.0 + cfg.eps_high)) < edge_margin) {
            near_edge = true;
          }
        }
      }
      c.groups.push_back(std::move(group));
    }
    if (!near_edge) return c;
  }
  throw std::runtime_error("could not draw a gradient-check case away from the clip edges");
}

}  // namespace

GradCheckResult run_grad_check(const GradCheckOptions& options) {
  TrainerConfig cfg;
  cfg.ratio_mode = options.mode;
  Rng rng(options.seed);
  GradCheckResult result;
  for (std::size_t i = 0; i < options.cases; ++i) {
    GradCase c = random_case(rng, options, cfg);
    FactoredCategoricalPolicy policy(c.layout, c.params);
    FactoredCategoricalPolicy reference(c.layout, c.reference);
    const ObjectiveEvaluation ev = evaluate_objective(c.groups, policy, &reference, cfg, true);

    for (const auto& g : c.groups) {
      for (const auto& r : g.responses) {
        const auto lp = policy.logprob(*g.prompt, r.actions);
        std::vector<double> ratios;
        if (options.mode == RatioMode::kSequence) {
          ratios.push_back(sequence_importance_ratio(lp, r.logp_old));
        } else {
          ratios = token_importance_ratios(lp, r.logp_old);
        }
        for (double s : ratios) {
          if (clip_active(s, r.advantage, cfg)) {
            ++result.clipped_terms;
          } else {
            ++result.unclipped_terms;
          }
        }
      }
    }

    double worst = 0.0;
    std::vector<double> theta = c.params;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double saved = theta[k];
      theta[k] = saved + options.step;
      policy.set_params(theta);
      const double up = clipped_objective(c.groups, policy, &reference, cfg);
      theta[k] = saved - options.step;
      policy.set_params(theta);
      const double down = clipped_objective(c.groups, policy, &reference, cfg);
      theta[k] = saved;
      const double fd = (up - down) / (2.0 * options.step);
      const double analytic = options.analytic_scale * ev.gradient[k];
      const double denom = std::max({std::abs(analytic), std::abs(fd), kGradCheckFloor});
      worst = std::max(worst, std::abs(analytic - fd) / denom);
    }
    ++result.cases;
    if (!(worst < options.tolerance)) ++result.failures;
    result.max_relative_error = std::max(result.max_relative_error, worst);
  }
  return result;
}

}  // namespace avrl
