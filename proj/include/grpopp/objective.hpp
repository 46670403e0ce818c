#pragma once

// Clipped group-relative surrogate:
//   J = mean_q (1/m) sum_i (1/|o_i|) sum_t min(rho A, clip(rho, 1-eps, 1+eps) A)
// maximized by gradient ascent. Advantages and the old policy are constants.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "grpopp/advantage.hpp"
#include "grpopp/errors.hpp"
#include "grpopp/policy.hpp"

namespace grpopp {

struct ClipConfig {
  double clip_eps = 0.2;

  void validate() const {
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw ConfigError("clip_eps must lie in (0, 1)");
  }
};

// Optional per-token KL(pi_theta || pi_ref) penalty using the
// r - log r - 1 estimator with r = pi_ref / pi_theta. Off unless coeff > 0.
struct KlRegularizer {
  double coeff = 0.0;
  PolicyParams reference;
};

struct ObjectiveReport {
  double value = 0.0;
  std::vector<double> gradient;
  double ratio_min = 0.0;
  double ratio_max = 0.0;
  double ratio_mean = 0.0;
  double clipped_fraction = 0.0;
};

inline double clip(double rho, double clip_eps) {
  return std::clamp(rho, 1.0 - clip_eps, 1.0 + clip_eps);
}

inline double clipped_term(double rho, double adv, double clip_eps) {
  return std::min(rho * adv, clip(rho, clip_eps) * adv);
}

// True when the clipped branch is strictly smaller; ties go to the unclipped
// branch, which carries the gradient.
inline bool clip_binding(double rho, double adv, double clip_eps) {
  return clip(rho, clip_eps) * adv < rho * adv;
}

namespace detail {

inline void check_compatible(const PolicyParams& params, const PolicyParams& old_params) {
  if (!(params.shape() == old_params.shape())) {
    throw InvalidInput("current and old policy parameters have different shapes");
  }
}

inline void check_batch(std::span<const ResponseGroup> groups,
                        std::span<const AdvantageSet> advantages) {
  if (groups.size() != advantages.size()) {
    throw InvalidInput("objective: " + std::to_string(groups.size()) + " groups but " +
                       std::to_string(advantages.size()) + " advantage sets");
  }
  if (groups.empty()) throw InvalidInput("objective: empty batch");
  for (std::size_t q = 0; q < groups.size(); ++q) {
    groups[q].validate();
    if (advantages[q].values.size() != groups[q].size()) {
      throw InvalidInput("objective: advantage set size does not match its group");
    }
    for (std::size_t i = 0; i < groups[q].size(); ++i) {
      if (advantages[q].values[i].size() != groups[q].responses[i].length()) {
        throw InvalidInput("objective: advantage length does not match response length");
      }
    }
  }
}

}  // namespace detail

// rho_{i,t} = exp(log pi_theta - log pi_old) for every token of every response.
inline std::vector<std::vector<double>> importance_ratios(const PolicyParams& params,
                                                          const PolicyParams& old_params,
                                                          const ResponseGroup& group) {
  detail::check_compatible(params, old_params);
  group.validate();
  std::vector<std::vector<double>> out;
  out.reserve(group.size());
  for (const auto& r : group.responses) {
    const auto now = token_logprobs(params, group.prompt, r.tokens);
    const auto old = token_logprobs(old_params, group.prompt, r.tokens);
    std::vector<double> rho(now.size());
    for (std::size_t t = 0; t < now.size(); ++t) rho[t] = std::exp(now[t] - old[t]);
    out.push_back(std::move(rho));
  }
  return out;
}

// Value, analytic gradient and ratio statistics in one pass.
inline ObjectiveReport evaluate_objective(const PolicyParams& params,
                                          const PolicyParams& old_params,
                                          std::span<const ResponseGroup> groups,
                                          std::span<const AdvantageSet> advantages,
                                          const ClipConfig& clip_cfg,
                                          const std::optional<KlRegularizer>& kl = std::nullopt) {
  clip_cfg.validate();
  detail::check_compatible(params, old_params);
  detail::check_batch(groups, advantages);
  const bool use_kl = kl && kl->coeff != 0.0;
  if (use_kl) detail::check_compatible(params, kl->reference);

  const auto& shape = params.shape();
  const double eps = clip_cfg.clip_eps;
  ObjectiveReport rep;
  rep.gradient.assign(params.size(), 0.0);
  rep.ratio_min = std::numeric_limits<double>::infinity();
  rep.ratio_max = -std::numeric_limits<double>::infinity();

  std::vector<double> lp(shape.vocab_size), lp_old(shape.vocab_size), lp_ref(shape.vocab_size);
  std::size_t n_tokens = 0, n_clipped = 0;
  double ratio_sum = 0.0;
  const double batch_weight = 1.0 / static_cast<double>(groups.size());

  for (std::size_t q = 0; q < groups.size(); ++q) {
    const auto& group = groups[q];
    const std::size_t ctx = group.prompt.context_id;
    if (ctx >= shape.num_contexts) throw InvalidInput("objective: context id out of range");
    const double group_weight = batch_weight / static_cast<double>(group.size());

    for (std::size_t i = 0; i < group.size(); ++i) {
      const auto& tokens = group.responses[i].tokens;
      detail::check_tokens(params, tokens);
      const double token_weight = group_weight / static_cast<double>(tokens.size());

      for (std::size_t t = 0; t < tokens.size(); ++t) {
        const std::size_t tok = tokens[t];
        log_softmax(params.logits(ctx, t), lp);
        log_softmax(old_params.logits(ctx, t), lp_old);
        const double rho = std::exp(lp[tok] - lp_old[tok]);
        const double adv = advantages[q].values[i][t];

        rep.ratio_min = std::min(rep.ratio_min, rho);
        rep.ratio_max = std::max(rep.ratio_max, rho);
        ratio_sum += rho;
        ++n_tokens;

        // d(token objective)/d(log pi_theta(tok)); the logit gradient is this
        // times (one-hot - softmax) on the row.
        double dlogp = 0.0;
        rep.value += token_weight * clipped_term(rho, adv, eps);
        if (clip_binding(rho, adv, eps)) {
          ++n_clipped;
        } else {
          dlogp += rho * adv;
        }

        if (use_kl) {
          log_softmax(kl->reference.logits(ctx, t), lp_ref);
          const double r = std::exp(lp_ref[tok] - lp[tok]);
          rep.value -= token_weight * kl->coeff * (r - std::log(r) - 1.0);
          // d/dlogp of (r - log r - 1) is (1 - r).
          dlogp -= kl->coeff * (1.0 - r);
        }

        if (dlogp != 0.0) {
          const std::size_t base = params.offset(ctx, t);
          const double c = token_weight * dlogp;
          for (std::size_t j = 0; j < shape.vocab_size; ++j) {
            rep.gradient[base + j] -= c * std::exp(lp[j]);
          }
          rep.gradient[base + tok] += c;
        }
      }
    }
  }
  rep.ratio_mean = ratio_sum / static_cast<double>(n_tokens);
  rep.clipped_fraction = static_cast<double>(n_clipped) / static_cast<double>(n_tokens);
  return rep;
}

inline double objective_value(const PolicyParams& params, const PolicyParams& old_params,
                              std::span<const ResponseGroup> groups,
                              std::span<const AdvantageSet> advantages, const ClipConfig& clip_cfg,
                              const std::optional<KlRegularizer>& kl = std::nullopt) {
  return evaluate_objective(params, old_params, groups, advantages, clip_cfg, kl).value;
}

inline std::vector<double> objective_gradient(const PolicyParams& params,
                                              const PolicyParams& old_params,
                                              std::span<const ResponseGroup> groups,
                                              std::span<const AdvantageSet> advantages,
                                              const ClipConfig& clip_cfg,
                                              const std::optional<KlRegularizer>& kl = std::nullopt) {
  return evaluate_objective(params, old_params, groups, advantages, clip_cfg, kl).gradient;
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace grpopp
