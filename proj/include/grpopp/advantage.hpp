#pragma once

// Group-relative advantages: standard GRPO normalization and the
// confidence-aware variant that switches to an absolute, log-likelihood
// weighted penalty when no response in the group clears the threshold.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grpopp/errors.hpp"
#include "grpopp/labels.hpp"
#include "grpopp/policy.hpp"
#include "grpopp/rewards.hpp"

namespace grpopp {

struct ResponseGroup {
  Prompt prompt;
  std::vector<Response> responses;
  std::vector<double> rewards;  // terminal reward per response
  std::vector<double> logliks;  // sequence log-likelihood under the sampling policy
  std::optional<Label> truth;

  std::size_t size() const noexcept { return responses.size(); }

  void validate() const {
    if (responses.empty()) throw InvalidInput("response group must contain at least one response");
    if (rewards.size() != responses.size() || logliks.size() != responses.size()) {
      throw InvalidInput("response group: rewards, logliks and responses must have equal length");
    }
    for (std::size_t i = 0; i < responses.size(); ++i) {
      if (responses[i].tokens.empty()) throw InvalidInput("response group: empty response");
      if (!std::isfinite(rewards[i]) || !std::isfinite(logliks[i])) {
        throw InvalidInput("response group: rewards and logliks must be finite");
      }
    }
  }
};

// Builds a group from sampled responses, scoring each with the reward model.
inline ResponseGroup make_group(Prompt prompt, std::vector<Response> responses,
                                std::optional<Label> truth, const RewardSpec& spec) {
  ResponseGroup g;
  g.prompt = std::move(prompt);
  g.truth = truth;
  for (const auto& r : responses) {
    g.rewards.push_back(score_tokens(r.tokens, truth, spec));
    g.logliks.push_back(r.total_logprob);
  }
  g.responses = std::move(responses);
  return g;
}

enum class Branch { Standard, ConfidencePenalty };

inline const char* to_string(Branch b) noexcept {
  return b == Branch::Standard ? "standard" : "confidence_penalty";
}

struct AdvantageParams {
  double beta = 1.0;
  double gamma = 0.5;
  double tau = 0.0;
  double eps = 1e-8;

  void validate() const {
    if (!(beta > 0.0)) throw ConfigError("beta must be > 0");
    if (!(gamma > 0.0)) throw ConfigError("gamma must be > 0");
    if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
    if (!std::isfinite(tau)) throw ConfigError("tau must be finite");
  }
};

struct AdvantageDiagnostics {
  double mean_reward = 0.0;
  double std_reward = 0.0;
  double loglik_min = 0.0;
  double loglik_max = 0.0;
  std::size_t confident_count = 0;
};

struct AdvantageSet {
  std::vector<std::vector<double>> values;  // [response][token]
  Branch branch = Branch::Standard;
  AdvantageDiagnostics diagnostics;

  // First-token value of each response (responses are constant across tokens
  // for terminal-only rewards).
  std::vector<double> per_response() const {
    std::vector<double> out;
    out.reserve(values.size());
    for (const auto& v : values) out.push_back(v.front());
    return out;
  }
};

inline std::vector<std::size_t> confidence_set(std::span<const double> rewards, double tau) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    if (rewards[i] >= tau) out.push_back(i);
  }
  return out;
}

namespace detail {

// Mean and population standard deviation, shifted by the first element so
// that a constant sequence yields exactly (x, 0).
inline std::pair<double, double> mean_and_population_std(std::span<const double> xs) {
  const double shift = xs.front();
  double acc = 0.0;
  for (double x : xs) acc += x - shift;
  const double n = static_cast<double>(xs.size());
  const double mean = shift + acc / n;
  double sq = 0.0;
  for (double x : xs) sq += (x - mean) * (x - mean);
  return {mean, std::sqrt(sq / n)};
}

inline void fill_loglik_range(std::span<const double> logliks, AdvantageDiagnostics& d) {
  const auto [lo, hi] = std::minmax_element(logliks.begin(), logliks.end());
  d.loglik_min = *lo;
  d.loglik_max = *hi;
}

}  // namespace detail

// (R_{i,t} - mean) / (std + eps) with statistics over terminal rewards.
inline AdvantageSet grpo_advantage(const ResponseGroup& group, double eps, double tau = 0.0) {
  if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
  group.validate();
  AdvantageSet out;
  out.branch = Branch::Standard;
  const auto [mean, sd] = detail::mean_and_population_std(group.rewards);
  out.diagnostics.mean_reward = mean;
  out.diagnostics.std_reward = sd;
  out.diagnostics.confident_count = confidence_set(group.rewards, tau).size();
  detail::fill_loglik_range(group.logliks, out.diagnostics);

  out.values.reserve(group.size());
  for (std::size_t i = 0; i < group.size(); ++i) {
    auto values = reward_to_go(group.rewards[i], group.responses[i].length());
    for (auto& v : values) v = (v - mean) / (sd + eps);
    out.values.push_back(std::move(values));
  }
  return out;
}

// w_i = (l_i - l_min) / (l_max - l_min + eps), in [0, 1).
inline std::vector<double> confidence_weights(std::span<const double> logliks, double eps) {
  if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
  if (logliks.empty()) return {};
  const auto [lo, hi] = std::minmax_element(logliks.begin(), logliks.end());
  const double denom = (*hi - *lo) + eps;
  std::vector<double> w;
  w.reserve(logliks.size());
  for (double l : logliks) w.push_back((l - *lo) / denom);
  return w;
}

inline AdvantageSet ca_advantage(const ResponseGroup& group, const AdvantageParams& p) {
  p.validate();
  group.validate();
  const std::size_t confident = confidence_set(group.rewards, p.tau).size();
  if (confident >= 1) return grpo_advantage(group, p.eps, p.tau);

  AdvantageSet out;
  out.branch = Branch::ConfidencePenalty;
  const auto [mean, sd] = detail::mean_and_population_std(group.rewards);
  out.diagnostics.mean_reward = mean;
  out.diagnostics.std_reward = sd;
  out.diagnostics.confident_count = 0;
  detail::fill_loglik_range(group.logliks, out.diagnostics);

  const auto w = confidence_weights(group.logliks, p.eps);
  out.values.reserve(group.size());
  for (std::size_t i = 0; i < group.size(); ++i) {
#ifdef GRPOPP_INJECT_PENALTY_SIGN_BUG
    const double value = p.beta * w[i] + p.gamma;
#else
    const double value = -p.beta * w[i] - p.gamma;
#endif
    out.values.emplace_back(group.responses[i].length(), value);
  }
  return out;
}

}  // namespace grpopp
