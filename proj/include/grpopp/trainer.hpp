#pragma once

// The GRPO / GRPO++ training loop: per iteration a reference snapshot, per
// step an old-policy snapshot, group sampling, reward scoring, branch
// selection, then T ascent steps on the clipped surrogate.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grpopp/advantage.hpp"
#include "grpopp/env.hpp"
#include "grpopp/errors.hpp"
#include "grpopp/objective.hpp"
#include "grpopp/policy.hpp"
#include "grpopp/random.hpp"
#include "grpopp/rewards.hpp"

namespace grpopp {

enum class Algorithm { GRPO, GRPOPP };

inline const char* to_string(Algorithm a) noexcept { return a == Algorithm::GRPO ? "grpo" : "grpopp"; }

inline std::optional<Algorithm> parse_algorithm(std::string_view s) {
  if (s == "grpo" || s == "GRPO") return Algorithm::GRPO;
  if (s == "grpopp" || s == "GRPOPP" || s == "grpo++" || s == "GRPO++") return Algorithm::GRPOPP;
  return std::nullopt;
}

struct TrainConfig {
  std::size_t iterations = 1;       // I
  std::size_t steps_per_iter = 100; // M
  std::size_t ppo_steps = 1;        // T (0 allowed: sample and score only)
  std::size_t group_size = 3;       // m
  double learning_rate = 0.1;       // alpha
  double temperature = 0.9;
  double beta = 1.0;
  double gamma = 0.5;
  double tau = 0.0;
  double eps = 1e-8;
  double clip_eps = 0.2;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
  Algorithm algorithm = Algorithm::GRPOPP;
  double kl_coeff = 0.0;
  // Response shape of the policy.
  std::size_t max_len = 1;
  std::size_t vocab_size = 7;

  AdvantageParams advantage_params() const { return {beta, gamma, tau, eps}; }

  void validate() const {
    if (iterations == 0 || steps_per_iter == 0 || group_size == 0 || batch_size == 0) {
      throw ConfigError("iterations, steps_per_iter, group_size and batch_size must be >= 1");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError("learning_rate must be finite and > 0");
    }
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
      throw ConfigError("temperature must be finite and > 0");
    }
    if (!(kl_coeff >= 0.0) || !std::isfinite(kl_coeff)) throw ConfigError("kl_coeff must be >= 0");
    if (max_len == 0) throw ConfigError("max_len must be >= 1");
    if (vocab_size < kNumLabels) throw ConfigError("vocab_size must be >= 7");
    advantage_params().validate();
    ClipConfig{clip_eps}.validate();
  }
};

struct StepRow {
  std::size_t step = 0;
  std::size_t iteration = 0;
  double mean_reward = 0.0;
  double frac_no_confident = 0.0;  // fraction of groups with |C| = 0
  std::size_t standard_groups = 0;
  std::size_t penalty_groups = 0;
  double grad_norm = 0.0;       // at theta = theta_old, before the inner steps
  double objective = 0.0;       // at theta = theta_old
  double clipped_fraction = 0.0;  // at the last inner step
  double wall_seconds = 0.0;
};

struct TrainReport {
  TrainConfig config;
  std::vector<StepRow> rows;
  PolicyParams final_params;
};

// Everything sampled in one step, for observers and cross-checks.
struct StepTrace {
  const StepRow& row;
  std::span<const EvalItem> prompts;
  std::span<const ResponseGroup> groups;
  std::span<const AdvantageSet> advantages;
};

using StepObserver = std::function<void(const StepTrace&)>;

inline PolicyParams ascent_step(const PolicyParams& params, std::span<const double> gradient,
                                double alpha) {
  if (gradient.size() != params.size()) throw InvalidInput("ascent_step: gradient shape mismatch");
  if (!(alpha > 0.0)) throw InvalidInput("ascent_step: alpha must be > 0");
  PolicyParams next = params;
  auto v = next.values();
  for (std::size_t k = 0; k < v.size(); ++k) {
    v[k] += alpha * gradient[k];
    if (!std::isfinite(v[k])) {
      nlohmann::json diag = {{"reason", "non-finite parameter after ascent step"},
                             {"index", k},
                             {"gradient", std::isfinite(gradient[k]) ? nlohmann::json(gradient[k])
                                                                     : nlohmann::json("non-finite")}};
      throw NumericAbort("non-finite parameter at index " + std::to_string(k), diag.dump());
    }
  }
  return next;
}

namespace detail {

inline void check_gradient_finite(std::span<const double> g, std::size_t step,
                                  const PolicyParams& params) {
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!std::isfinite(g[k])) {
      nlohmann::json diag = {{"reason", "non-finite gradient"},
                             {"step", step},
                             {"index", k},
                             {"params", std::vector<double>(params.values().begin(),
                                                            params.values().end())}};
      throw NumericAbort("non-finite gradient at step " + std::to_string(step), diag.dump());
    }
  }
}

// Independent streams so that prompt order does not depend on the algorithm.
inline constexpr std::uint64_t kPromptStream = 0x5052;
inline constexpr std::uint64_t kResponseStream = 0x5253;

}  // namespace detail

inline TrainReport train(const TrainConfig& config, const Env& env, const RewardSpec& rewards,
                         std::optional<PolicyParams> init = std::nullopt,
                         const StepObserver& observer = {}) {
  config.validate();
  rewards.validate();
  const PolicyShape shape = env.policy_shape(config.max_len, config.vocab_size);
  PolicyParams params = init ? std::move(*init) : env.initial_params(shape);
  if (!(params.shape() == shape)) throw ConfigError("initial parameters do not match policy shape");

  Rng prompt_rng = make_rng(config.seed, detail::kPromptStream);
  Rng response_rng = make_rng(config.seed, detail::kResponseStream);
  const ClipConfig clip_cfg{config.clip_eps};
  const AdvantageParams adv_params = config.advantage_params();

  TrainReport report;
  report.config = config;
  report.rows.reserve(config.iterations * config.steps_per_iter);

  std::size_t step = 0;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const PolicyParams reference = params;
    std::optional<KlRegularizer> kl;
    if (config.kl_coeff > 0.0) kl = KlRegularizer{config.kl_coeff, reference};

    for (std::size_t s = 0; s < config.steps_per_iter; ++s, ++step) {
      const auto t0 = std::chrono::steady_clock::now();
      const PolicyParams old_params = params;

      std::vector<EvalItem> batch;
      std::vector<ResponseGroup> groups;
      std::vector<AdvantageSet> advantages;
      for (std::size_t b = 0; b < config.batch_size; ++b) {
        batch.push_back(env.sample_item(prompt_rng));
      }

      StepRow row;
      row.step = step;
      row.iteration = it;
      double reward_sum = 0.0;
      std::size_t reward_count = 0;
      for (const auto& item : batch) {
        auto responses =
            sample_group(old_params, item.prompt, config.group_size, config.temperature, response_rng);
        auto group = make_group(item.prompt, std::move(responses), item.truth, rewards);
        for (double r : group.rewards) reward_sum += r;
        reward_count += group.size();
        auto adv = config.algorithm == Algorithm::GRPOPP
                       ? ca_advantage(group, adv_params)
                       : grpo_advantage(group, adv_params.eps, adv_params.tau);
        if (adv.diagnostics.confident_count == 0) row.frac_no_confident += 1.0;
        (adv.branch == Branch::Standard ? row.standard_groups : row.penalty_groups) += 1;
        groups.push_back(std::move(group));
        advantages.push_back(std::move(adv));
      }
      row.mean_reward = reward_sum / static_cast<double>(reward_count);
      row.frac_no_confident /= static_cast<double>(groups.size());

      auto rep = evaluate_objective(params, old_params, groups, advantages, clip_cfg, kl);
      detail::check_gradient_finite(rep.gradient, step, params);
      row.grad_norm = l2_norm(rep.gradient);
      row.objective = rep.value;
      row.clipped_fraction = rep.clipped_fraction;
      for (std::size_t k = 0; k < config.ppo_steps; ++k) {
        if (k > 0) {
          rep = evaluate_objective(params, old_params, groups, advantages, clip_cfg, kl);
          detail::check_gradient_finite(rep.gradient, step, params);
          row.clipped_fraction = rep.clipped_fraction;
        }
        params = ascent_step(params, rep.gradient, config.learning_rate);
      }

      row.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      report.rows.push_back(row);
      if (observer) observer(StepTrace{report.rows.back(), batch, groups, advantages});
    }
  }
  report.final_params = std::move(params);
  return report;
}

// Mean reward over the last `fraction` of rows (at least one row).
inline double final_window_mean(const TrainReport& r, double fraction = 0.1) {
  const std::size_t n = r.rows.size();
  const std::size_t w = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(n * fraction)));
  double s = 0.0;
  for (std::size_t k = n - w; k < n; ++k) s += r.rows[k].mean_reward;
  return s / static_cast<double>(w);
}

inline double initial_window_mean(const TrainReport& r, double fraction = 0.1) {
  const std::size_t n = r.rows.size();
  const std::size_t w = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(n * fraction)));
  double s = 0.0;
  for (std::size_t k = 0; k < w; ++k) s += r.rows[k].mean_reward;
  return s / static_cast<double>(w);
}

struct RunPair {
  std::uint64_t seed = 0;
  TrainReport a;
  TrainReport b;
};

// Runs both configs per seed. Prompt streams depend only on the seed, so the
// two runs see the same prompts in the same order.
inline std::vector<RunPair> compare_runs(TrainConfig config_a, TrainConfig config_b, const Env& env,
                                         const RewardSpec& rewards,
                                         std::span<const std::uint64_t> seeds) {
  std::vector<RunPair> out;
  for (std::uint64_t seed : seeds) {
    config_a.seed = seed;
    config_b.seed = seed;
    RunPair p;
    p.seed = seed;
    p.a = train(config_a, env, rewards);
    p.b = train(config_b, env, rewards);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace grpopp
