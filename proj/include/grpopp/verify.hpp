#pragma once

// Executable checks of the GRPO failure modes and of the GRPO++ gradient
// theorems. Every check evaluates the surrogate gradient through the
// objective module and recomputes the closed-form side from policy scores
// and locally computed confidence weights.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grpopp/advantage.hpp"
#include "grpopp/env.hpp"
#include "grpopp/objective.hpp"
#include "grpopp/policy.hpp"
#include "grpopp/random.hpp"
#include "grpopp/rewards.hpp"

namespace grpopp {

struct VerifyParams {
  double beta = 1.0;
  double gamma = 0.5;
  double eps = 1e-8;
  double clip_eps = 0.2;
  double temperature = 0.9;

  AdvantageParams advantage() const { return {beta, gamma, 0.0, eps}; }
};

namespace verify_detail {

// Independent of advantage.hpp on purpose.
inline std::vector<double> weights(const std::vector<double>& logliks, double eps) {
  double lo = logliks.front(), hi = logliks.front();
  for (double l : logliks) {
    lo = std::min(lo, l);
    hi = std::max(hi, l);
  }
  std::vector<double> w;
  for (double l : logliks) w.push_back((l - lo) / (hi - lo + eps));
  return w;
}

// Token-mean score: the per-response direction that the surrogate gradient
// weights at theta = theta_old. Equals the plain score for length-1 responses.
inline std::vector<double> mean_score(const PolicyParams& params, const Prompt& prompt,
                                      const Response& r) {
  auto s = score(params, prompt, r.tokens);
  for (auto& v : s) v /= static_cast<double>(r.length());
  return s;
}

inline double norm(const std::vector<double>& v) { return l2_norm(v); }

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, std::abs(a[k] - b[k]));
  return d;
}

inline std::vector<double> gradient_at_old(const PolicyParams& params, const ResponseGroup& group,
                                           const AdvantageSet& adv, double clip_eps) {
  std::vector<ResponseGroup> groups{group};
  std::vector<AdvantageSet> advs{adv};
  return objective_gradient(params, params, groups, advs, ClipConfig{clip_eps});
}

inline ResponseGroup group_from_tokens(const PolicyParams& params, const Prompt& prompt,
                                       const std::vector<std::vector<std::size_t>>& sequences,
                                       const std::vector<double>& rewards) {
  ResponseGroup g;
  g.prompt = prompt;
  for (const auto& seq : sequences) {
    g.responses.push_back(make_response(params, prompt, seq));
    g.logliks.push_back(g.responses.back().total_logprob);
  }
  g.rewards = rewards;
  return g;
}

}  // namespace verify_detail

// ---------------------------------------------------------------------------
// Failure modes

struct FailureModeReport {
  std::string scenario;
  std::size_t context = 0;
  std::vector<std::size_t> answers;  // answer token per response
  std::vector<double> rewards;
  std::vector<double> logliks;
  std::vector<double> grpo_advantages;
  std::vector<double> grpopp_advantages;
  double grpo_grad_norm = 0.0;
  double grpopp_grad_norm = 0.0;
  double expected_grpopp_grad_norm = 0.0;  // mode 1: gamma * ||mean score||
  double grpo_advantage_sum = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  bool pass = false;
  std::vector<std::string> failures;

  nlohmann::json to_json() const {
    return {{"scenario", scenario},
            {"context", context},
            {"answers", answers},
            {"rewards", rewards},
            {"logliks", logliks},
            {"grpo_advantages", grpo_advantages},
            {"grpopp_advantages", grpopp_advantages},
            {"grpo_grad_norm", grpo_grad_norm},
            {"grpopp_grad_norm", grpopp_grad_norm},
            {"expected_grpopp_grad_norm", expected_grpopp_grad_norm},
            {"grpo_advantage_sum", grpo_advantage_sum},
            {"beta", beta},
            {"gamma", gamma},
            {"pass", pass},
            {"failures", failures}};
  }
};

namespace verify_detail {

inline void fill_side_by_side(FailureModeReport& rep, const PolicyParams& params,
                              const ResponseGroup& group, const VerifyParams& vp) {
  rep.context = group.prompt.context_id;
  rep.rewards = group.rewards;
  rep.logliks = group.logliks;
  for (const auto& r : group.responses) rep.answers.push_back(r.tokens.back());
  const auto grpo = grpo_advantage(group, vp.eps);
  const auto grpopp = ca_advantage(group, vp.advantage());
  rep.grpo_advantages = grpo.per_response();
  rep.grpopp_advantages = grpopp.per_response();
  rep.grpo_grad_norm = norm(gradient_at_old(params, group, grpo, vp.clip_eps));
  rep.grpopp_grad_norm = norm(gradient_at_old(params, group, grpopp, vp.clip_eps));
  for (double a : rep.grpo_advantages) rep.grpo_advantage_sum += a;
  rep.beta = vp.beta;
  rep.gamma = vp.gamma;
}

}  // namespace verify_detail

// Advantage collapse: m identical wrong responses from a saturated policy.
inline FailureModeReport demo_failure_mode_1(std::size_t m, std::uint64_t seed,
                                             const RewardSpec& rewards,
                                             const VerifyParams& vp = {}) {
  if (m < 2) throw InvalidInput("failure mode demo requires m >= 2");
  EnvSpec es;
  es.mode = EnvMode::IdenticalWrong;
  es.num_contexts = kNumLabels;
  const Env env(es, rewards);
  const auto params = env.initial_params(env.policy_shape(1, kNumLabels));
  Rng rng = make_rng(seed, 0xF1);
  const auto item = env.prompt(uniform_index(rng, env.num_contexts()));
  const Label truth = env.truth(item.context_id);
  auto group = make_group(item, sample_group(params, item, m, vp.temperature, rng), truth, rewards);

  FailureModeReport rep;
  rep.scenario = "identical_wrong";
  verify_detail::fill_side_by_side(rep, params, group, vp);

  std::vector<double> mean(params.size(), 0.0);
  for (const auto& r : group.responses) {
    const auto s = verify_detail::mean_score(params, group.prompt, r);
    for (std::size_t k = 0; k < s.size(); ++k) mean[k] += s[k] / static_cast<double>(m);
  }
  rep.expected_grpopp_grad_norm = vp.gamma * verify_detail::norm(mean);

  auto fail = [&](std::string why) { rep.failures.push_back(std::move(why)); };
  for (std::size_t i = 1; i < m; ++i) {
    if (group.responses[i].tokens != group.responses[0].tokens) fail("responses are not identical");
  }
  if (group.rewards[0] >= 0.0) fail("identical responses are not wrong");
  for (double a : rep.grpo_advantages) {
    if (a != 0.0) fail("GRPO advantage is not exactly zero");
  }
  if (!(rep.grpo_grad_norm <= 1e-12)) fail("GRPO gradient norm exceeds 1e-12");
  for (double a : rep.grpopp_advantages) {
    if (a != -vp.gamma) fail("GRPO++ advantage differs from -gamma");
  }
  if (!(std::abs(rep.grpopp_grad_norm - rep.expected_grpopp_grad_norm) <= 1e-10)) {
    fail("GRPO++ gradient norm differs from gamma * ||mean score||");
  }
  rep.pass = rep.failures.empty();
  return rep;
}

// Error reinforcement: diverse all-wrong rewards. Resamples from the same
// stream until the rewards are not all equal.
inline FailureModeReport demo_failure_mode_2(std::size_t m, std::uint64_t seed,
                                             const RewardSpec& rewards,
                                             const VerifyParams& vp = {}) {
  if (m < 2) throw InvalidInput("failure mode demo requires m >= 2");
  EnvSpec es;
  es.mode = EnvMode::DiverseAllWrong;
  es.num_contexts = kNumLabels;
  const Env env(es, rewards);
  const auto params = env.initial_params(env.policy_shape(1, kNumLabels));
  Rng rng = make_rng(seed, 0xF2);
  const auto item = env.prompt(uniform_index(rng, env.num_contexts()));
  const Label truth = env.truth(item.context_id);

  ResponseGroup group;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    group = make_group(item, sample_group(params, item, m, vp.temperature, rng), truth, rewards);
    const auto [lo, hi] = std::minmax_element(group.rewards.begin(), group.rewards.end());
    if (*lo != *hi) break;
  }

  FailureModeReport rep;
  rep.scenario = "diverse_all_wrong";
  verify_detail::fill_side_by_side(rep, params, group, vp);

  auto fail = [&](std::string why) { rep.failures.push_back(std::move(why)); };
  const auto [lo, hi] = std::minmax_element(group.rewards.begin(), group.rewards.end());
  if (*lo == *hi) fail("could not draw a group with non-identical rewards");
  if (*hi >= 0.0) fail("group contains a response at or above the threshold");
  if (std::none_of(rep.grpo_advantages.begin(), rep.grpo_advantages.end(),
                   [](double a) { return a > 0.0; })) {
    fail("GRPO assigns no strictly positive advantage");
  }
  if (!(std::abs(rep.grpo_advantage_sum) < 1e-9)) fail("GRPO advantages do not sum to zero");
  for (double a : rep.grpopp_advantages) {
    if (!(a <= -vp.gamma)) fail("GRPO++ advantage above -gamma");
  }
  rep.pass = rep.failures.empty();
  return rep;
}

// ---------------------------------------------------------------------------
// Theorem 1: at theta = theta_old with no confident response, the surrogate
// gradient is -(1/m) sum_i (gamma + beta w_i) s_i.

struct Theorem1Result {
  bool valid = false;  // preconditions hold
  double assembled_norm = 0.0;
  double formula_norm = 0.0;
  double identity_error = 0.0;  // max-abs difference of the two vectors
  double weighted_sum_norm = 0.0;
  bool vanishing = false;
  bool identity_holds = false;
  std::vector<double> weights;
  std::vector<double> advantages;

  nlohmann::json to_json() const {
    return {{"valid", valid},
            {"assembled_norm", assembled_norm},
            {"formula_norm", formula_norm},
            {"identity_error", identity_error},
            {"weighted_sum_norm", weighted_sum_norm},
            {"vanishing", vanishing},
            {"identity_holds", identity_holds},
            {"weights", weights},
            {"advantages", advantages}};
  }
};

inline constexpr double kIdentityTolerance = 1e-10;
inline constexpr double kVanishingTolerance = 1e-10;

inline Theorem1Result check_theorem1(const PolicyParams& params, const ResponseGroup& group,
                                     const VerifyParams& vp = {}) {
  Theorem1Result out;
  const auto maxl = *std::max_element(group.logliks.begin(), group.logliks.end());
  const auto minl = *std::min_element(group.logliks.begin(), group.logliks.end());
  const bool all_wrong = std::all_of(group.rewards.begin(), group.rewards.end(),
                                     [](double r) { return r < 0.0; });
  out.valid = all_wrong && maxl > minl;
  if (!out.valid) return out;

  const std::size_t m = group.size();
  const auto adv = ca_advantage(group, vp.advantage());
  out.advantages = adv.per_response();
  const auto assembled = verify_detail::gradient_at_old(params, group, adv, vp.clip_eps);

  out.weights = verify_detail::weights(group.logliks, vp.eps);
  std::vector<double> weighted(params.size(), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const auto s = verify_detail::mean_score(params, group.prompt, group.responses[i]);
    const double c = vp.gamma + vp.beta * out.weights[i];
    for (std::size_t k = 0; k < s.size(); ++k) weighted[k] += c * s[k];
  }
  std::vector<double> formula(weighted.size());
  for (std::size_t k = 0; k < weighted.size(); ++k) formula[k] = -weighted[k] / static_cast<double>(m);

  out.assembled_norm = verify_detail::norm(assembled);
  out.formula_norm = verify_detail::norm(formula);
  out.identity_error = verify_detail::max_abs_diff(assembled, formula);
  out.identity_holds = out.identity_error <= kIdentityTolerance;
  out.weighted_sum_norm = verify_detail::norm(weighted);
  out.vanishing = out.weighted_sum_norm < kVanishingTolerance;
  return out;
}

struct PolicyGroup {
  PolicyParams params;
  ResponseGroup group;
};

// Random single-context all-wrong group with length-1 responses and at least
// two distinct log-likelihoods.
inline PolicyGroup random_all_wrong_group(Rng& rng, std::size_t m, std::size_t max_len = 1) {
  std::normal_distribution<double> normal(0.0, 1.5);
  for (;;) {
    const std::size_t vocab = 2 + uniform_index(rng, 8);
    PolicyParams params(PolicyShape{1, max_len, vocab});
    for (auto& v : params.values()) v = normal(rng);
    const Prompt prompt{0, "random"};
    std::vector<std::vector<std::size_t>> seqs(m);
    const std::size_t len = 1 + uniform_index(rng, max_len);
    for (auto& s : seqs) {
      for (std::size_t t = 0; t < len; ++t) s.push_back(uniform_index(rng, vocab));
    }
    std::vector<double> rewards(m);
    for (auto& r : rewards) r = -0.5 - 4.5 * uniform01(rng);
    auto group = verify_detail::group_from_tokens(params, prompt, seqs, rewards);
    const auto [lo, hi] = std::minmax_element(group.logliks.begin(), group.logliks.end());
    if (*hi - *lo > 1e-6) return {std::move(params), std::move(group)};
  }
}

// Two-response group on a two-token vocabulary whose (anti-parallel) scores
// cancel exactly: (gamma + beta w_1) p_1 = gamma p_0 with w_1 including eps.
inline PolicyGroup cancellation_group(const VerifyParams& vp) {
  // p0 > p1; response 0 is the confident token 0 (w = d / (d + eps), d = log(p0/p1)).
  auto residual = [&](double p0) {
    const double p1 = 1.0 - p0;
    const double d = std::log(p0 / p1);
    const double w0 = d / (d + vp.eps);
    return (vp.gamma + vp.beta * w0) * p1 - vp.gamma * p0;
  };
  double lo = 0.5 + 1e-9, hi = 1.0 - 1e-12;  // residual(lo) > 0 > residual(hi)
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (residual(mid) > 0.0 ? lo : hi) = mid;
  }
  const double p0 = 0.5 * (lo + hi);
  PolicyParams params(PolicyShape{1, 1, 2}, {std::log(p0), std::log(1.0 - p0)});
  auto group =
      verify_detail::group_from_tokens(params, Prompt{0, "cancellation"}, {{0}, {1}}, {-2.5, -2.5});
  return {std::move(params), std::move(group)};
}

// ---------------------------------------------------------------------------
// Theorem 2: (gamma + beta/m) G_min <= ||grad J|| <= (gamma + (m-1) beta/m) G_max.

struct BoundMeasurement {
  std::size_t m = 0;
  double grad_norm = 0.0;
  double g_min = 0.0;
  double g_max = 0.0;
  double lower_bound = 0.0;
  double upper_bound = 0.0;
};

inline BoundMeasurement measure_bounds(const PolicyParams& params, const ResponseGroup& group,
                                       const VerifyParams& vp) {
  BoundMeasurement b;
  b.m = group.size();
  const double m = static_cast<double>(b.m);
  const auto adv = ca_advantage(group, vp.advantage());
  b.grad_norm = verify_detail::norm(verify_detail::gradient_at_old(params, group, adv, vp.clip_eps));
  b.g_min = std::numeric_limits<double>::infinity();
  for (const auto& r : group.responses) {
    const double n = verify_detail::norm(verify_detail::mean_score(params, group.prompt, r));
    b.g_min = std::min(b.g_min, n);
    b.g_max = std::max(b.g_max, n);
  }
  b.lower_bound = (vp.gamma + vp.beta / m) * b.g_min;
  b.upper_bound = (vp.gamma + (m - 1.0) * vp.beta / m) * b.g_max;
  return b;
}

// Positively aligned construction: one context, `len` identical rows where
// token 0 is likely and token 1 moderate. Response i is all token 1 except
// its first subs[i] positions, which take token 0. Token-mean scores of such
// responses point in nearly the same direction.
inline PolicyGroup aligned_group(std::span<const std::size_t> subs, std::size_t len,
                                 double p_top = 0.9, double p_mid = 0.08) {
  const std::size_t vocab = 3;
  const double p_rest = 1.0 - p_top - p_mid;
  PolicyParams params(PolicyShape{1, len, vocab});
  for (std::size_t t = 0; t < len; ++t) {
    auto row = params.logits(0, t);
    row[0] = std::log(p_top);
    row[1] = std::log(p_mid);
    row[2] = std::log(p_rest);
  }
  std::vector<std::vector<std::size_t>> seqs;
  for (std::size_t k : subs) {
    std::vector<std::size_t> s(len, 1);
    for (std::size_t t = 0; t < std::min(k, len); ++t) s[t] = 0;
    seqs.push_back(std::move(s));
  }
  std::vector<double> rewards(subs.size(), -2.5);
  auto group = verify_detail::group_from_tokens(params, Prompt{0, "aligned"}, seqs, rewards);
  return {std::move(params), std::move(group)};
}

struct Theorem2Report {
  std::size_t fuzz_groups = 0;
  std::size_t upper_violations = 0;
  double worst_upper_ratio = 0.0;  // max ||grad|| / upper bound
  std::size_t aligned_groups = 0;
  std::size_t lower_violations = 0;
  double worst_lower_ratio = std::numeric_limits<double>::infinity();  // min ||grad|| / lower bound
  std::vector<nlohmann::json> extremal;
  double min_upper_tightness = std::numeric_limits<double>::infinity();
  bool pass = false;

  nlohmann::json to_json() const {
    return {{"fuzz_groups", fuzz_groups},
            {"upper_violations", upper_violations},
            {"worst_upper_ratio", worst_upper_ratio},
            {"aligned_groups", aligned_groups},
            {"lower_violations", lower_violations},
            {"worst_lower_ratio", worst_lower_ratio},
            {"extremal", extremal},
            {"min_upper_tightness", min_upper_tightness},
            {"pass", pass}};
  }
};

inline constexpr double kBoundRelTolerance = 1e-9;
inline constexpr double kTightnessThreshold = 0.99;

inline Theorem2Report check_theorem2(std::size_t n_groups, std::uint64_t seed,
                                     const VerifyParams& vp = {}) {
  Theorem2Report rep;
  Rng rng = make_rng(seed, 0x72);

  // (a) universal upper bound on fuzzed all-wrong groups, m in [2, 8].
  for (std::size_t g = 0; g < n_groups; ++g) {
    const std::size_t m = 2 + g % 7;
    const std::size_t max_len = g % 5 == 4 ? 3 : 1;
    auto pg = random_all_wrong_group(rng, m, max_len);
    const auto b = measure_bounds(pg.params, pg.group, vp);
    ++rep.fuzz_groups;
    rep.worst_upper_ratio = std::max(rep.worst_upper_ratio, b.grad_norm / b.upper_bound);
    if (b.grad_norm > b.upper_bound * (1.0 + kBoundRelTolerance)) ++rep.upper_violations;
  }

  // (b) lower bound on aligned constructions.
  const std::size_t len = 64;
  for (std::size_t m = 2; m <= 8; ++m) {
    for (int rep_i = 0; rep_i < 20; ++rep_i) {
      std::vector<std::size_t> subs(m);
      for (auto& k : subs) k = uniform_index(rng, 4);
      subs[0] = 0;
      subs[1] = 1 + uniform_index(rng, 3);
      auto pg = aligned_group(subs, len);
      const auto b = measure_bounds(pg.params, pg.group, vp);
      ++rep.aligned_groups;
      rep.worst_lower_ratio = std::min(rep.worst_lower_ratio, b.grad_norm / b.lower_bound);
      if (b.grad_norm < b.lower_bound * (1.0 - kBoundRelTolerance)) ++rep.lower_violations;
    }
  }

  // (c) extremal probes: (m-1) at l_max and one at l_min (upper), and the
  // converse (lower), on long aligned responses.
  const std::size_t probe_len = 256;
  for (std::size_t m = 2; m <= 8; ++m) {
    std::vector<std::size_t> upper(m, 1), lower(m, 0);
    upper[0] = 0;
    lower[0] = 1;
    auto pu = aligned_group(upper, probe_len);
    auto pl = aligned_group(lower, probe_len);
    const auto bu = measure_bounds(pu.params, pu.group, vp);
    const auto bl = measure_bounds(pl.params, pl.group, vp);
    const double tight = bu.grad_norm / bu.upper_bound;
    rep.min_upper_tightness = std::min(rep.min_upper_tightness, tight);
    rep.extremal.push_back({{"m", m},
                            {"upper_config_grad_norm", bu.grad_norm},
                            {"upper_bound", bu.upper_bound},
                            {"upper_ratio", tight},
                            {"lower_config_grad_norm", bl.grad_norm},
                            {"lower_bound", bl.lower_bound},
                            {"lower_ratio", bl.grad_norm / bl.lower_bound}});
  }

  rep.pass = rep.upper_violations == 0 && rep.lower_violations == 0 &&
             rep.min_upper_tightness >= kTightnessThreshold;
  return rep;
}

struct Theorem1Report {
  std::size_t random_groups = 0;
  std::size_t identity_failures = 0;
  double max_identity_error = 0.0;
  Theorem1Result cancellation;
  bool pass = false;

  nlohmann::json to_json() const {
    return {{"random_groups", random_groups},
            {"identity_failures", identity_failures},
            {"max_identity_error", max_identity_error},
            {"cancellation", cancellation.to_json()},
            {"pass", pass}};
  }
};

inline Theorem1Report check_theorem1_suite(std::size_t n_groups, std::uint64_t seed,
                                           const VerifyParams& vp = {}) {
  Theorem1Report rep;
  Rng rng = make_rng(seed, 0x71);
  for (std::size_t g = 0; g < n_groups; ++g) {
    auto pg = random_all_wrong_group(rng, 2 + uniform_index(rng, 7));
    const auto r = check_theorem1(pg.params, pg.group, vp);
    ++rep.random_groups;
    rep.max_identity_error = std::max(rep.max_identity_error, r.identity_error);
    if (!r.valid || !r.identity_holds || r.vanishing) ++rep.identity_failures;
  }
  auto pc = cancellation_group(vp);
  rep.cancellation = check_theorem1(pc.params, pc.group, vp);
  rep.pass = rep.identity_failures == 0 && rep.cancellation.valid &&
             rep.cancellation.identity_holds && rep.cancellation.vanishing;
  return rep;
}

// ---------------------------------------------------------------------------
// Finite-difference audit of the analytic surrogate gradient.

struct GradientAuditReport {
  std::size_t cases = 0;
  std::size_t standard_cases = 0;
  std::size_t penalty_cases = 0;
  std::size_t at_old_cases = 0;
  std::size_t clipped_cases = 0;  // cases with at least one binding clip
  double max_rel_error = 0.0;
  double max_rel_error_at_old = 0.0;
  bool pass = false;

  nlohmann::json to_json() const {
    return {{"cases", cases},
            {"standard_cases", standard_cases},
            {"penalty_cases", penalty_cases},
            {"at_old_cases", at_old_cases},
            {"clipped_cases", clipped_cases},
            {"max_rel_error", max_rel_error},
            {"max_rel_error_at_old", max_rel_error_at_old},
            {"pass", pass}};
  }
};

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdRelTolerance = 1e-6;
// Gradients are compared relative to max(||g||_inf, floor) so that
// all-clipped (zero) gradients are judged on an absolute scale.
inline constexpr double kFdScaleFloor = 1e-4;

template <class F>
std::vector<double> central_difference(F&& f, const PolicyParams& at, double h = kFdStep) {
  PolicyParams probe = at;
  std::vector<double> g(at.size());
  for (std::size_t k = 0; k < at.size(); ++k) {
    const double x = at.values()[k];
    probe.values()[k] = x + h;
    const double fp = f(probe);
    probe.values()[k] = x - h;
    const double fm = f(probe);
    probe.values()[k] = x;
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double relative_gradient_error(const std::vector<double>& analytic,
                                      const std::vector<double>& numeric) {
  double scale = kFdScaleFloor, err = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    scale = std::max(scale, std::abs(analytic[k]));
    err = std::max(err, std::abs(analytic[k] - numeric[k]));
  }
  return err / scale;
}

inline GradientAuditReport gradient_audit(std::size_t n_cases, std::uint64_t seed,
                                          const VerifyParams& vp = {}) {
  if (n_cases == 0) throw InvalidInput("gradient audit requires n_cases >= 1");
  GradientAuditReport rep;
  Rng rng = make_rng(seed, 0xA0D1);
  std::normal_distribution<double> normal(0.0, 1.0);
  const ClipConfig clip_cfg{vp.clip_eps};
  // Stay this far (in ratio units) from the clip kinks at 1 +/- eps.
  const double margin = 50.0 * kFdStep;

  while (rep.cases < n_cases) {
    const std::size_t c = rep.cases;
    const PolicyShape shape{1 + uniform_index(rng, 3), 1 + uniform_index(rng, 3),
                            2 + uniform_index(rng, 7)};
    PolicyParams old_params(shape);
    for (auto& v : old_params.values()) v = normal(rng);
    const bool at_old = c % 4 == 0;
    const bool penalty = c % 2 == 1;
    PolicyParams params = old_params;
    if (!at_old) {
      const double scale = c % 3 == 0 ? 0.3 : 0.05;
      for (auto& v : params.values()) v += scale * normal(rng);
    }

    std::vector<ResponseGroup> groups;
    std::vector<AdvantageSet> advs;
    const std::size_t batch = 1 + uniform_index(rng, 3);
    for (std::size_t q = 0; q < batch; ++q) {
      const Prompt prompt{uniform_index(rng, shape.num_contexts), "audit"};
      const std::size_t m = 1 + uniform_index(rng, 5);
      auto responses = sample_group(old_params, prompt, m, 1.0, rng);
      ResponseGroup g;
      g.prompt = prompt;
      for (auto& r : responses) {
        r.tokens.resize(1 + uniform_index(rng, r.tokens.size()));
        r = make_response(old_params, prompt, r.tokens);
        g.logliks.push_back(r.total_logprob);
        g.rewards.push_back(penalty ? -0.5 - 4.5 * uniform01(rng) : -5.0 + 15.0 * uniform01(rng));
      }
      if (!penalty) g.rewards[0] = 10.0;
      g.responses = std::move(responses);
      advs.push_back(ca_advantage(g, vp.advantage()));
      groups.push_back(std::move(g));
    }

    bool near_kink = false, any_clipped = false;
    for (std::size_t q = 0; q < groups.size(); ++q) {
      const auto rho = importance_ratios(params, old_params, groups[q]);
      for (std::size_t i = 0; i < rho.size(); ++i) {
        for (std::size_t t = 0; t < rho[i].size(); ++t) {
          const double r = rho[i][t];
          if (std::abs(r - (1.0 - vp.clip_eps)) < margin || std::abs(r - (1.0 + vp.clip_eps)) < margin) {
            near_kink = true;
          }
          if (clip_binding(r, advs[q].values[i][t], vp.clip_eps)) any_clipped = true;
        }
      }
    }
    if (near_kink) continue;

    std::optional<KlRegularizer> kl;
    if (c % 5 == 2) {
      PolicyParams ref = old_params;
      for (auto& v : ref.values()) v += 0.2 * normal(rng);
      kl = KlRegularizer{0.1, std::move(ref)};
    }

    const auto analytic = objective_gradient(params, old_params, groups, advs, clip_cfg, kl);
    const auto numeric = central_difference(
        [&](const PolicyParams& p) { return objective_value(p, old_params, groups, advs, clip_cfg, kl); },
        params);
    const double err = relative_gradient_error(analytic, numeric);

    ++rep.cases;
    (penalty ? rep.penalty_cases : rep.standard_cases) += 1;
    if (any_clipped) ++rep.clipped_cases;
    rep.max_rel_error = std::max(rep.max_rel_error, err);
    if (at_old) {
      ++rep.at_old_cases;
      rep.max_rel_error_at_old = std::max(rep.max_rel_error_at_old, err);
    }
  }
  rep.pass = rep.max_rel_error < kFdRelTolerance;
  return rep;
}

}  // namespace grpopp
