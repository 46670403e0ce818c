#include <gtest/gtest.h>

#include "grpopp/advantage.hpp"
#include "support.hpp"

using namespace grpopp;

namespace {

// Group with length-1 dummy responses; only rewards and logliks matter here.
ResponseGroup group_of(std::vector<double> rewards, std::vector<double> logliks = {}) {
  ResponseGroup g;
  if (logliks.empty()) logliks.assign(rewards.size(), -1.0);
  for (double l : logliks) g.responses.push_back(Response{{0}, {l}, l});
  g.rewards = std::move(rewards);
  g.logliks = std::move(logliks);
  return g;
}

// Independent mean / population-std oracle.
std::vector<double> oracle_grpo(const std::vector<double>& r, double eps) {
  double mean = 0.0;
  for (double x : r) mean += x;
  mean /= static_cast<double>(r.size());
  double var = 0.0;
  for (double x : r) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(r.size()));
  std::vector<double> a;
  for (double x : r) a.push_back((x - mean) / (sd + eps));
  return a;
}

}  // namespace

TEST(ConfidenceSet, ThresholdIsInclusive) {
  EXPECT_EQ(confidence_set(std::vector<double>{10, -5, -2.5}, 0.0), std::vector<std::size_t>{0});
  EXPECT_TRUE(confidence_set(std::vector<double>{-2.5, -2.5, -2.5}, 0.0).empty());
  EXPECT_EQ(confidence_set(std::vector<double>{0.0}, 0.0), std::vector<std::size_t>{0});
}

TEST(GrpoAdvantage, MatchesMeanStdOracle) {
  const std::vector<double> r{10, -5, -2.5};
  const auto a = grpo_advantage(group_of(r), 1e-8).per_response();
  const auto o = oracle_grpo(r, 1e-8);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a[i], o[i], 1e-12);
  EXPECT_NEAR(a[0], 1.397, 1e-3);
  EXPECT_NEAR(a[1], -0.889, 1e-3);
  EXPECT_NEAR(a[2], -0.508, 1e-3);

  Rng rng(1);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> rr(1 + uniform_index(rng, 8));
    for (auto& x : rr) x = 20.0 * uniform01(rng) - 10.0;
    const auto got = grpo_advantage(group_of(rr), 1e-8).per_response();
    const auto want = oracle_grpo(rr, 1e-8);
    for (std::size_t i = 0; i < rr.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-10);
  }
}

TEST(GrpoAdvantage, DegenerateGroupsAreExactlyZero) {
  for (double a : grpo_advantage(group_of({-2.5, -2.5, -2.5}), 1e-8).per_response()) EXPECT_EQ(a, 0.0);
  EXPECT_EQ(grpo_advantage(group_of({7.0}), 1e-8).per_response(), std::vector<double>{0.0});
}

TEST(GrpoAdvantage, ZeroSum) {
  Rng rng(2);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> r(2 + uniform_index(rng, 7));
    for (auto& x : r) x = -5.0 + 4.5 * uniform01(rng);
    double sum = 0.0;
    for (double a : grpo_advantage(group_of(r), 1e-8).per_response()) sum += a;
    EXPECT_LT(std::abs(sum), 1e-9);
  }
}

TEST(GrpoAdvantage, BroadcastsAcrossTokens) {
  ResponseGroup g;
  g.responses = {Response{{0, 1, 2}, {-1, -1, -1}, -3}, Response{{1}, {-1}, -1}};
  g.rewards = {10.0, -5.0};
  g.logliks = {-3.0, -1.0};
  const auto a = grpo_advantage(g, 1e-8);
  ASSERT_EQ(a.values[0].size(), 3u);
  ASSERT_EQ(a.values[1].size(), 1u);
  EXPECT_EQ(a.values[0][0], a.values[0][2]);
}

TEST(ConfidenceWeights, DirectFormula) {
  const std::vector<double> l{-5, -2, -3.5};
  const auto w = confidence_weights(l, 1e-8);
  EXPECT_EQ(w[0], 0.0);
  EXPECT_NEAR(w[1], 3.0 / (3.0 + 1e-8), 1e-15);
  EXPECT_LT(w[1], 1.0);
  EXPECT_NEAR(w[2], 1.5 / (3.0 + 1e-8), 1e-15);
  for (double x : confidence_weights(std::vector<double>{-1, -1, -1}, 1e-8)) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(confidence_weights(std::vector<double>{-4}, 1e-8), std::vector<double>{0.0});
}

TEST(ConfidenceWeights, RangeAndMonotone) {
  Rng rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> l(1 + uniform_index(rng, 8));
    for (auto& x : l) x = -10.0 * uniform01(rng);
    const auto w = confidence_weights(l, 1e-8);
    for (std::size_t i = 0; i < l.size(); ++i) {
      EXPECT_GE(w[i], 0.0);
      EXPECT_LT(w[i], 1.0);
      for (std::size_t j = 0; j < l.size(); ++j) {
        if (l[i] <= l[j]) EXPECT_LE(w[i], w[j]);
      }
    }
    const auto argmin = std::min_element(l.begin(), l.end()) - l.begin();
    EXPECT_EQ(w[argmin], 0.0);
  }
}

TEST(CaAdvantage, StandardBranchEqualsGrpo) {
  const auto g = group_of({10, -5, -2.5}, {-0.3, -2.0, -1.1});
  const AdvantageParams p{};
  const auto ca = ca_advantage(g, p);
  EXPECT_EQ(ca.branch, Branch::Standard);
  EXPECT_EQ(ca.values, grpo_advantage(g, p.eps).values);
}

TEST(CaAdvantage, PenaltyBranchExample) {
  const auto g = group_of({-5, -2.5, -0.5}, {-2, -5, -3});
  const auto ca = ca_advantage(g, AdvantageParams{1.0, 0.5, 0.0, 1e-8});
  EXPECT_EQ(ca.branch, Branch::ConfidencePenalty);
  const auto a = ca.per_response();
  EXPECT_NEAR(a[0], -1.5, 1e-8);
  EXPECT_NEAR(a[1], -0.5, 1e-12);
  EXPECT_NEAR(a[2], -0.5 - 2.0 / 3.0, 1e-8);
  EXPECT_EQ(ca.diagnostics.confident_count, 0u);
}

TEST(CaAdvantage, IdenticalWrongGetsMinusGamma) {
  const auto ca = ca_advantage(group_of({-2.5, -2.5, -2.5}, {-0.1, -0.1, -0.1}), AdvantageParams{1.0, 0.5});
  for (double a : ca.per_response()) EXPECT_EQ(a, -0.5);
}

TEST(CaAdvantage, PenaltyProperties) {
  Rng rng(4);
  const AdvantageParams p{1.3, 0.4, 0.0, 1e-8};
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t m = 2 + uniform_index(rng, 7);
    std::vector<double> r(m), l(m);
    for (auto& x : r) x = -5.0 + 4.5 * uniform01(rng);
    for (auto& x : l) x = -8.0 * uniform01(rng);
    const auto g = group_of(r, l);
    const auto ca = ca_advantage(g, p).per_response();
    const auto grpo = grpo_advantage(g, p.eps).per_response();
    for (std::size_t i = 0; i < m; ++i) {
      EXPECT_LE(ca[i], -p.gamma);
      for (std::size_t j = 0; j < m; ++j) {
        if (l[i] > l[j]) EXPECT_LT(ca[i], ca[j]);
      }
    }
    EXPECT_GT(*std::max_element(grpo.begin(), grpo.end()), 0.0);
  }
}

TEST(CaAdvantage, BranchFollowsThresholdNotCorrectness) {
  const auto g = group_of({-0.5, -2.5}, {-1, -2});
  EXPECT_EQ(ca_advantage(g, AdvantageParams{1, 0.5, -1.0, 1e-8}).branch, Branch::Standard);
  EXPECT_EQ(ca_advantage(g, AdvantageParams{1, 0.5, 0.0, 1e-8}).branch, Branch::ConfidencePenalty);
}

TEST(CaAdvantage, ValidatesParameters) {
  const auto g = group_of({-1, -2});
  EXPECT_ANY_THROW(ca_advantage(g, AdvantageParams{0.0, 0.5}));
  EXPECT_ANY_THROW(ca_advantage(g, AdvantageParams{1.0, -0.5}));
  EXPECT_ANY_THROW(ca_advantage(g, AdvantageParams{1.0, 0.5, 0.0, 0.0}));
  EXPECT_ANY_THROW(grpo_advantage(g, 0.0));
}

TEST(MakeGroup, ScoresResponsesWithRewardModel) {
  PolicyParams params({1, 1, 7});
  const Prompt q{0, ""};
  std::vector<Response> rs{make_response(params, q, {index_of(Label::Melanoma)}),
                           make_response(params, q, {index_of(Label::Dermatitis)})};
  const auto g = make_group(q, rs, Label::Melanoma, grpopp::testing::bundled_spec());
  EXPECT_EQ(g.rewards, (std::vector<double>{10.0, -5.0}));
  EXPECT_NEAR(g.logliks[0], std::log(1.0 / 7.0), 1e-15);
}
