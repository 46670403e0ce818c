#include <gtest/gtest.h>

#include <map>

#include "grpopp/env.hpp"
#include "grpopp/eval.hpp"
#include "support.hpp"

using namespace grpopp;
using grpopp::testing::bundled_spec;

namespace {

struct ConstantPredictor {
  std::optional<Label> answer;
  std::optional<Label> operator()(const Prompt&, Rng&) const { return answer; }
};

// Correct with probability `accuracy`, otherwise a uniform wrong label.
struct NoisyPredictor {
  const Env* env;
  double accuracy;
  std::optional<Label> operator()(const Prompt& q, Rng& rng) const {
    const Label truth = env->truth(q.context_id);
    if (uniform01(rng) < accuracy) return truth;
    return label_at((index_of(truth) + 1 + uniform_index(rng, kNumLabels - 1)) % kNumLabels);
  }
};

Env learnable(std::size_t contexts = 7) {
  EnvSpec s;
  s.num_contexts = contexts;
  return Env(s, bundled_spec());
}

// Mode of a vote list by plain counting, first canonical label on ties.
std::optional<Label> oracle_mode(const std::vector<std::optional<Label>>& votes) {
  std::map<std::size_t, int> count;
  for (const auto& v : votes) {
    if (v) count[index_of(*v)]++;
  }
  std::optional<Label> best;
  int best_n = 0;
  for (const auto& [idx, n] : count) {
    if (n > best_n) {
      best_n = n;
      best = label_at(idx);
    }
  }
  return best;
}

}  // namespace

TEST(MajorityVote, Basics) {
  using V = std::vector<std::optional<Label>>;
  EXPECT_EQ(majority_vote(V{Label::Melanoma, Label::Melanoma, Label::BCC}), Label::Melanoma);
  EXPECT_EQ(majority_vote(V{Label::SK, Label::AK}), Label::AK);
  EXPECT_EQ(majority_vote(V{std::nullopt, std::nullopt, Label::Rosacea}), Label::Rosacea);
  EXPECT_FALSE(majority_vote(V{std::nullopt, std::nullopt}));
}

TEST(Metrics, DiagonalIsPerfect) {
  ConfusionMatrix cm;
  for (Label l : kAllLabels) {
    for (int i = 0; i < 3; ++i) cm.add(l, l);
  }
  const auto m = metrics_from_confusion(cm);
  EXPECT_EQ(m.macro_f1, 1.0);
  EXPECT_EQ(m.accuracy, 1.0);
  for (std::size_t c = 0; c < kNumLabels; ++c) EXPECT_EQ(m.precision[c], 1.0);
}

TEST(Metrics, NeverPredictedClassHasZeroPrecision) {
  ConfusionMatrix cm;
  cm.add(Label::AK, Label::BCC);
  cm.add(Label::BCC, Label::BCC);
  const auto m = metrics_from_confusion(cm);
  EXPECT_EQ(m.precision[index_of(Label::AK)], 0.0);
  EXPECT_EQ(m.f1[index_of(Label::AK)], 0.0);
  EXPECT_EQ(m.precision[index_of(Label::BCC)], 0.5);
}

TEST(Metrics, HandBuiltThreeClassMatrix) {
  ConfusionMatrix cm;
  const std::array<Label, 3> ls{Label::AK, Label::BCC, Label::Melanoma};
  const int counts[3][3] = {{5, 2, 1}, {1, 7, 0}, {2, 0, 4}};
  for (int t = 0; t < 3; ++t) {
    for (int p = 0; p < 3; ++p) {
      for (int k = 0; k < counts[t][p]; ++k) cm.add(ls[t], ls[p]);
    }
  }
  cm.add(Label::Melanoma, std::nullopt);
  const auto m = metrics_from_confusion(cm);
  // Recomputed by hand: precision = column share, recall = row share (invalid counts against recall).
  const double p[3] = {5.0 / 8.0, 7.0 / 9.0, 4.0 / 5.0};
  const double r[3] = {5.0 / 8.0, 7.0 / 8.0, 4.0 / 7.0};
  double macro = 0.0;
  for (int i = 0; i < 3; ++i) {
    const auto c = index_of(ls[i]);
    EXPECT_NEAR(m.precision[c], p[i], 1e-12);
    EXPECT_NEAR(m.recall[c], r[i], 1e-12);
    const double f1 = 2 * p[i] * r[i] / (p[i] + r[i]);
    EXPECT_NEAR(m.f1[c], f1, 1e-12);
    macro += f1;
  }
  EXPECT_NEAR(m.macro_f1, macro / 7.0, 1e-12);
  EXPECT_NEAR(m.accuracy, 16.0 / 23.0, 1e-12);
  EXPECT_EQ(cm.invalid(), 1u);
}

TEST(SingleShot, OraclePolicy) {
  const auto env = learnable(21);
  const auto params = env.oracle_params(env.policy_shape(1, 7));
  const auto data = eval_dataset(env, 20, 1);
  const auto r = single_shot_eval(SoftmaxPredictor{&params, 1.0}, data, 3);
  EXPECT_EQ(r.metrics.macro_f1, 1.0);
  EXPECT_EQ(r.metrics.macro_precision, 1.0);
  EXPECT_EQ(r.metrics.macro_recall, 1.0);
}

TEST(SingleShot, ConstantMelanoma) {
  const auto env = learnable();
  const auto data = eval_dataset(env, 20, 1);
  const auto r = single_shot_eval(ConstantPredictor{Label::Melanoma}, data, 0);
  const auto mel = index_of(Label::Melanoma);
  EXPECT_EQ(r.metrics.recall[mel], 1.0);
  EXPECT_NEAR(r.metrics.precision[mel], 1.0 / 7.0, 1e-15);
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    if (c == mel) continue;
    EXPECT_EQ(r.metrics.precision[c], 0.0);
    EXPECT_EQ(r.metrics.recall[c], 0.0);
  }
}

TEST(SingleShot, EmptyPredictions) {
  const auto env = learnable();
  const auto data = eval_dataset(env, 5, 1);
  const auto r = single_shot_eval(ConstantPredictor{std::nullopt}, data, 0);
  EXPECT_EQ(r.metrics.macro_f1, 0.0);
  EXPECT_EQ(r.metrics.accuracy, 0.0);
  EXPECT_EQ(r.confusion.invalid(), data.size());
  EXPECT_EQ(r.confusion.total(), data.size());
}

TEST(MajorityVoteEval, KOneEqualsSingleShot) {
  const auto env = learnable();
  const auto params = env.noisy_oracle_params(env.policy_shape(1, 7), 0.5);
  const auto data = eval_dataset(env, 30, 2);
  const SoftmaxPredictor pred{&params, 1.0};
  const auto a = single_shot_eval(pred, data, 9);
  const auto b = majority_vote_eval(pred, data, 1, 9);
  EXPECT_EQ(a.predictions, b.predictions);
  EXPECT_EQ(a.confusion.counts, b.confusion.counts);
}

TEST(MajorityVoteEval, DecisionIsModeOfLoggedVotes) {
  const auto env = learnable();
  const auto params = env.noisy_oracle_params(env.policy_shape(1, 7), 0.3);
  const auto data = eval_dataset(env, 40, 3);
  const auto r = majority_vote_eval(SoftmaxPredictor{&params, 1.0}, data, 4, 5);
  ASSERT_EQ(r.votes.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    ASSERT_EQ(r.votes[i].size(), 4u);
    EXPECT_EQ(r.predictions[i], oracle_mode(r.votes[i]));
  }
}

TEST(MajorityVoteEval, VotingBeatsSingleShotOnNoisyOracle) {
  const auto env = learnable();
  const auto data = eval_dataset(env, 143, 4);  // 1001 items
  const NoisyPredictor pred{&env, 0.6};
  const auto single = single_shot_eval(pred, data, 11);
  const auto voted = majority_vote_eval(pred, data, 5, 11);
  const double n = static_cast<double>(data.size());
  const double ps = single.metrics.accuracy, pv = voted.metrics.accuracy;
  const double se = std::sqrt(ps * (1 - ps) / n + pv * (1 - pv) / n);
  EXPECT_GT(pv - ps, 3.0 * se);
}

TEST(MajorityVoteEval, RejectsBadArguments) {
  const auto env = learnable();
  const auto data = eval_dataset(env, 1, 0);
  EXPECT_THROW(majority_vote_eval(ConstantPredictor{Label::AK}, data, 0, 0), InvalidInput);
  EXPECT_THROW(single_shot_eval(ConstantPredictor{Label::AK}, std::span<const EvalItem>{}, 0), InvalidInput);
}

TEST(Metrics, AccuracyInvariantUnderClassPermutation) {
  Rng rng(6);
  ConfusionMatrix cm, permuted;
  const std::array<std::size_t, kNumLabels> perm{3, 0, 6, 1, 5, 2, 4};
  for (int i = 0; i < 500; ++i) {
    const auto t = uniform_index(rng, kNumLabels);
    const auto p = uniform_index(rng, kNumLabels);
    cm.add(label_at(t), label_at(p));
    permuted.add(label_at(perm[t]), label_at(perm[p]));
  }
  EXPECT_EQ(metrics_from_confusion(cm).accuracy, metrics_from_confusion(permuted).accuracy);
  EXPECT_NEAR(metrics_from_confusion(cm).macro_f1, metrics_from_confusion(permuted).macro_f1, 1e-12);
}
