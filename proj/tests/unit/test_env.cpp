#include <gtest/gtest.h>

#include <map>

#include "grpopp/advantage.hpp"
#include "grpopp/env.hpp"
#include "support.hpp"

using namespace grpopp;
using grpopp::testing::bundled_spec;

namespace {

Env env_of(EnvMode mode, std::size_t contexts = 7) {
  EnvSpec s;
  s.mode = mode;
  s.num_contexts = contexts;
  return Env(s, bundled_spec());
}

}  // namespace

TEST(Env, DefaultContextLabelsCycle) {
  const auto env = env_of(EnvMode::Learnable, 21);
  for (std::size_t c = 0; c < 21; ++c) EXPECT_EQ(env.truth(c), label_at(c % 7));
  EXPECT_EQ(env.prompt(4).context_id, 4u);
  EXPECT_THROW(env.prompt(21), InvalidInput);
}

TEST(Env, NoiseFreeTruthIsAFunctionOfContext) {
  const auto env = env_of(EnvMode::Learnable, 21);
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const auto item = env.sample_item(rng);
    EXPECT_EQ(item.truth, env.truth(item.prompt.context_id));
  }
}

TEST(Env, NoiseFlipsAboutTheRequestedFraction) {
  EnvSpec s;
  s.noise = 0.3;
  const Env env(s, bundled_spec());
  Rng rng(2);
  const int n = 20000;
  int flipped = 0;
  for (int i = 0; i < n; ++i) {
    const auto item = env.sample_item(rng);
    flipped += item.truth != env.truth(item.prompt.context_id);
  }
  const double se = std::sqrt(0.3 * 0.7 / n);
  EXPECT_LT(std::abs(flipped / static_cast<double>(n) - 0.3), 3.0 * se);
}

TEST(Env, LearnableStartsUniform) {
  const auto env = env_of(EnvMode::Learnable);
  const auto p = env.initial_params(env.policy_shape(1, 7));
  for (double v : p.values()) EXPECT_EQ(v, 0.0);
}

TEST(Env, InitialParamsAreDeterministic) {
  for (auto mode : {EnvMode::Learnable, EnvMode::IdenticalWrong, EnvMode::DiverseAllWrong}) {
    const auto a = env_of(mode);
    const auto b = env_of(mode);
    EXPECT_EQ(a.initial_params(a.policy_shape(2, 9)), b.initial_params(b.policy_shape(2, 9)));
  }
}

TEST(Env, IdenticalWrongSaturatesOnAWrongLabel) {
  const auto env = env_of(EnvMode::IdenticalWrong);
  const auto p = env.initial_params(env.policy_shape(1, 7));
  for (std::size_t c = 0; c < 7; ++c) {
    const auto row = p.logits(c, 0);
    const auto probs = softmax(row);
    const auto arg = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    EXPECT_NE(label_at(arg), env.truth(c));
    EXPECT_GT(probs[arg], 0.999);
  }
}

TEST(Env, IdenticalWrongGroupsAreIdenticalAndNegative) {
  const auto env = env_of(EnvMode::IdenticalWrong);
  const auto p = env.initial_params(env.policy_shape(1, 7));
  // Analytic chance that a group of three is not identical.
  const double top = softmax(p.logits(0, 0))[index_of(env.decoy(env.truth(0)))];
  EXPECT_LT(1.0 - top * top * top, 1e-3);

  Rng rng(3);
  int mixed = 0;
  const int n = 2000;
  for (int i = 0; i < n; ++i) {
    const auto item = env.sample_item(rng);
    const auto g = make_group(item.prompt, sample_group(p, item.prompt, 3, 0.9, rng), item.truth, bundled_spec());
    mixed += !(g.responses[0].tokens == g.responses[1].tokens && g.responses[1].tokens == g.responses[2].tokens);
    for (double r : g.rewards) EXPECT_LT(r, 0.0);
  }
  EXPECT_LT(mixed / static_cast<double>(n), 1e-3);
}

TEST(Env, DecoyIsTheLeastSevereWrongLabel) {
  const auto env = env_of(EnvMode::IdenticalWrong);
  for (Label truth : kAllLabels) {
    const double best = reward(env.decoy(truth), truth, bundled_spec());
    for (Label l : kAllLabels) {
      if (l != truth) EXPECT_GE(best, reward(l, truth, bundled_spec()));
    }
  }
  EXPECT_EQ(env.decoy(Label::Dermatitis), Label::Psoriasis);
}

TEST(Env, DiverseAllWrongGroups) {
  const auto env = env_of(EnvMode::DiverseAllWrong);
  const auto p = env.initial_params(env.policy_shape(1, 7));
  for (std::size_t c = 0; c < 7; ++c) {
    EXPECT_LT(softmax(p.logits(c, 0))[index_of(env.truth(c))], 2e-4);
    std::map<double, int> distinct;
    for (Label l : env.wrong_support(env.truth(c))) distinct[reward(l, env.truth(c), bundled_spec())]++;
    EXPECT_EQ(distinct.size(), env.wrong_support(env.truth(c)).size());
  }

  Rng rng(4);
  int diverse = 0;
  const int n = 300;
  for (int i = 0; i < n; ++i) {
    const auto item = env.sample_item(rng);
    const auto g = make_group(item.prompt, sample_group(p, item.prompt, 3, 0.9, rng), item.truth, bundled_spec());
    for (double r : g.rewards) EXPECT_LT(r, 0.0);
    const auto ca = ca_advantage(g, AdvantageParams{});
    EXPECT_EQ(ca.branch, Branch::ConfidencePenalty);
    diverse += ca.diagnostics.std_reward > 0.0;
  }
  EXPECT_GT(diverse, n / 2);
}

TEST(Env, OracleAttainsBaseCorrect) {
  const auto env = env_of(EnvMode::Learnable, 21);
  for (std::size_t len : {1u, 3u}) {
    const auto p = env.oracle_params(env.policy_shape(len, 9));
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
      const auto item = env.sample_item(rng);
      const auto g = make_group(item.prompt, sample_group(p, item.prompt, 1, 1.0, rng), item.truth, bundled_spec());
      EXPECT_EQ(g.rewards[0], 10.0);
    }
  }
}

TEST(Env, NoisyOracleHasRequestedAccuracy) {
  const auto env = env_of(EnvMode::Learnable, 7);
  const auto p = env.noisy_oracle_params(env.policy_shape(1, 7), 0.6);
  for (std::size_t c = 0; c < 7; ++c) {
    EXPECT_NEAR(softmax(p.logits(c, 0))[index_of(env.truth(c))], 0.6, 1e-12);
  }
  EXPECT_THROW(env.noisy_oracle_params(env.policy_shape(1, 7), 1.0), InvalidInput);
}

TEST(EvalDataset, BalancedAndSeeded) {
  const auto env = env_of(EnvMode::Learnable, 21);
  const auto a = eval_dataset(env, 20, 7);
  ASSERT_EQ(a.size(), 140u);
  std::map<Label, int> hist;
  for (const auto& it : a) {
    hist[it.truth]++;
    EXPECT_EQ(env.truth(it.prompt.context_id), it.truth);
  }
  for (Label l : kAllLabels) EXPECT_EQ(hist[l], 20);
  const auto b = eval_dataset(env, 20, 7);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].prompt.context_id, b[i].prompt.context_id);
  const auto c = eval_dataset(env, 20, 8);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs |= a[i].prompt.context_id != c[i].prompt.context_id;
  EXPECT_TRUE(differs);
  EXPECT_THROW(eval_dataset(env, 0, 1), InvalidInput);
}

TEST(EnvSpec, Validation) {
  EnvSpec s;
  s.num_contexts = 0;
  EXPECT_THROW(Env(s, bundled_spec()), ConfigError);
  s.num_contexts = 3;
  s.context_labels = {Label::AK};
  EXPECT_THROW(Env(s, bundled_spec()), ConfigError);
  s.context_labels.clear();
  s.noise = 1.0;
  EXPECT_THROW(Env(s, bundled_spec()), ConfigError);
  const auto env = env_of(EnvMode::Learnable);
  EXPECT_THROW(env.policy_shape(1, 5), ConfigError);
  EXPECT_EQ(parse_env_mode("diverse_all_wrong"), EnvMode::DiverseAllWrong);
  EXPECT_FALSE(parse_env_mode("bogus"));
}
