#pragma once

// Synthetic diagnosis environments. Contexts are discrete ids that stand in
// for images; each maps to one true label. The two adversarial modes ship an
// initial policy that realizes the GRPO failure regimes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "grpopp/errors.hpp"
#include "grpopp/labels.hpp"
#include "grpopp/policy.hpp"
#include "grpopp/random.hpp"
#include "grpopp/rewards.hpp"

namespace grpopp {

enum class EnvMode { Learnable, IdenticalWrong, DiverseAllWrong };

inline const char* to_string(EnvMode m) noexcept {
  switch (m) {
    case EnvMode::Learnable: return "learnable";
    case EnvMode::IdenticalWrong: return "identical_wrong";
    case EnvMode::DiverseAllWrong: return "diverse_all_wrong";
  }
  return "?";
}

inline std::optional<EnvMode> parse_env_mode(std::string_view s) {
  if (s == "learnable") return EnvMode::Learnable;
  if (s == "identical_wrong") return EnvMode::IdenticalWrong;
  if (s == "diverse_all_wrong") return EnvMode::DiverseAllWrong;
  return std::nullopt;
}

struct EnvSpec {
  EnvMode mode = EnvMode::Learnable;
  std::size_t num_contexts = 21;
  // True label per context; empty means context c has label c mod 7.
  std::vector<Label> context_labels;
  double noise = 0.0;  // probability that a sampled prompt carries a wrong truth label
  std::uint64_t seed = 0;
  // Logit magnitude of the adversarial initializations.
  double saturation = 8.0;
  // Extra logit added to the true label in the adversarial modes.
  double truth_offset = 0.0;
  // Number of wrong labels sharing mass in DiverseAllWrong.
  std::size_t wrong_support = 3;

  void validate() const {
    if (num_contexts == 0) throw ConfigError("env.num_contexts must be >= 1");
    if (!context_labels.empty() && context_labels.size() != num_contexts) {
      throw ConfigError("env.context_labels must list one label per context");
    }
    if (!(noise >= 0.0 && noise < 1.0)) throw ConfigError("env.noise must lie in [0, 1)");
    if (!(saturation > 0.0) || !std::isfinite(saturation)) {
      throw ConfigError("env.saturation must be finite and > 0");
    }
    if (!std::isfinite(truth_offset)) throw ConfigError("env.truth_offset must be finite");
    if (wrong_support < 2 || wrong_support > kNumLabels - 1) {
      throw ConfigError("env.wrong_support must lie in [2, 6]");
    }
  }
};

struct EvalItem {
  Prompt prompt;
  Label truth;
};

class Env {
 public:
  Env(EnvSpec spec, const RewardSpec& rewards) : spec_(std::move(spec)) {
    spec_.validate();
    labels_.resize(spec_.num_contexts);
    for (std::size_t c = 0; c < spec_.num_contexts; ++c) {
      labels_[c] = spec_.context_labels.empty() ? label_at(c % kNumLabels) : spec_.context_labels[c];
    }
    for (Label truth : kAllLabels) {
      auto ranked = wrong_labels_by_severity(truth, rewards);
      decoy_[index_of(truth)] = ranked.front().first;
      auto& support = support_[index_of(truth)];
      std::vector<double> taken;
      for (const auto& [label, value] : ranked) {
        if (support.size() == spec_.wrong_support) break;
        if (std::find(taken.begin(), taken.end(), value) != taken.end()) continue;
        taken.push_back(value);
        support.push_back(label);
      }
      // Fewer distinct penalties than requested: pad with the next labels.
      for (const auto& [label, value] : ranked) {
        if (support.size() == spec_.wrong_support) break;
        if (std::find(support.begin(), support.end(), label) == support.end()) support.push_back(label);
      }
    }
  }

  const EnvSpec& spec() const noexcept { return spec_; }
  std::size_t num_contexts() const noexcept { return spec_.num_contexts; }
  Label truth(std::size_t context) const { return labels_.at(context); }

  Prompt prompt(std::size_t context) const {
    if (context >= spec_.num_contexts) throw InvalidInput("context id out of range");
    return Prompt{context, "context-" + std::to_string(context)};
  }

  // Least severe wrong label for `truth`: the label IdenticalWrong saturates on.
  Label decoy(Label truth) const { return decoy_[index_of(truth)]; }

  // Wrong labels with distinct penalties that DiverseAllWrong spreads mass over.
  const std::vector<Label>& wrong_support(Label truth) const { return support_[index_of(truth)]; }

  // Uniform context, truth label flipped to a random other label with
  // probability `noise`.
  EvalItem sample_item(Rng& rng) const {
    const std::size_t ctx = uniform_index(rng, spec_.num_contexts);
    Label truth = labels_[ctx];
    if (spec_.noise > 0.0 && uniform01(rng) < spec_.noise) {
      const std::size_t shift = 1 + uniform_index(rng, kNumLabels - 1);
      truth = label_at((index_of(truth) + shift) % kNumLabels);
    }
    return EvalItem{prompt(ctx), truth};
  }

  PolicyShape policy_shape(std::size_t max_len, std::size_t vocab_size) const {
    if (vocab_size < kNumLabels) throw ConfigError("policy.vocab_size must be >= 7");
    if (max_len == 0) throw ConfigError("policy.max_len must be >= 1");
    return PolicyShape{spec_.num_contexts, max_len, vocab_size};
  }

  PolicyParams initial_params(const PolicyShape& shape) const {
    if (shape.num_contexts != spec_.num_contexts || shape.vocab_size < kNumLabels) {
      throw InvalidInput("policy shape inconsistent with environment");
    }
    PolicyParams params(shape);
    if (spec_.mode == EnvMode::Learnable) return params;
    const double s = spec_.saturation;
    for (std::size_t c = 0; c < shape.num_contexts; ++c) {
      const Label truth = labels_[c];
      for (std::size_t t = 0; t < shape.max_len; ++t) {
        auto row = params.logits(c, t);
        std::fill(row.begin(), row.end(), -s);
        if (spec_.mode == EnvMode::IdenticalWrong) {
          row[index_of(decoy(truth))] = s;
        } else {
          for (Label l : wrong_support(truth)) row[index_of(l)] = 0.0;
        }
        row[index_of(truth)] += spec_.truth_offset;
      }
    }
    return params;
  }

  // Logit table that always answers correctly (row gap 2 * magnitude).
  PolicyParams oracle_params(const PolicyShape& shape, double magnitude = 1e6) const {
    return accuracy_params(shape, std::nullopt, magnitude);
  }

  // Answer-position row puts probability `accuracy` on the truth and spreads
  // the rest evenly over the other six labels.
  PolicyParams noisy_oracle_params(const PolicyShape& shape, double accuracy) const {
    if (!(accuracy > 0.0 && accuracy < 1.0)) throw InvalidInput("accuracy must lie in (0, 1)");
    return accuracy_params(shape, accuracy, 0.0);
  }

 private:
  PolicyParams accuracy_params(const PolicyShape& shape, std::optional<double> accuracy,
                               double magnitude) const {
    PolicyParams params(shape);
    const double mask = -1e6;
    for (std::size_t c = 0; c < shape.num_contexts; ++c) {
      auto row = params.logits(c, shape.max_len - 1);
      std::fill(row.begin(), row.end(), mask);
      const std::size_t truth = index_of(labels_[c]);
      if (accuracy) {
        // exp(gap) / (exp(gap) + 6) = accuracy with the other labels at 0.
        for (std::size_t l = 0; l < kNumLabels; ++l) row[l] = 0.0;
        row[truth] = std::log(*accuracy * static_cast<double>(kNumLabels - 1) / (1.0 - *accuracy));
      } else {
        row[truth] = magnitude;
      }
    }
    return params;
  }

  static std::vector<std::pair<Label, double>> wrong_labels_by_severity(Label truth,
                                                                        const RewardSpec& rewards) {
    std::vector<std::pair<Label, double>> out;
    for (Label l : kAllLabels) {
      if (l == truth) continue;
      out.emplace_back(l, rewards.penalty_for(truth, l).value_or(rewards.default_mismatch_penalty));
    }
    // Least severe first, canonical order on ties.
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    return out;
  }

  EnvSpec spec_;
  std::vector<Label> labels_;
  std::array<Label, kNumLabels> decoy_{};
  std::array<std::vector<Label>, kNumLabels> support_{};
};

inline Env make_env(const EnvSpec& spec, const RewardSpec& rewards) { return Env(spec, rewards); }

// Balanced evaluation set: n_per_class items per label, cycling through the
// contexts of each label, then shuffled with a seeded Fisher-Yates pass.
inline std::vector<EvalItem> eval_dataset(const Env& env, std::size_t n_per_class,
                                          std::uint64_t seed) {
  if (n_per_class == 0) throw InvalidInput("n_per_class must be >= 1");
  std::vector<EvalItem> items;
  for (Label l : kAllLabels) {
    std::vector<std::size_t> contexts;
    for (std::size_t c = 0; c < env.num_contexts(); ++c) {
      if (env.truth(c) == l) contexts.push_back(c);
    }
    if (contexts.empty()) {
      throw ConfigError("environment has no context for label " + std::string(short_name(l)));
    }
    for (std::size_t k = 0; k < n_per_class; ++k) {
      items.push_back(EvalItem{env.prompt(contexts[k % contexts.size()]), l});
    }
  }
  Rng rng = make_rng(seed, 0xE7A1);
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_index(rng, i)]);
  }
  return items;
}

}  // namespace grpopp
