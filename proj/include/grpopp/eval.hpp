#pragma once

// Single-shot and majority-vote evaluation with per-class precision, recall
// and F1. Each item draws from its own seeded stream, so results do not
// depend on evaluation order and k = 1 voting reproduces single-shot exactly.

#include <array>
#include <concepts>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "grpopp/env.hpp"
#include "grpopp/errors.hpp"
#include "grpopp/labels.hpp"
#include "grpopp/policy.hpp"
#include "grpopp/random.hpp"
#include "grpopp/rewards.hpp"

namespace grpopp {

template <class P>
concept Predictor = requires(const P& p, const Prompt& q, Rng& rng) {
  { p(q, rng) } -> std::convertible_to<std::optional<Label>>;
};

// Samples one response from a logit table and reads its answer tag.
struct SoftmaxPredictor {
  const PolicyParams* params;
  double temperature = 1.0;

  std::optional<Label> operator()(const Prompt& prompt, Rng& rng) const {
    const auto group = sample_group(*params, prompt, 1, temperature, rng);
    return extract_answer(render_response(group.front().tokens));
  }
};

inline constexpr std::size_t kInvalidColumn = kNumLabels;

struct ConfusionMatrix {
  // [truth][predicted]; column kInvalidColumn counts missing/invalid answers.
  std::array<std::array<std::size_t, kNumLabels + 1>, kNumLabels> counts{};

  void add(Label truth, const std::optional<Label>& predicted) {
    ++counts[index_of(truth)][predicted ? index_of(*predicted) : kInvalidColumn];
  }

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& row : counts) for (auto c : row) n += c;
    return n;
  }

  std::size_t trace() const {
    std::size_t n = 0;
    for (std::size_t k = 0; k < kNumLabels; ++k) n += counts[k][k];
    return n;
  }

  std::size_t invalid() const {
    std::size_t n = 0;
    for (const auto& row : counts) n += row[kInvalidColumn];
    return n;
  }

  double accuracy() const {
    const auto n = total();
    return n ? static_cast<double>(trace()) / static_cast<double>(n) : 0.0;
  }
};

struct ClassMetrics {
  std::array<double, kNumLabels> precision{};
  std::array<double, kNumLabels> recall{};
  std::array<double, kNumLabels> f1{};
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
};

// 0/0 is reported as 0 for every ratio.
inline ClassMetrics metrics_from_confusion(const ConfusionMatrix& cm) {
  ClassMetrics m;
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    const double tp = static_cast<double>(cm.counts[c][c]);
    double predicted = 0.0, actual = 0.0;
    for (std::size_t t = 0; t < kNumLabels; ++t) predicted += static_cast<double>(cm.counts[t][c]);
    for (auto v : cm.counts[c]) actual += static_cast<double>(v);
    m.precision[c] = predicted > 0.0 ? tp / predicted : 0.0;
    m.recall[c] = actual > 0.0 ? tp / actual : 0.0;
    const double pr = m.precision[c] + m.recall[c];
    m.f1[c] = pr > 0.0 ? 2.0 * m.precision[c] * m.recall[c] / pr : 0.0;
    m.macro_precision += m.precision[c];
    m.macro_recall += m.recall[c];
    m.macro_f1 += m.f1[c];
  }
  m.macro_precision /= kNumLabels;
  m.macro_recall /= kNumLabels;
  m.macro_f1 /= kNumLabels;
  m.accuracy = cm.accuracy();
  return m;
}

// Modal valid label; ties go to the earlier canonical class; no valid vote
// means an invalid prediction.
inline std::optional<Label> majority_vote(std::span<const std::optional<Label>> votes) {
  std::array<std::size_t, kNumLabels> tally{};
  for (const auto& v : votes) {
    if (v) ++tally[index_of(*v)];
  }
  std::optional<Label> best;
  std::size_t best_count = 0;
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    if (tally[c] > best_count) {
      best = label_at(c);
      best_count = tally[c];
    }
  }
  return best;
}

struct EvalResult {
  ConfusionMatrix confusion;
  ClassMetrics metrics;
  std::vector<std::optional<Label>> predictions;
  std::vector<std::vector<std::optional<Label>>> votes;  // per item, k entries
  std::size_t k = 1;
};

inline constexpr std::uint64_t kEvalStream = 0xE5A1;

template <Predictor P>
EvalResult majority_vote_eval(const P& predictor, std::span<const EvalItem> dataset, std::size_t k,
                              std::uint64_t seed) {
  if (k == 0) throw InvalidInput("majority vote requires k >= 1");
  if (dataset.empty()) throw InvalidInput("evaluation dataset is empty");
  EvalResult out;
  out.k = k;
  out.predictions.reserve(dataset.size());
  out.votes.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    Rng rng = make_rng(seed, kEvalStream, i);
    std::vector<std::optional<Label>> votes;
    votes.reserve(k);
    for (std::size_t v = 0; v < k; ++v) votes.push_back(predictor(dataset[i].prompt, rng));
    const auto decided = majority_vote(votes);
    out.confusion.add(dataset[i].truth, decided);
    out.predictions.push_back(decided);
    out.votes.push_back(std::move(votes));
  }
  out.metrics = metrics_from_confusion(out.confusion);
  return out;
}

template <Predictor P>
EvalResult single_shot_eval(const P& predictor, std::span<const EvalItem> dataset,
                            std::uint64_t seed) {
  return majority_vote_eval(predictor, dataset, 1, seed);
}

}  // namespace grpopp
