#pragma once

// Context-conditioned softmax sequence policy. Each (context, position) pair
// owns an independent logit row over the vocabulary, so log-probabilities and
// score functions are exact and cheap.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "grpopp/errors.hpp"
#include "grpopp/random.hpp"

namespace grpopp {

struct PolicyShape {
  std::size_t num_contexts = 1;
  std::size_t max_len = 1;
  std::size_t vocab_size = 7;

  std::size_t size() const noexcept { return num_contexts * max_len * vocab_size; }

  friend bool operator==(const PolicyShape&, const PolicyShape&) = default;
};

class PolicyParams {
 public:
  PolicyParams() = default;

  explicit PolicyParams(PolicyShape shape) : shape_(shape), values_(checked(shape).size(), 0.0) {}

  PolicyParams(PolicyShape shape, std::vector<double> values)
      : shape_(checked(shape)), values_(std::move(values)) {
    if (values_.size() != shape_.size()) {
      throw InvalidInput("policy parameter vector has " + std::to_string(values_.size()) +
                         " entries, shape requires " + std::to_string(shape_.size()));
    }
    for (double v : values_) {
      if (!std::isfinite(v)) throw InvalidInput("policy parameters must be finite");
    }
  }

  const PolicyShape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  std::size_t offset(std::size_t context, std::size_t position) const noexcept {
    return (context * shape_.max_len + position) * shape_.vocab_size;
  }

  std::span<const double> logits(std::size_t context, std::size_t position) const noexcept {
    return std::span<const double>(values_).subspan(offset(context, position), shape_.vocab_size);
  }

  std::span<double> logits(std::size_t context, std::size_t position) noexcept {
    return std::span<double>(values_).subspan(offset(context, position), shape_.vocab_size);
  }

  bool all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;

 private:
  static PolicyShape checked(PolicyShape s) {
    if (s.num_contexts == 0 || s.max_len == 0 || s.vocab_size == 0) {
      throw InvalidInput("policy shape dimensions must all be >= 1");
    }
    return s;
  }

  PolicyShape shape_{};
  std::vector<double> values_;
};

struct Prompt {
  std::size_t context_id = 0;
  std::string summary;
};

struct Response {
  std::vector<std::size_t> tokens;
  std::vector<double> token_logprobs;  // under the untempered generating policy
  double total_logprob = 0.0;

  std::size_t length() const noexcept { return tokens.size(); }
};

// Numerically stable log-softmax of `logits / temperature` into `out`.
inline void log_softmax(std::span<const double> logits, std::span<double> out,
                        double temperature = 1.0) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    out[j] = (logits[j] - mx) / temperature;
    sum += std::exp(out[j]);
  }
  const double lse = std::log(sum);
  for (auto& v : out) v -= lse;
}

inline std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0) {
  std::vector<double> out(logits.size());
  log_softmax(logits, out, temperature);
  for (auto& v : out) v = std::exp(v);
  return out;
}

namespace detail {

inline void check_prompt(const PolicyParams& params, const Prompt& prompt) {
  if (prompt.context_id >= params.shape().num_contexts) {
    throw InvalidInput("context id " + std::to_string(prompt.context_id) + " out of range (" +
                       std::to_string(params.shape().num_contexts) + " contexts)");
  }
}

inline void check_tokens(const PolicyParams& params, std::span<const std::size_t> tokens) {
  if (tokens.empty()) throw InvalidInput("response must contain at least one token");
  if (tokens.size() > params.shape().max_len) {
    throw InvalidInput("response length " + std::to_string(tokens.size()) + " exceeds max_len " +
                       std::to_string(params.shape().max_len));
  }
  for (std::size_t tok : tokens) {
    if (tok >= params.shape().vocab_size) {
      throw InvalidInput("token " + std::to_string(tok) + " outside vocabulary of size " +
                         std::to_string(params.shape().vocab_size));
    }
  }
}

}  // namespace detail

// log pi(o_t | q, o_<t) for every position of `tokens`.
inline std::vector<double> token_logprobs(const PolicyParams& params, const Prompt& prompt,
                                          std::span<const std::size_t> tokens) {
  detail::check_prompt(params, prompt);
  detail::check_tokens(params, tokens);
  std::vector<double> row(params.shape().vocab_size);
  std::vector<double> out(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    log_softmax(params.logits(prompt.context_id, t), row);
    out[t] = row[tokens[t]];
  }
  return out;
}

inline double sequence_logprob(const PolicyParams& params, const Prompt& prompt,
                               std::span<const std::size_t> tokens) {
  double total = 0.0;
  for (double lp : token_logprobs(params, prompt, tokens)) total += lp;
  return total;
}

inline Response make_response(const PolicyParams& params, const Prompt& prompt,
                              std::vector<std::size_t> tokens) {
  Response r;
  r.token_logprobs = token_logprobs(params, prompt, tokens);
  r.tokens = std::move(tokens);
  for (double lp : r.token_logprobs) r.total_logprob += lp;
  return r;
}

// Categorical draw from probabilities that sum to one; zero-probability
// entries are never selected.
inline std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (probs[j] <= 0.0) continue;
    cum += probs[j];
    last_positive = j;
    if (u < cum) return j;
  }
  return last_positive;
}

// Draws m full-length responses. Temperature shapes the sampling distribution
// only; recorded log-probs are under the untempered policy.
inline std::vector<Response> sample_group(const PolicyParams& params, const Prompt& prompt,
                                          std::size_t m, double temperature, Rng& rng) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("sampling temperature must be > 0");
  }
  if (m == 0) throw InvalidInput("group size must be >= 1");
  detail::check_prompt(params, prompt);

  const auto& shape = params.shape();
  std::vector<std::vector<double>> tempered(shape.max_len);
  for (std::size_t t = 0; t < shape.max_len; ++t) {
    tempered[t] = softmax(params.logits(prompt.context_id, t), temperature);
  }

  std::vector<Response> group;
  group.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<std::size_t> tokens(shape.max_len);
    for (std::size_t t = 0; t < shape.max_len; ++t) tokens[t] = sample_categorical(tempered[t], rng);
    group.push_back(make_response(params, prompt, std::move(tokens)));
  }
  return group;
}

// Gradient of log pi(o | q) with respect to every parameter: one-hot minus
// softmax in each visited (context, position) row, zero elsewhere.
inline std::vector<double> score(const PolicyParams& params, const Prompt& prompt,
                                 std::span<const std::size_t> tokens) {
  detail::check_prompt(params, prompt);
  detail::check_tokens(params, tokens);
  std::vector<double> grad(params.size(), 0.0);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto probs = softmax(params.logits(prompt.context_id, t));
    const std::size_t base = params.offset(prompt.context_id, t);
    for (std::size_t j = 0; j < probs.size(); ++j) grad[base + j] -= probs[j];
    grad[base + tokens[t]] += 1.0;
  }
  return grad;
}

inline std::vector<double> score(const PolicyParams& params, const Prompt& prompt,
                                 const Response& response) {
  return score(params, prompt, response.tokens);
}

}  // namespace grpopp
