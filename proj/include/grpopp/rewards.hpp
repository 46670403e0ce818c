#pragma once

// Severity-weighted diagnosis reward: answer-tag extraction, the general
// reward constants and the [truth][predicted] penalty matrix.

#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "grpopp/errors.hpp"
#include "grpopp/labels.hpp"

namespace grpopp {

struct RewardSpec {
  double base_correct = 0.0;
  double invalid_prediction_penalty = 0.0;
  double unknown_truth_penalty = 0.0;
  double default_mismatch_penalty = 0.0;
  // Class order as declared in the spec file (auditing only; lookups are by label).
  std::array<Label, kNumLabels> classes = kAllLabels;
  // [truth][predicted] by canonical index. Diagonal is unused; an empty
  // off-diagonal cell is an unlisted pair and falls back to the default.
  std::array<std::array<std::optional<double>, kNumLabels>, kNumLabels> penalty{};

  std::optional<double> penalty_for(Label truth, Label predicted) const {
    return penalty[index_of(truth)][index_of(predicted)];
  }

  // Throws LoadError naming the first violated invariant.
  void validate() const {
    auto finite = [](double v) { return std::isfinite(v); };
    if (!finite(base_correct) || !(base_correct > 0.0)) {
      throw LoadError("base_correct must be a finite value > 0");
    }
    const std::array<std::pair<const char*, double>, 3> penalties = {{
        {"invalid_prediction_penalty", invalid_prediction_penalty},
        {"unknown_truth_penalty", unknown_truth_penalty},
        {"default_mismatch_penalty", default_mismatch_penalty},
    }};
    for (const auto& [name, v] : penalties) {
      if (!finite(v) || !(v < 0.0)) throw LoadError(std::string(name) + " must be a finite value < 0");
    }
    for (std::size_t t = 0; t < kNumLabels; ++t) {
      for (std::size_t p = 0; p < kNumLabels; ++p) {
        const auto& cell = penalty[t][p];
        if (t == p) {
          if (cell) throw LoadError("penalty matrix diagonal must be empty");
          continue;
        }
        if (cell && (!finite(*cell) || !(*cell < 0.0))) {
          throw LoadError("penalty[" + std::string(short_name(label_at(t))) + "][" +
                          std::string(short_name(label_at(p))) + "] must be < 0, got " +
                          std::to_string(*cell));
        }
      }
    }
  }
};

// Label inside the first well-formed <answer>...</answer> span, alias-normalized.
inline std::optional<Label> extract_answer(std::string_view text) {
  constexpr std::string_view open = "<answer>";
  constexpr std::string_view close = "</answer>";
  const auto begin = text.find(open);
  if (begin == std::string_view::npos) return std::nullopt;
  const auto content = begin + open.size();
  const auto end = text.find(close, content);
  if (end == std::string_view::npos) return std::nullopt;
  return parse_label(text.substr(content, end - content));
}

inline double reward(const std::optional<Label>& predicted, const std::optional<Label>& truth,
                     const RewardSpec& spec) {
  if (!truth) return spec.unknown_truth_penalty;
  if (!predicted) return spec.invalid_prediction_penalty;
  if (*predicted == *truth) return spec.base_correct;
  return spec.penalty_for(*truth, *predicted).value_or(spec.default_mismatch_penalty);
}

// Terminal-only episodes: reward-to-go is the terminal reward at every position.
inline std::vector<double> reward_to_go(double terminal_reward, std::size_t response_len) {
  if (response_len == 0) throw InvalidInput("reward_to_go requires response_len >= 1");
  return std::vector<double>(response_len, terminal_reward);
}

// Token ids below kNumLabels name a diagnosis; larger ids are filler. All but
// the last token form the reasoning trace, the last token is the answer.
inline std::string render_response(std::span<const std::size_t> tokens) {
  std::string text = "<thinking>";
  for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
    if (t) text += ' ';
    text += tokens[t] < kNumLabels ? std::string(short_name(label_at(tokens[t])))
                                   : "tok" + std::to_string(tokens[t]);
  }
  text += "</thinking>";
  if (!tokens.empty() && tokens.back() < kNumLabels) {
    text += "<answer>";
    text += full_name(label_at(tokens.back()));
    text += "</answer>";
  }
  return text;
}

inline double score_tokens(std::span<const std::size_t> tokens, const std::optional<Label>& truth,
                           const RewardSpec& spec) {
  return reward(extract_answer(render_response(tokens)), truth, spec);
}

inline RewardSpec reward_spec_from_json(const nlohmann::json& j) {
  using nlohmann::json;
  auto require = [](const json& obj, const char* key) -> const json& {
    if (!obj.is_object() || !obj.contains(key)) {
      throw LoadError(std::string("reward spec: missing field '") + key + "'");
    }
    return obj.at(key);
  };
  auto number = [](const json& v, const std::string& what) {
    if (!v.is_number()) throw LoadError("reward spec: '" + what + "' must be a number");
    return v.get<double>();
  };

  if (!j.is_object()) throw LoadError("reward spec: top level must be an object");
  for (const auto& [key, _] : j.items()) {
    if (key != "format" && key != "version" && key != "constants" && key != "classes" &&
        key != "penalty_matrix") {
      throw LoadError("reward spec: unknown field '" + key + "'");
    }
  }
  if (j.contains("version") && j.at("version") != 1) {
    throw LoadError("reward spec: unsupported version " + j.at("version").dump());
  }

  RewardSpec spec;
  const json& constants = require(j, "constants");
  for (const auto& [key, _] : constants.items()) {
    if (key != "base_correct" && key != "invalid_prediction_penalty" &&
        key != "unknown_truth_penalty" && key != "default_mismatch_penalty") {
      throw LoadError("reward spec: unknown constant '" + key + "'");
    }
  }
  spec.base_correct = number(require(constants, "base_correct"), "base_correct");
  spec.invalid_prediction_penalty =
      number(require(constants, "invalid_prediction_penalty"), "invalid_prediction_penalty");
  spec.unknown_truth_penalty =
      number(require(constants, "unknown_truth_penalty"), "unknown_truth_penalty");
  spec.default_mismatch_penalty =
      number(require(constants, "default_mismatch_penalty"), "default_mismatch_penalty");

  const json& classes = require(j, "classes");
  if (!classes.is_array() || classes.size() != kNumLabels) {
    throw LoadError("reward spec: 'classes' must list exactly 7 labels");
  }
  std::array<bool, kNumLabels> seen{};
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    const auto name = classes[i].is_string() ? classes[i].get<std::string>() : std::string();
    const auto label = parse_label(name);
    if (!label) throw LoadError("reward spec: unknown class '" + name + "'");
    if (seen[index_of(*label)]) throw LoadError("reward spec: duplicate class '" + name + "'");
    seen[index_of(*label)] = true;
    spec.classes[i] = *label;
  }

  const json& matrix = require(j, "penalty_matrix");
  if (!matrix.is_object() || matrix.size() != kNumLabels) {
    throw LoadError("reward spec: 'penalty_matrix' must have one named row per class");
  }
  for (const auto& [row_name, row] : matrix.items()) {
    const auto truth = parse_label(row_name);
    if (!truth) throw LoadError("reward spec: unknown matrix row '" + row_name + "'");
    if (!row.is_array() || row.size() != kNumLabels) {
      throw LoadError("reward spec: row '" + row_name + "' must have 7 cells");
    }
    for (std::size_t c = 0; c < kNumLabels; ++c) {
      const Label predicted = spec.classes[c];
      const json& cell = row[c];
      const std::string where = "[" + row_name + "][" + std::string(short_name(predicted)) + "]";
      if (predicted == *truth) {
        if (!cell.is_null()) throw LoadError("reward spec: diagonal cell " + where + " must be null");
        continue;
      }
      if (cell.is_string() && cell.get<std::string>() == "default") continue;
      spec.penalty[index_of(*truth)][index_of(predicted)] = number(cell, "cell " + where);
    }
  }
  spec.validate();
  return spec;
}

inline RewardSpec load_reward_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open reward spec '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError("reward spec '" + path.string() + "': " + e.what());
  }
  try {
    return reward_spec_from_json(j);
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

inline nlohmann::json reward_spec_to_json(const RewardSpec& spec) {
  nlohmann::json j;
  j["constants"] = {{"base_correct", spec.base_correct},
                    {"invalid_prediction_penalty", spec.invalid_prediction_penalty},
                    {"unknown_truth_penalty", spec.unknown_truth_penalty},
                    {"default_mismatch_penalty", spec.default_mismatch_penalty}};
  j["classes"] = nlohmann::json::array();
  for (Label l : spec.classes) j["classes"].push_back(std::string(short_name(l)));
  nlohmann::json matrix = nlohmann::json::object();
  for (Label truth : spec.classes) {
    nlohmann::json row = nlohmann::json::array();
    for (Label predicted : spec.classes) {
      if (truth == predicted) {
        row.push_back(nullptr);
      } else if (auto v = spec.penalty_for(truth, predicted)) {
        row.push_back(*v);
      } else {
        row.push_back("default");
      }
    }
    matrix[std::string(short_name(truth))] = row;
  }
  j["penalty_matrix"] = matrix;
  return j;
}

}  // namespace grpopp
