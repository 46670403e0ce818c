#pragma once

// Experiment files: strict JSON with unknown-key rejection. Every resolved
// config is echoed back with defaults materialized.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grpopp/env.hpp"
#include "grpopp/errors.hpp"
#include "grpopp/trainer.hpp"

namespace grpopp {

struct EvalConfig {
  double temperature = 1.0;
  std::size_t k = 5;
  std::size_t n_per_class = 20;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  TrainConfig train;
  EnvSpec env;
  std::filesystem::path reward_spec;  // resolved against the config file directory
  std::string reward_spec_as_written;
  std::filesystem::path output_dir = "out";
  std::string formats = "both";  // csv | json | both
  EvalConfig eval;
};

namespace config_detail {

using nlohmann::json;

class Reader {
 public:
  Reader(const json& obj, std::string section) : obj_(obj), section_(std::move(section)) {
    if (!obj_.is_object()) throw ConfigError("'" + section_ + "' must be an object");
  }

  template <class T>
  void optional(const char* key, T& out) {
    seen_.insert(key);
    if (obj_.contains(key)) out = get<T>(key);
  }

  template <class T>
  void required(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) throw ConfigError("missing required field '" + where(key) + "'");
    out = get<T>(key);
  }

  void reject_unknown() const {
    for (const auto& [key, _] : obj_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown field '" + where(key) + "'");
    }
  }

  std::string where(const std::string& key) const {
    return section_.empty() ? key : section_ + "." + key;
  }

 private:
  template <class T>
  T get(const char* key) const {
    const json& v = obj_.at(key);
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
      }
      return v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError("field '" + where(key) + "' has the wrong type: " + v.dump());
    }
  }

  const json& obj_;
  std::string section_;
  std::set<std::string> seen_;
};

}  // namespace config_detail

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  config_detail::Reader r(j, "train");
  TrainConfig c;
  std::string algorithm = to_string(c.algorithm);
  r.optional("iterations", c.iterations);
  r.optional("steps_per_iter", c.steps_per_iter);
  r.optional("ppo_steps", c.ppo_steps);
  r.optional("group_size", c.group_size);
  r.optional("learning_rate", c.learning_rate);
  r.optional("temperature", c.temperature);
  r.required("beta", c.beta);
  r.required("gamma", c.gamma);
  r.optional("tau", c.tau);
  r.optional("eps", c.eps);
  r.optional("clip_eps", c.clip_eps);
  r.optional("batch_size", c.batch_size);
  r.optional("seed", c.seed);
  r.optional("algorithm", algorithm);
  r.optional("kl_coeff", c.kl_coeff);
  r.optional("max_len", c.max_len);
  r.optional("vocab_size", c.vocab_size);
  r.reject_unknown();
  const auto alg = parse_algorithm(algorithm);
  if (!alg) throw ConfigError("train.algorithm must be 'grpo' or 'grpopp', got '" + algorithm + "'");
  c.algorithm = *alg;
  c.validate();
  return c;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"iterations", c.iterations},   {"steps_per_iter", c.steps_per_iter},
          {"ppo_steps", c.ppo_steps},     {"group_size", c.group_size},
          {"learning_rate", c.learning_rate}, {"temperature", c.temperature},
          {"beta", c.beta},               {"gamma", c.gamma},
          {"tau", c.tau},                 {"eps", c.eps},
          {"clip_eps", c.clip_eps},       {"batch_size", c.batch_size},
          {"seed", c.seed},               {"algorithm", to_string(c.algorithm)},
          {"kl_coeff", c.kl_coeff},       {"max_len", c.max_len},
          {"vocab_size", c.vocab_size}};
}

inline EnvSpec env_spec_from_json(const nlohmann::json& j) {
  config_detail::Reader r(j, "env");
  EnvSpec e;
  std::string mode = to_string(e.mode);
  std::vector<std::string> labels;
  r.optional("mode", mode);
  r.optional("num_contexts", e.num_contexts);
  r.optional("context_labels", labels);
  r.optional("noise", e.noise);
  r.optional("seed", e.seed);
  r.optional("saturation", e.saturation);
  r.optional("truth_offset", e.truth_offset);
  r.optional("wrong_support", e.wrong_support);
  r.reject_unknown();
  const auto m = parse_env_mode(mode);
  if (!m) throw ConfigError("env.mode must be learnable, identical_wrong or diverse_all_wrong");
  e.mode = *m;
  for (const auto& name : labels) {
    const auto l = parse_label(name);
    if (!l) throw ConfigError("env.context_labels: unknown label '" + name + "'");
    e.context_labels.push_back(*l);
  }
  e.validate();
  return e;
}

inline nlohmann::json to_json(const EnvSpec& e) {
  nlohmann::json labels = nlohmann::json::array();
  for (Label l : e.context_labels) labels.push_back(std::string(short_name(l)));
  return {{"mode", to_string(e.mode)},   {"num_contexts", e.num_contexts},
          {"context_labels", labels},    {"noise", e.noise},
          {"seed", e.seed},              {"saturation", e.saturation},
          {"truth_offset", e.truth_offset}, {"wrong_support", e.wrong_support}};
}

inline EvalConfig eval_config_from_json(const nlohmann::json& j) {
  config_detail::Reader r(j, "eval");
  EvalConfig e;
  r.optional("temperature", e.temperature);
  r.optional("k", e.k);
  r.optional("n_per_class", e.n_per_class);
  r.optional("seed", e.seed);
  r.reject_unknown();
  if (!(e.temperature > 0.0)) throw ConfigError("eval.temperature must be > 0");
  if (e.k == 0) throw ConfigError("eval.k must be >= 1");
  if (e.n_per_class == 0) throw ConfigError("eval.n_per_class must be >= 1");
  return e;
}

inline nlohmann::json to_json(const EvalConfig& e) {
  return {{"temperature", e.temperature}, {"k", e.k}, {"n_per_class", e.n_per_class}, {"seed", e.seed}};
}

// `base_dir` resolves a relative reward_spec path.
inline ExperimentConfig experiment_from_json(const nlohmann::json& j,
                                             const std::filesystem::path& base_dir,
                                             bool check_files = true) {
  config_detail::Reader r(j, "");
  nlohmann::json train = nlohmann::json::object(), env = nlohmann::json::object(),
                 eval = nlohmann::json::object();
  ExperimentConfig x;
  std::string out_dir = x.output_dir.string();
  std::string version_tag;
  std::uint64_t version = 1;
  r.required("train", train);
  r.optional("env", env);
  r.required("reward_spec", x.reward_spec_as_written);
  r.optional("output_dir", out_dir);
  r.optional("formats", x.formats);
  r.optional("eval", eval);
  std::string resolved;
  r.optional("reward_spec_resolved", resolved);
  r.optional("format", version_tag);
  r.optional("version", version);
  r.reject_unknown();
  if (version != 1) throw ConfigError("unsupported experiment config version");

  x.train = train_config_from_json(train);
  x.env = env_spec_from_json(env);
  x.eval = eval_config_from_json(eval);
  x.output_dir = out_dir;
  if (x.formats != "csv" && x.formats != "json" && x.formats != "both") {
    throw ConfigError("formats must be csv, json or both");
  }
  const std::filesystem::path spec(x.reward_spec_as_written);
  x.reward_spec = !resolved.empty() ? std::filesystem::path(resolved)
                  : std::filesystem::absolute(base_dir / spec).lexically_normal();
  if (check_files && !std::filesystem::exists(x.reward_spec)) {
    throw ConfigError("reward_spec: file '" + x.reward_spec.string() + "' does not exist");
  }
  return x;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  return experiment_from_json(j, path.parent_path());
}

inline nlohmann::json to_json(const ExperimentConfig& x) {
  return {{"version", 1},
          {"train", to_json(x.train)},
          {"env", to_json(x.env)},
          {"reward_spec", x.reward_spec_as_written},
          {"reward_spec_resolved", x.reward_spec.string()},
          {"output_dir", x.output_dir.string()},
          {"formats", x.formats},
          {"eval", to_json(x.eval)}};
}

}  // namespace grpopp
