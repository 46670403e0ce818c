#pragma once

// Command-line driver: train, compare, verify, eval and checkpoint.
// Exit status: 0 success, 1 validation error, 2 runtime or numeric abort,
// 3 verification failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "grpopp/config.hpp"
#include "grpopp/env.hpp"
#include "grpopp/eval.hpp"
#include "grpopp/report_io.hpp"
#include "grpopp/rewards.hpp"
#include "grpopp/trainer.hpp"
#include "grpopp/verify.hpp"

#ifndef GRPOPP_DEFAULT_REWARD_SPEC
#define GRPOPP_DEFAULT_REWARD_SPEC "data/reward_spec.json"
#endif

namespace grpopp {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2, kExitVerifyFailed = 3 };

inline constexpr const char* kOutDirEnv = "GRPOPP_OUT_DIR";

namespace cli_detail {

struct Common {
  std::string out;
  std::string format;
};

// --out, then $GRPOPP_OUT_DIR, then the config value.
inline std::filesystem::path resolve_out(const std::string& flag, const std::filesystem::path& fallback) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return fallback;
}

inline bool want_csv(const std::string& f) { return f == "csv" || f == "both"; }
inline bool want_json(const std::string& f) { return f == "json" || f == "both"; }

inline std::string csv_of(const auto& writer) {
  std::ostringstream os;
  writer(os);
  return os.str();
}

inline int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
                     const std::string& init_path, const Common& common, std::ostream& out) {
  auto x = load_experiment(config_path);
  if (seed) x.train.seed = *seed;
  if (!common.format.empty()) x.formats = common.format;
  x.output_dir = resolve_out(common.out, x.output_dir);
  const auto rewards = load_reward_spec(x.reward_spec);
  const Env env(x.env, rewards);
  const auto echo = to_json(x);

  std::optional<PolicyParams> init;
  if (!init_path.empty()) init = load_checkpoint(init_path).params;

  TrainReport report;
  try {
    report = train(x.train, env, rewards, init);
  } catch (const NumericAbort& e) {
    const auto diag = x.output_dir / "abort_diagnostic.json";
    write_text(diag, e.diagnostic() + "\n");
    throw NumericAbort(std::string(e.what()) + " (diagnostic: " + diag.string() + ")", e.diagnostic());
  }

  if (want_csv(x.formats)) {
    write_text(x.output_dir / "train.csv", csv_of([&](std::ostream& os) { write_train_csv(os, report); }));
  }
  if (want_json(x.formats)) {
    write_text(x.output_dir / "train.json", train_report_json(report, echo).dump(2) + "\n");
  }
  write_text(x.output_dir / "checkpoint.json", checkpoint_json(x, report.final_params).dump() + "\n");

  std::size_t standard = 0, penalty = 0;
  for (const auto& r : report.rows) {
    standard += r.standard_groups;
    penalty += r.penalty_groups;
  }
  const double groups = static_cast<double>(standard + penalty);
  out << "algorithm " << to_string(x.train.algorithm) << ", " << report.rows.size() << " steps\n"
      << "final mean reward (last 10%): " << final_window_mean(report) << "\n"
      << "branch fractions: standard " << standard / groups << ", confidence_penalty "
      << penalty / groups << "\n"
      << "artifacts in " << x.output_dir.string() << "\n";
  return kExitOk;
}

inline int cmd_compare(const std::string& config_path, std::size_t n_seeds,
                       const std::vector<std::uint64_t>& seed_list, const Common& common,
                       std::ostream& out) {
  auto x = load_experiment(config_path);
  if (!common.format.empty()) x.formats = common.format;
  x.output_dir = resolve_out(common.out, x.output_dir);
  const auto rewards = load_reward_spec(x.reward_spec);
  const Env env(x.env, rewards);

  std::vector<std::uint64_t> seeds = seed_list;
  if (seeds.empty()) {
    if (n_seeds == 0) throw ConfigError("--seeds must be >= 1");
    for (std::size_t k = 0; k < n_seeds; ++k) seeds.push_back(x.train.seed + k);
  }
  TrainConfig a = x.train, b = x.train;
  a.algorithm = Algorithm::GRPO;
  b.algorithm = Algorithm::GRPOPP;
  const auto pairs = compare_runs(a, b, env, rewards, seeds);
  const auto summary = summarize_compare(pairs);

  if (want_csv(x.formats)) {
    write_text(x.output_dir / "compare.csv", csv_of([&](std::ostream& os) { write_compare_csv(os, pairs); }));
  }
  if (want_json(x.formats)) {
    nlohmann::json runs = nlohmann::json::array();
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      runs.push_back({{"seed", pairs[k].seed},
                      {"grpo_final_window_mean", summary.grpo_final[k]},
                      {"grpopp_final_window_mean", summary.grpopp_final[k]},
                      {"grpo_initial_window_mean", initial_window_mean(pairs[k].a)},
                      {"grpopp_initial_window_mean", initial_window_mean(pairs[k].b)}});
    }
    nlohmann::json j = {{"csv_schema_version", kCsvSchemaVersion},
                        {"config", to_json(x)},
                        {"seeds", seeds},
                        {"runs", runs},
                        {"fraction_grpopp_at_least_grpo", summary.fraction()}};
    write_text(x.output_dir / "compare.json", j.dump(2) + "\n");
  }
  out << "GRPO++ final-window mean >= GRPO in " << summary.grpopp_at_least_grpo << "/" << summary.seeds
      << " seeds (fraction " << summary.fraction() << ")\n";
  return kExitOk;
}

inline int cmd_verify(const std::vector<std::string>& only, std::size_t n, std::size_t audit_cases,
                      std::uint64_t seed, const std::string& reward_spec_path, const Common& common,
                      std::ostream& out) {
  const std::vector<std::string> all = {"failure-modes", "theorem1", "theorem2", "gradient-audit"};
  for (const auto& o : only) {
    if (std::find(all.begin(), all.end(), o) == all.end()) throw ConfigError("--only: unknown check '" + o + "'");
  }
  auto selected = [&](const std::string& name) {
    return only.empty() || std::find(only.begin(), only.end(), name) != only.end();
  };
  if (n < 1) throw ConfigError("--n must be >= 1");
  const VerifyParams vp;
  nlohmann::json report = {{"seed", seed},
                           {"params", {{"beta", vp.beta}, {"gamma", vp.gamma}, {"eps", vp.eps},
                                       {"clip_eps", vp.clip_eps}, {"temperature", vp.temperature}}}};
  bool ok = true;
  auto line = [&](const std::string& name, bool pass, const std::string& detail) {
    out << (pass ? "PASS  " : "FAIL  ") << name << "  " << detail << "\n";
    ok = ok && pass;
  };

  if (selected("failure-modes")) {
    const auto rewards = load_reward_spec(reward_spec_path);
    const auto f1 = demo_failure_mode_1(3, seed, rewards, vp);
    const auto f2 = demo_failure_mode_2(3, seed, rewards, vp);
    report["failure_mode_1"] = f1.to_json();
    report["failure_mode_2"] = f2.to_json();
    line("failure_mode_1", f1.pass, "grpo |grad| = " + fmt_real(f1.grpo_grad_norm) +
                                        ", grpo++ |grad| = " + fmt_real(f1.grpopp_grad_norm));
    line("failure_mode_2", f2.pass, "grpo max adv = " +
                                        fmt_real(*std::max_element(f2.grpo_advantages.begin(),
                                                                   f2.grpo_advantages.end())) +
                                        ", grpo++ max adv = " +
                                        fmt_real(*std::max_element(f2.grpopp_advantages.begin(),
                                                                   f2.grpopp_advantages.end())));
  }
  if (selected("theorem1")) {
    const auto t1 = check_theorem1_suite(100, seed, vp);
    report["theorem1"] = t1.to_json();
    line("theorem1", t1.pass, "max identity error " + fmt_real(t1.max_identity_error) +
                                  ", cancellation vanishing " + (t1.cancellation.vanishing ? "yes" : "no"));
  }
  if (selected("theorem2")) {
    const auto t2 = check_theorem2(n, seed, vp);
    report["theorem2"] = t2.to_json();
    line("theorem2", t2.pass, std::to_string(t2.upper_violations) + " upper / " +
                                  std::to_string(t2.lower_violations) + " lower violations, tightness " +
                                  fmt_real(t2.min_upper_tightness));
  }
  if (selected("gradient-audit")) {
    const auto ga = gradient_audit(audit_cases, seed, vp);
    report["gradient_audit"] = ga.to_json();
    line("gradient_audit", ga.pass, "max relative error " + fmt_real(ga.max_rel_error));
  }
  report["pass"] = ok;
  const auto dir = resolve_out(common.out, "out");
  write_text(dir / "verify.json", report.dump(2) + "\n");
  return ok ? kExitOk : kExitVerifyFailed;
}

inline int cmd_eval(const std::string& checkpoint_path, const std::string& mode, std::optional<std::size_t> k,
                    std::optional<std::size_t> n_per_class, std::optional<std::uint64_t> seed,
                    std::optional<double> temperature, const Common& common, std::ostream& out) {
  if (mode != "single" && mode != "vote") throw ConfigError("--mode must be single or vote");
  const auto ck = load_checkpoint(checkpoint_path);
  auto x = ck.config;
  if (k) x.eval.k = *k;
  if (n_per_class) x.eval.n_per_class = *n_per_class;
  if (seed) x.eval.seed = *seed;
  if (temperature) x.eval.temperature = *temperature;
  if (x.eval.k == 0) throw ConfigError("--k must be >= 1");
  if (x.eval.n_per_class == 0) throw ConfigError("--n-per-class must be >= 1");
  if (!(x.eval.temperature > 0.0)) throw ConfigError("--temperature must be > 0");
  const std::string format = common.format.empty() ? x.formats : common.format;

  const auto rewards = load_reward_spec(x.reward_spec);
  const Env env(x.env, rewards);
  if (!(ck.params.shape() == env.policy_shape(x.train.max_len, x.train.vocab_size))) {
    throw ConfigError("checkpoint parameters do not match the configured policy shape");
  }
  const auto dataset = eval_dataset(env, x.eval.n_per_class, x.eval.seed);
  const SoftmaxPredictor predictor{&ck.params, x.eval.temperature};
  const auto result = mode == "single" ? single_shot_eval(predictor, dataset, x.eval.seed)
                                       : majority_vote_eval(predictor, dataset, x.eval.k, x.eval.seed);

  const auto dir = resolve_out(common.out, x.output_dir);
  const std::string stem = "eval_" + mode;
  if (want_csv(format)) {
    write_text(dir / (stem + ".csv"), csv_of([&](std::ostream& os) { write_metrics_csv(os, result); }));
  }
  if (want_json(format)) {
    auto j = eval_result_json(result);
    j["mode"] = mode;
    j["config"] = to_json(x);
    j["checkpoint"] = checkpoint_path;
    write_text(dir / (stem + ".json"), j.dump(2) + "\n");
  }
  out << mode << " eval on " << dataset.size() << " items: accuracy " << result.metrics.accuracy
      << ", macro F1 " << result.metrics.macro_f1 << "\n";
  return kExitOk;
}

inline int cmd_checkpoint(const std::string& config_path, const std::string& policy, double accuracy,
                          const std::string& out_file, std::ostream& out) {
  const auto x = load_experiment(config_path);
  const auto rewards = load_reward_spec(x.reward_spec);
  const Env env(x.env, rewards);
  const auto shape = env.policy_shape(x.train.max_len, x.train.vocab_size);
  PolicyParams params;
  if (policy == "initial") {
    params = env.initial_params(shape);
  } else if (policy == "oracle") {
    params = env.oracle_params(shape);
  } else if (policy == "noisy-oracle") {
    params = env.noisy_oracle_params(shape, accuracy);
  } else {
    throw ConfigError("--policy must be initial, oracle or noisy-oracle");
  }
  write_text(out_file, checkpoint_json(x, params).dump() + "\n");
  out << "wrote " << policy << " checkpoint to " << out_file << "\n";
  return kExitOk;
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"GRPO / GRPO++ laboratory on softmax sequence policies"};
  app.require_subcommand(1);

  cli_detail::Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", common.out, "Output directory (overrides $GRPOPP_OUT_DIR and the config)");
    sub->add_option("--format", common.format, "csv, json or both")
        ->check(CLI::IsMember({"csv", "json", "both"}));
  };

  std::string config_path;
  std::optional<std::uint64_t> seed;

  auto* train_cmd = app.add_subcommand("train", "Run the training loop from an experiment config");
  train_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
  train_cmd->add_option("--seed", seed, "Override train.seed");
  std::string init_path;
  train_cmd->add_option("--init", init_path, "Start from the parameters of a checkpoint");
  add_common(train_cmd);

  std::size_t n_seeds = 10;
  std::vector<std::uint64_t> seed_list;
  auto* compare_cmd = app.add_subcommand("compare", "Run GRPO and GRPO++ side by side over seeds");
  compare_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
  compare_cmd->add_option("--seeds", n_seeds, "Number of seeds, starting at train.seed");
  compare_cmd->add_option("--seed-list", seed_list, "Explicit seeds")->delimiter(',');
  add_common(compare_cmd);

  std::vector<std::string> only;
  std::size_t n = 1000, audit_cases = 100;
  std::uint64_t verify_seed = 0;
  std::string reward_spec = GRPOPP_DEFAULT_REWARD_SPEC;
  auto* verify_cmd = app.add_subcommand("verify", "Run the failure-mode and theorem checks");
  verify_cmd->add_option("--only", only, "failure-modes, theorem1, theorem2, gradient-audit")->delimiter(',');
  verify_cmd->add_option("--n", n, "Fuzzed groups for the upper-bound audit");
  verify_cmd->add_option("--audit-cases", audit_cases, "Finite-difference audit cases");
  verify_cmd->add_option("--seed", verify_seed, "Seed");
  verify_cmd->add_option("--reward-spec", reward_spec, "Reward spec file");
  add_common(verify_cmd);

  std::string checkpoint_path, mode = "single";
  std::optional<std::size_t> k, n_per_class;
  std::optional<double> temperature;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint (single-shot or majority vote)");
  eval_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  eval_cmd->add_option("--mode", mode, "single or vote");
  eval_cmd->add_option("--k", k, "Votes per item");
  eval_cmd->add_option("--n-per-class", n_per_class, "Items per class");
  eval_cmd->add_option("--seed", seed, "Evaluation seed");
  eval_cmd->add_option("--temperature", temperature, "Sampling temperature");
  add_common(eval_cmd);

  std::string policy = "initial", out_file;
  double accuracy = 0.6;
  auto* ck_cmd = app.add_subcommand("checkpoint", "Write a constructed checkpoint (initial/oracle/noisy-oracle)");
  ck_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
  ck_cmd->add_option("--policy", policy, "initial, oracle or noisy-oracle");
  ck_cmd->add_option("--accuracy", accuracy, "Per-item accuracy of the noisy oracle");
  ck_cmd->add_option("--file", out_file, "Checkpoint path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*train_cmd) return cli_detail::cmd_train(config_path, seed, init_path, common, out);
    if (*compare_cmd) return cli_detail::cmd_compare(config_path, n_seeds, seed_list, common, out);
    if (*verify_cmd) {
      return cli_detail::cmd_verify(only, n, audit_cases, verify_seed, reward_spec, common, out);
    }
    if (*eval_cmd) {
      return cli_detail::cmd_eval(checkpoint_path, mode, k, n_per_class, seed, temperature, common, out);
    }
    if (*ck_cmd) return cli_detail::cmd_checkpoint(config_path, policy, accuracy, out_file, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const LoadError& e) {
    err << "load error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const InvalidInput& e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericAbort& e) {
    err << "numeric abort: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace grpopp
