#pragma once

// CSV / JSON artifacts and checkpoints. Column orders are documented in
// docs/schemas.md; bump kCsvSchemaVersion when they change.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grpopp/config.hpp"
#include "grpopp/errors.hpp"
#include "grpopp/eval.hpp"
#include "grpopp/policy.hpp"
#include "grpopp/trainer.hpp"

namespace grpopp {

inline constexpr int kCsvSchemaVersion = 1;
inline constexpr int kCheckpointVersion = 1;

// Shortest form that round-trips; locale independent.
inline std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_train_csv(std::ostream& os, const TrainReport& r) {
  os << "step,iteration,mean_reward,frac_no_confident,standard_groups,penalty_groups,"
        "grad_norm,objective,clipped_fraction\n";
  for (const auto& row : r.rows) {
    os << row.step << ',' << row.iteration << ',' << fmt_real(row.mean_reward) << ','
       << fmt_real(row.frac_no_confident) << ',' << row.standard_groups << ',' << row.penalty_groups
       << ',' << fmt_real(row.grad_norm) << ',' << fmt_real(row.objective) << ','
       << fmt_real(row.clipped_fraction) << '\n';
  }
}

inline nlohmann::json train_report_json(const TrainReport& r, const nlohmann::json& config_echo) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"step", row.step},
                    {"iteration", row.iteration},
                    {"mean_reward", row.mean_reward},
                    {"frac_no_confident", row.frac_no_confident},
                    {"standard_groups", row.standard_groups},
                    {"penalty_groups", row.penalty_groups},
                    {"grad_norm", row.grad_norm},
                    {"objective", row.objective},
                    {"clipped_fraction", row.clipped_fraction},
                    {"wall_seconds", row.wall_seconds}});
  }
  return {{"csv_schema_version", kCsvSchemaVersion}, {"config", config_echo}, {"rows", rows}};
}

struct CompareSummary {
  std::size_t seeds = 0;
  std::size_t grpopp_at_least_grpo = 0;
  std::vector<double> grpo_final;
  std::vector<double> grpopp_final;

  double fraction() const { return seeds ? static_cast<double>(grpopp_at_least_grpo) / seeds : 0.0; }
};

// pairs[k].a is GRPO and pairs[k].b is GRPO++.
inline CompareSummary summarize_compare(const std::vector<RunPair>& pairs, double window = 0.1) {
  CompareSummary s;
  for (const auto& p : pairs) {
    const double a = final_window_mean(p.a, window), b = final_window_mean(p.b, window);
    s.grpo_final.push_back(a);
    s.grpopp_final.push_back(b);
    ++s.seeds;
    if (b >= a) ++s.grpopp_at_least_grpo;
  }
  return s;
}

inline void write_compare_csv(std::ostream& os, const std::vector<RunPair>& pairs) {
  os << "step,grpo_reward,grpopp_reward,seed\n";
  for (const auto& p : pairs) {
    for (std::size_t k = 0; k < p.a.rows.size(); ++k) {
      os << p.a.rows[k].step << ',' << fmt_real(p.a.rows[k].mean_reward) << ','
         << fmt_real(p.b.rows[k].mean_reward) << ',' << p.seed << '\n';
    }
  }
}

inline void write_metrics_csv(std::ostream& os, const EvalResult& r) {
  os << "class,precision,recall,f1,support\n";
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    std::size_t support = 0;
    for (auto v : r.confusion.counts[c]) support += v;
    os << short_name(label_at(c)) << ',' << fmt_real(r.metrics.precision[c]) << ','
       << fmt_real(r.metrics.recall[c]) << ',' << fmt_real(r.metrics.f1[c]) << ',' << support << '\n';
  }
  os << "macro," << fmt_real(r.metrics.macro_precision) << ',' << fmt_real(r.metrics.macro_recall)
     << ',' << fmt_real(r.metrics.macro_f1) << ',' << r.confusion.total() << '\n';
}

inline nlohmann::json eval_result_json(const EvalResult& r) {
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    classes.push_back({{"class", short_name(label_at(c))},
                       {"precision", r.metrics.precision[c]},
                       {"recall", r.metrics.recall[c]},
                       {"f1", r.metrics.f1[c]}});
  }
  nlohmann::json cm = nlohmann::json::array();
  for (const auto& row : r.confusion.counts) cm.push_back(row);
  return {{"k", r.k},
          {"tie_break", "canonical class order: AK, BCC, Dermatitis, Melanoma, Psoriasis, Rosacea, SK"},
          {"classes", classes},
          {"macro", {{"precision", r.metrics.macro_precision},
                     {"recall", r.metrics.macro_recall},
                     {"f1", r.metrics.macro_f1}}},
          {"accuracy", r.metrics.accuracy},
          {"invalid", r.confusion.invalid()},
          {"confusion", cm}};
}

// Checkpoint: versioned header, the experiment config, and the parameter vector.
inline nlohmann::json checkpoint_json(const ExperimentConfig& config, const PolicyParams& params) {
  const auto& s = params.shape();
  return {{"format", "grpopp-checkpoint"},
          {"version", kCheckpointVersion},
          {"config", to_json(config)},
          {"shape", {{"num_contexts", s.num_contexts}, {"max_len", s.max_len}, {"vocab_size", s.vocab_size}}},
          {"params", std::vector<double>(params.values().begin(), params.values().end())}};
}

struct Checkpoint {
  ExperimentConfig config;
  PolicyParams params;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open checkpoint '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
    if (j.value("format", "") != "grpopp-checkpoint") throw LoadError("not a grpopp checkpoint");
    if (j.value("version", 0) != kCheckpointVersion) throw LoadError("unsupported checkpoint version");
    Checkpoint ck;
    ck.config = experiment_from_json(j.at("config"), path.parent_path(), false);
    const auto& sh = j.at("shape");
    const PolicyShape shape{sh.at("num_contexts").get<std::size_t>(), sh.at("max_len").get<std::size_t>(),
                            sh.at("vocab_size").get<std::size_t>()};
    ck.params = PolicyParams(shape, j.at("params").get<std::vector<double>>());
    return ck;
  } catch (const LoadError&) {
    throw;
  } catch (const std::exception& e) {
    throw LoadError("checkpoint '" + path.string() + "': " + e.what());
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace grpopp
