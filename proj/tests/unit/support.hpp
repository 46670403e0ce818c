#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "grpopp/random.hpp"
#include "grpopp/rewards.hpp"

namespace grpopp::testing {

inline std::filesystem::path source_dir() { return GRPOPP_SOURCE_DIR; }

inline std::filesystem::path bundled_spec_path() { return source_dir() / "data" / "reward_spec.json"; }

inline const RewardSpec& bundled_spec() {
  static const RewardSpec spec = load_reward_spec(bundled_spec_path());
  return spec;
}

// Brute-force softmax probability for one entry, written independently of the library.
inline double oracle_prob(const std::vector<double>& logits, std::size_t k) {
  long double denom = 0.0L;
  for (double z : logits) denom += std::exp(static_cast<long double>(z - logits[k]));
  return static_cast<double>(1.0L / denom);
}

inline std::vector<double> random_logits(Rng& rng, std::size_t n, double scale) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * (2.0 * uniform01(rng) - 1.0);
  return v;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("grpopp_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace grpopp::testing
