#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace bfwi {

/// A vertical line of points at x = x_frac * width, depths spread over
/// [z_lo_frac, z_hi_frac] * depth.
struct LineSpec {
  double x_frac = 0.0;
  double z_lo_frac = 0.0;
  double z_hi_frac = 1.0;
  int count = 0;
};

struct ExperimentConfig {
  // model
  std::string model_file;  // empty: built-in layered model
  int n1 = 220;
  int n2 = 61;
  double width_x = 11.0;
  double width_z = 3.0;
  int slices = 5;
  double smooth_cells = 3.0;
  double c_top = 1.5;      // background model m0
  double c_bottom = 3.5;

  // acquisition
  LineSpec sources{0.05, 0.15, 0.85, 3};
  LineSpec sensors{0.95, 0.05, 0.95, 3};  // borehole segment; sensors start at random depths in it
  int refine = 2;

  // frequencies (Hz), alpha optimised in the last group
  std::vector<std::vector<double>> groups_hz{{0.5}, {0.5, 1.5}};

  // m is in s^2/km^2 and the differences are unit-interval scaled, so useful
  // weights are small; 10 already flattens the reconstruction to a constant
  double alpha0 = 1e-5;
  double mu = 1e-6;
  double lower_grad_tol = 1e-10;
  int lower_max_iter = 1000;
  int upper_max_iter = 50;
  double upper_pg_tol = 1e-10;
  double pcg_tol = 1e-15;
  double alpha_lo = 1e-12;
  double alpha_hi = 1e4;
  double noise_snr_db = 40.0;

  // cross validation: 1-based held-out slices; empty means all
  std::vector<int> test_slices;
  std::vector<std::string> strategies{"none", "alpha", "sensors", "both"};

  // preconditioner benchmark
  std::vector<double> bench_alphas{0.5, 1, 5, 10, 20, 50, 100};
  double bench_alpha0 = 10.0;  // P1 and P2 are built at this weight
  double bench_freq_hz = 0.5;
  double bench_tol = 1e-6;
  int bench_slice = 1;

  std::uint64_t seed = 1;
  int threads = 0;  // 0: OpenMP default
  std::string out = "out";

  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig config_from_json(const nlohmann::json& j);

/// Applies "a.b.c=value"; value is parsed as JSON, falling back to a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// Defaults, then the file (if not empty), then the overrides in order.
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides);

}  // namespace bfwi
