#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "bfwi/bilevel_upper.hpp"
#include "bfwi/config.hpp"
#include "bfwi/model_io.hpp"

namespace bfwi {

/// A configuration materialised into models, geometry and operators.
struct Experiment {
  ExperimentConfig cfg;
  std::vector<Model> slices;
  std::shared_ptr<const FemOperators> fem;  // slice grid
  std::vector<Point> sources;
  SensorSet sensors0;  // random start inside the borehole, z free
  Vec m0;
  FrequencySchedule schedule;
  std::vector<double> all_omegas;

  int num_slices() const { return static_cast<int>(slices.size()); }
};

Experiment build_experiment(const ExperimentConfig& cfg);

/// Uniformly spaced points along a LineSpec on the given grid.
std::vector<Point> line_points(const Grid& grid, const LineSpec& line);

/// Training set from 0-based slice indices (data at sensors0, all frequencies).
TrainingSet make_training_set(const Experiment& ex, const std::vector<int>& slice_ids);

UpperOptions upper_options(const ExperimentConfig& cfg);

enum class Strategy { None, Alpha, Sensors, Both };
Strategy parse_strategy(const std::string& s);
std::string to_string(Strategy s);

struct LearnedParams {
  Strategy strategy = Strategy::None;
  SensorSet sensors;
  double alpha = 0.0;
  double psi = 0.0;  // final training psi (0 when nothing was optimised)
  std::vector<GroupResult> groups;
  CostLedger ledger;
};

/// Runs bilevel frequency continuation for one strategy on a training set.
LearnedParams learn(const Experiment& ex, const TrainingSet& T, Strategy strategy, std::ostream* log = nullptr);

struct SliceEvaluation {
  Vec recon;
  Vec re_map;
  double mre = 0.0;
  double ssim = 0.0;
  double psi = 0.0;  // 1/2 ||m' - m^FWI||^2
};

/// FWI with lower-level frequency continuation on one slice at fixed (P, alpha);
/// noise (config SNR) is added to the data.
SliceEvaluation evaluate_slice(const Experiment& ex, int slice, const SensorSet& sensors, double alpha,
                               bool noisy = true);

struct MetricsRow {
  int test_slice = 0;  // 1-based held-out slice of the fold
  int slice = 0;       // 1-based evaluated slice
  std::string role;    // "train" or "test"
  std::string strategy;
  double mre0 = 0.0, mre = 0.0;
  double ssim0 = 0.0, ssim = 0.0;
  double psi0 = 0.0, psi_opt = 0.0;
  double improvement = 0.0;
  double alpha = 0.0;

  bool operator==(const MetricsRow&) const = default;
};

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(std::istream& in);

/// One fold: learns on every slice but test_slice (0-based) and evaluates all
/// slices for each configured strategy.
std::vector<MetricsRow> run_fold(const Experiment& ex, int test_slice, const std::string& out_dir,
                                 std::ostream* log = nullptr);

/// Every fold of the configuration; failed legs are reported and skipped.
struct CrossValidationResult {
  std::vector<MetricsRow> rows;
  std::vector<std::string> failures;
};
CrossValidationResult run_cross_validation(const Experiment& ex, const std::string& out_dir,
                                           std::ostream* log = nullptr);

/// Iteration counts of the rho-system at the design (sensors, alpha) for
/// plain CG, P1 built at sensors_near / sensors_far with bench_alpha0, and P2 = Gamma(bench_alpha0, mu).
struct PreconBenchRow {
  double alpha = 0.0;
  int n_cg = 0;
  int n_p1_near = 0;
  int n_p1_far = 0;
  int n_p2 = 0;
};

std::vector<PreconBenchRow> run_precon_benchmark(const Experiment& ex, const SensorSet& sensors,
                                                 const SensorSet& sensors_near, const SensorSet& sensors_far);
void write_precon_csv(std::ostream& out, const std::vector<PreconBenchRow>& rows);

}  // namespace bfwi
