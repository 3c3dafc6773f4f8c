#pragma once

#include <iosfwd>
#include <memory>
#include <vector>

#include "bfwi/hessian_ops.hpp"

namespace bfwi {

/// Training models m' and their synthetic data (with reference wavefields).
struct TrainingSet {
  std::shared_ptr<const FemOperators> fem;
  std::vector<Vec> models;
  std::vector<DataSet> data;

  int size() const { return static_cast<int>(models.size()); }
  void validate() const;
};

struct FrequencyGroup {
  std::vector<double> omegas;
  bool optimise_alpha = false;
};

struct FrequencySchedule {
  std::vector<FrequencyGroup> groups;

  /// Throws on empty groups or decreasing maximum frequency.
  void validate() const;
  /// Groups given in Hz; alpha is optimised in the last group only.
  static FrequencySchedule from_hz(const std::vector<std::vector<double>>& groups_hz);
};

/// Affine map from design parameters theta to sensor coordinates,
/// p = p0 + B theta, coordinates flattened as (x_1, z_1, x_2, z_2, ...).
class SensorParametrisation {
 public:
  SensorParametrisation(SensorSet base, Vec p0, Mat B, Vec lo, Vec hi);

  /// One parameter per free coordinate, bounds taken from the sensor set.
  static SensorParametrisation free_coordinates(const SensorSet& sensors);
  /// Sensors at (x, zc - Delta/2), (x, zc), (x, zc + Delta/2) with Delta in [lo, hi].
  static SensorParametrisation symmetric_triplet(double x, double zc, double delta_lo, double delta_hi);

  int size() const { return static_cast<int>(B_.cols()); }
  const Vec& lower() const { return lo_; }
  const Vec& upper() const { return hi_; }
  SensorSet sensors(const Vec& theta) const;
  /// theta reproducing the base sensor set (least squares for general B).
  Vec theta_of(const SensorSet& sensors) const;
  /// Chain rule: dpsi/dtheta = B^T dpsi/dp with dpsi/dp given as N_r x 2.
  Vec pullback(const Mat& grad_p) const;

 private:
  SensorSet base_;
  Vec p0_;
  Mat B_;
  Vec lo_, hi_;
};

enum class RhoPreconditioner { None, P2 };

struct UpperOptions {
  LowerOptions lower;
  PcgOptions pcg{1e-15, 0, true};
  RhoPreconditioner precon = RhoPreconditioner::P2;
  BoundedOptions bounded;
  double alpha_lo = 1e-4;
  double alpha_hi = 1e4;
  ExecPolicy policy = ExecPolicy::Parallel;  // over training models
  std::ostream* log = nullptr;               // JSON lines, one per upper iteration
};

/// Lower-level solve, rho-system and per-model gradient pieces for one m'.
struct ModelResult {
  std::shared_ptr<const LowerProblem> problem;
  LowerSolveReport lower;
  Vec rho;
  PcgResult pcg;
  double error_sq = 0.0;  // ||m' - m^FWI||^2
  Mat grad_p;             // N_r x 2 contribution before averaging
  double grad_alpha = 0.0;
};

struct UpperEvaluation {
  double psi = 0.0;
  std::vector<ModelResult> models;
  Mat grad_p;  // N_r x 2, frozen coordinates set to 0
  double grad_alpha = 0.0;
  SolveCounts solves;
};

/// psi = 1/(2 N) sum ||m' - m^FWI||^2 from stored reconstructions.
double psi_value(const std::vector<Vec>& truth, const std::vector<Vec>& recon);

/// H rho = m' - m^FWI by PCG.
PcgResult solve_rho(const LowerProblem& problem, std::shared_ptr<const LowerEvaluation> cache, const Vec& m_true,
                    const Preconditioner& pre, const PcgOptions& opts);

/// tau = A^{-1}(rho g u) for pair k: one forward solve.
CVec tau_field(const LowerProblem& problem, const LowerEvaluation& cache, const Vec& rho, int k,
               SolvePhase phase = SolvePhase::Tau);

/// Sensor-position gradient contribution of one model (N_r x 2, not averaged).
Mat grad_psi_positions(const LowerProblem& problem, const LowerEvaluation& cache, const Vec& rho,
                       SolvePhase phase = SolvePhase::Tau);

/// (m^FWI)^T R rho for one model (not averaged).
double grad_psi_alpha(const LowerProblem& problem, const Vec& m_fwi, const Vec& rho);

/// Solves every lower-level problem from the given starts and, when asked,
/// the rho-systems and both gradients.
UpperEvaluation evaluate_upper(const TrainingSet& T, const SensorSet& sensors, double alpha,
                               const std::vector<double>& omegas, const std::vector<Vec>& starts,
                               const UpperOptions& opts, bool with_gradient,
                               const Preconditioner* pre = nullptr);

/// Accumulated work of accepted upper evaluations.
struct CostLedger {
  long upper = 0;     // accepted upper evaluations
  long lower = 0;     // accepted lower evaluations, summed over models
  long cg = 0;        // Hessian products, summed over models
  long model_evals = 0;  // upper evaluations x training models
  SolveCounts solves;  // all solves, rejected trials under LineSearch
};

struct BilevelState {
  std::shared_ptr<const SensorParametrisation> param;
  Vec theta;
  double alpha = 10.0;
  std::vector<Vec> recon;  // warm starts, one per training model
  double psi = 0.0;
  Preconditioner P2;
  CostLedger ledger;

  SensorSet sensors() const { return param->sensors(theta); }
};

/// Fresh state; reconstructions start at m0 for every model.
BilevelState make_state(std::shared_ptr<const SensorParametrisation> param, const Vec& theta0, double alpha0,
                        const Vec& m0, int num_models, const Grid& grid, double mu);

struct GroupResult {
  BoundedResult opt;
  StopRule rule = StopRule::None;
  int iterations = 0;
};

/// Bound-constrained L-BFGS over theta (and log alpha if the group asks).
GroupResult optimise_group(BilevelState& state, const TrainingSet& T, const FrequencyGroup& group,
                           const UpperOptions& opts);

struct ContinuationResult {
  std::vector<GroupResult> groups;
  BilevelState state;
};

ContinuationResult frequency_continuation(const TrainingSet& T, const FrequencySchedule& schedule,
                                          BilevelState start, const UpperOptions& opts);

/// N_upper (2 N_lower + 2 N_CG + 1) N_data.
long predicted_solve_count(long n_upper, long n_lower, long n_cg, long n_data);

}  // namespace bfwi
