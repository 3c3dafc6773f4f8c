#pragma once

#include <memory>
#include <vector>

#include "bfwi/helmholtz.hpp"
#include "bfwi/optim.hpp"
#include "bfwi/restriction.hpp"

namespace bfwi {

/// Wavefield of the true model kept on the (usually finer) data grid, so
/// readings and their position derivatives can be taken at any sensor set.
struct ReferenceField {
  Grid grid;
  CVec u;
};

/// Observed readings d(P, omega, s) for every (source, frequency) pair.
///
/// Pairs are ordered with the frequency outermost: pair(w, s) = w * Ns + s.
struct DataSet {
  std::vector<Point> sources;
  std::vector<double> omegas;
  SensorSet sensors;
  std::vector<CVec> readings;
  /// Optional, aligned with readings. Empty after noise has been added.
  std::vector<std::shared_ptr<const ReferenceField>> reference;

  int num_sources() const { return static_cast<int>(sources.size()); }
  int num_omegas() const { return static_cast<int>(omegas.size()); }
  int num_pairs() const { return num_sources() * num_omegas(); }
  int pair(int w, int s) const { return w * num_sources() + s; }
  bool has_reference() const { return !reference.empty(); }

  /// Throws unless readings are index-complete with N_r entries each.
  void validate() const;

  /// Same data re-sampled at other sensors (requires reference fields).
  DataSet resampled(const SensorSet& sensors) const;
  /// d/dp_{j,axis} of the readings of pair k at the current sensors.
  CVec reading_derivative(int k, Axis axis) const;
  /// Restriction to a subset of the frequencies (matched exactly).
  DataSet with_omegas(const std::vector<double>& omegas) const;
};

struct LowerOptions {
  double mu = 1e-6;
  double grad_tol = 1e-10;
  int max_iter = 1000;
  int memory = 10;
  WolfeOptions wolfe;
  ExecPolicy policy = ExecPolicy::Parallel;
};

/// Everything computed at one model: factorisations per frequency, forward
/// and adjoint fields per pair, objective and gradient.
struct LowerEvaluation {
  Vec m;
  double misfit = 0.0;  // 1/2 sum ||eps||^2
  double reg = 0.0;     // 1/2 m^T Gamma m
  double f = 0.0;
  Vec grad;
  std::vector<FactorizationPtr> factorizations;  // per omega
  std::vector<CVec> u;                           // per pair
  std::vector<CVec> lambda;                      // per pair, empty without gradient
  std::vector<CVec> residual;                    // eps per pair
};

/// phi(m) = 1/2 sum_{s,w} ||d - R u||^2 + 1/2 m^T Gamma(alpha, mu) m at fixed sensors.
class LowerProblem {
 public:
  LowerProblem(std::shared_ptr<const FemOperators> fem, DataSet data, double alpha, LowerOptions opts = {});

  const FemOperators& fem() const { return *fem_; }
  std::shared_ptr<const FemOperators> fem_ptr() const { return fem_; }
  const Grid& grid() const { return fem_->grid; }
  const DataSet& data() const { return data_; }
  const RestrictionStencil& stencil() const { return stencil_; }
  const Regulariser& regulariser() const { return reg_; }
  const LowerOptions& options() const { return opts_; }
  double alpha() const { return reg_.alpha(); }
  int size() const { return grid().size(); }

  /// Objective only: one solve per pair. With gradient: two solves per pair.
  LowerEvaluation evaluate(const Vec& m, bool with_gradient, SolvePhase phase = SolvePhase::Lower) const;
  double objective(const Vec& m, SolvePhase phase = SolvePhase::Lower) const;
  Vec gradient(const Vec& m, SolvePhase phase = SolvePhase::Lower) const;

 private:
  std::shared_ptr<const FemOperators> fem_;
  DataSet data_;
  LowerOptions opts_;
  Regulariser reg_;
  RestrictionStencil stencil_;
  std::vector<CVec> sources_rhs_;
};

struct LowerSolveReport {
  Vec m;
  double f = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  int evaluations = 0;           // every evaluation, line-search trials included
  int accepted_evaluations = 0;  // start point plus accepted iterates
  OptimStatus status = OptimStatus::MaxIterations;
  std::vector<double> f_history;
  std::shared_ptr<const LowerEvaluation> cache;  // at m
  SolveCounts solves;

  bool converged() const { return status == OptimStatus::Converged; }
};

/// L-BFGS with strong Wolfe line search. Solves spent on rejected trial points
/// are booked under SolvePhase::LineSearch; steps are capped to keep m > 0.
LowerSolveReport lbfgs_minimize(const LowerProblem& problem, const Vec& start);

/// Largest step t with x + t p > 0, scaled by 0.99 (infinite if p >= 0).
double positivity_step_max(const Vec& x, const Vec& p);

}  // namespace bfwi
