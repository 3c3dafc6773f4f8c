#pragma once

#include <functional>
#include <memory>
#include <string>

#include "bfwi/fwi_lower.hpp"

namespace bfwi {

/// Matrix-free Hessian of phi at a cached lower-level evaluation.
///
/// H v = H1 v + H2 v + Gamma v. Each product costs two fresh solves per
/// (source, frequency) pair: v = A^{-1}(g v u) and the combined adjoint solve z.
class HessianOperator {
 public:
  enum class Mode { Full, GaussNewton };

  HessianOperator(const LowerProblem& problem, std::shared_ptr<const LowerEvaluation> cache,
                  Mode mode = Mode::Full);

  int size() const { return problem_->size(); }
  const LowerProblem& problem() const { return *problem_; }
  const LowerEvaluation& cache() const { return *cache_; }
  Mode mode() const { return mode_; }

  Vec apply(const Vec& v, SolvePhase phase = SolvePhase::CG) const;

 private:
  const LowerProblem* problem_;
  std::shared_ptr<const LowerEvaluation> cache_;
  Mode mode_;
  std::vector<CVec> g_, gp_;  // per omega
};

inline Vec hvp(const HessianOperator& op, const Vec& v, SolvePhase phase = SolvePhase::CG) {
  return op.apply(v, phase);
}

/// Dense Hessian by the direct-sensitivity route: M forward solves per pair
/// for du/dm_k, then H1 from the sensitivities at the sensors and H2 from the
/// adjoint fields. Independent of HessianOperator; small grids only.
Mat dense_hessian(const LowerProblem& problem, const LowerEvaluation& cache, SolvePhase phase = SolvePhase::Other);

/// Symmetric positive definite preconditioner applied as P^{-1} r.
class Preconditioner {
 public:
  enum class Kind { None, P1, P2, Dense };

  Preconditioner() = default;

  static Preconditioner identity();
  /// Cholesky of a dense SPD matrix, with diagonal shifts 1e-10 trace/M
  /// doubling until the factorisation succeeds.
  static Preconditioner dense(const Mat& H, Kind kind = Kind::Dense);
  /// Sparse Cholesky of Gamma(alpha0, mu).
  static Preconditioner sparse(const SpMat& A, Kind kind = Kind::P2);

  Kind kind() const { return kind_; }
  double shift() const { return shift_; }
  Vec apply(const Vec& r) const;

 private:
  struct Impl;
  Kind kind_ = Kind::None;
  double shift_ = 0.0;
  std::shared_ptr<const Impl> impl_;
};

std::string to_string(Preconditioner::Kind k);

/// P1: the full Hessian at the given lower-level solution, assembled densely.
Preconditioner build_P1(const LowerProblem& problem, const LowerEvaluation& cache);
/// P2 = Gamma(alpha0, mu).
Preconditioner build_P2(const Grid& grid, double alpha0, double mu);

struct PcgOptions {
  double tol = 1e-15;     // on ||r_n|| / ||r_0||
  int max_iter = 0;       // 0: 10 M
  bool ones_start = false;  // x0 = (1, ..., 1) instead of 0
};

struct PcgResult {
  Vec x;
  int iterations = 0;
  int products = 0;  // operator applications, initial residual included
  bool converged = false;
  bool breakdown = false;  // p^T H p <= 0 met
  bool capped = false;
  std::vector<double> residuals;  // relative residual norms, r_0 first
};

using LinearOperator = std::function<Vec(const Vec&)>;

PcgResult pcg_solve(const LinearOperator& A, const Vec& rhs, const Preconditioner& pre, const PcgOptions& opts = {});

inline PcgResult pcg_solve(const HessianOperator& H, const Vec& rhs, const Preconditioner& pre,
                           const PcgOptions& opts = {}) {
  return pcg_solve([&H](const Vec& v) { return H.apply(v); }, rhs, pre, opts);
}

}  // namespace bfwi
