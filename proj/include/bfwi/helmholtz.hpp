#pragma once

#include <array>
#include <atomic>
#include <functional>
#include <memory>

#include "bfwi/grid_fem.hpp"

namespace bfwi {

/// Attribution of Helmholtz solves for the cost model.
enum class SolvePhase : int {
  Lower = 0,   // lower-level objective/gradient at accepted iterates
  LineSearch,  // trial points rejected by a line search
  CG,          // Hessian-vector products
  Tau,         // tau fields of the sensor gradient
  Data,        // synthetic data generation
  Other,       // preconditioner assembly, oracles, CLI one-offs
  Count_
};

constexpr int kNumPhases = static_cast<int>(SolvePhase::Count_);

struct SolveCounts {
  std::array<long, kNumPhases> by_phase{};
  long total() const;
  long operator[](SolvePhase p) const { return by_phase[static_cast<int>(p)]; }
  SolveCounts operator-(const SolveCounts& o) const;
};

/// Monotone process-wide count of Helmholtz solves; safe for concurrent use.
class SolveCounter {
 public:
  void add(SolvePhase p, long n = 1) {
    counts_[static_cast<int>(p)].fetch_add(n, std::memory_order_relaxed);
  }
  /// Re-attributes n already-counted solves (e.g. rejected line-search trials).
  void transfer(SolvePhase from, SolvePhase to, long n);
  long get(SolvePhase p) const { return counts_[static_cast<int>(p)].load(); }
  long total() const { return snapshot().total(); }
  SolveCounts snapshot() const;
  void reset();

 private:
  std::array<std::atomic<long>, kNumPhases> counts_{};
};

SolveCounter& solve_counter();

/// Shorthand for solve_counter().snapshot().
SolveCounts solve_count();

/// Two-component vector (values on all nodes, values on boundary nodes).
struct BoundaryPair {
  CVec interior;
  CVec boundary;  // zero at interior nodes

  static BoundaryPair zeros(int n) { return {CVec::Zero(n), CVec::Zero(n)}; }
};

/// Nodal right-hand side f_k = d_k f(x_k) + b_k f_b(x_k).
CVec weighted_rhs(const FemOperators& fem, const BoundaryPair& f);

/// G_{m,omega}(v, v_b) = (omega^2 v, (i omega / 2) v_b / sqrt(m) on the boundary).
BoundaryPair apply_G(const Grid& grid, const Vec& m, double omega, const BoundaryPair& v);

/// Nodal coefficients of the weighted G operator: g_k = omega^2 d_k + i omega b_k / (2 sqrt(m_k)).
/// This is -dA/dm_k restricted to its single nonzero diagonal entry.
CVec g_coefficients(const FemOperators& fem, const Vec& m, double omega);

/// dg_k/dm_k = -i omega b_k / (4 m_k^{3/2}).
CVec g_derivative(const FemOperators& fem, const Vec& m, double omega);

/// Weighted right-hand side for impedance data f_b evaluated per boundary edge
/// (so corner nodes see each edge's own normal).
CVec boundary_rhs(const FemOperators& fem,
                  const std::function<Complex(double x, double z, double nx, double nz)>& fb);

/// A(m, omega) = S - omega^2 diag(d m) - i omega diag(b sqrt(m)).
CSpMat assemble_helmholtz(const FemOperators& fem, const Vec& m, double omega);

/// Sparse LU of A(m, omega), reused for every source and for adjoint solves.
/// Immutable after construction; concurrent solves are allowed.
class HelmholtzFactorization {
 public:
  HelmholtzFactorization(const FemOperators& fem, const Vec& m, double omega);
  ~HelmholtzFactorization();
  HelmholtzFactorization(HelmholtzFactorization&&) noexcept;
  HelmholtzFactorization& operator=(HelmholtzFactorization&&) noexcept;

  /// u = A^{-1} rhs.
  CVec solve_forward(const CVec& rhs, SolvePhase phase) const;
  /// v = (A^*)^{-1} rhs, computed as conj(A^{-1} conj(rhs)) since A^T = A.
  CVec solve_adjoint(const CVec& rhs, SolvePhase phase) const;

  double omega() const { return omega_; }
  const Vec& model() const { return m_; }
  const CSpMat& matrix() const { return A_; }
  const FemOperators& fem() const { return *fem_; }
  long solves_served() const { return served_->load(); }

 private:
  struct Impl;
  const FemOperators* fem_;
  Vec m_;
  double omega_;
  CSpMat A_;
  std::unique_ptr<Impl> impl_;
  std::unique_ptr<std::atomic<long>> served_;
};

using FactorizationPtr = std::shared_ptr<const HelmholtzFactorization>;

inline CVec solve_forward(const HelmholtzFactorization& f, const BoundaryPair& rhs,
                          SolvePhase phase = SolvePhase::Other) {
  return f.solve_forward(weighted_rhs(f.fem(), rhs), phase);
}

inline CVec solve_adjoint(const HelmholtzFactorization& f, const BoundaryPair& rhs,
                          SolvePhase phase = SolvePhase::Other) {
  return f.solve_adjoint(weighted_rhs(f.fem(), rhs), phase);
}

/// Nodal right-hand side of a point source at s: e_k at a node, hat-function
/// values of the containing triangle otherwise.
CVec point_source_rhs(const Grid& grid, const Point& s);

/// Sparse form of point_source_rhs as (node, weight) pairs.
std::vector<std::pair<int, double>> hat_weights(const Grid& grid, const Point& s);

}  // namespace bfwi
