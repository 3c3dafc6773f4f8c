#include "bfwi/helmholtz.hpp"

#include <cmath>

#include <Eigen/SparseLU>

namespace bfwi {

long SolveCounts::total() const {
  long t = 0;
  for (long c : by_phase) t += c;
  return t;
}

SolveCounts SolveCounts::operator-(const SolveCounts& o) const {
  SolveCounts r;
  for (int i = 0; i < kNumPhases; ++i) r.by_phase[i] = by_phase[i] - o.by_phase[i];
  return r;
}

void SolveCounter::transfer(SolvePhase from, SolvePhase to, long n) {
  counts_[static_cast<int>(from)].fetch_sub(n);
  counts_[static_cast<int>(to)].fetch_add(n);
}

SolveCounts SolveCounter::snapshot() const {
  SolveCounts s;
  for (int i = 0; i < kNumPhases; ++i) s.by_phase[i] = counts_[i].load();
  return s;
}

void SolveCounter::reset() {
  for (auto& c : counts_) c.store(0);
}

SolveCounter& solve_counter() {
  static SolveCounter counter;
  return counter;
}

SolveCounts solve_count() { return solve_counter().snapshot(); }

CVec weighted_rhs(const FemOperators& fem, const BoundaryPair& f) {
  return fem.w.d.cast<Complex>().cwiseProduct(f.interior) +
         fem.w.b.cast<Complex>().cwiseProduct(f.boundary);
}

BoundaryPair apply_G(const Grid& grid, const Vec& m, double omega, const BoundaryPair& v) {
  const int n = grid.size();
  BoundaryPair out = BoundaryPair::zeros(n);
  out.interior = (omega * omega) * v.interior;
  const Complex half_iw(0.0, 0.5 * omega);
  for (int k = 0; k < n; ++k)
    if (grid.on_boundary(k)) out.boundary[k] = half_iw * v.boundary[k] / std::sqrt(m[k]);
  return out;
}

CVec g_coefficients(const FemOperators& fem, const Vec& m, double omega) {
  const int n = fem.grid.size();
  CVec g(n);
  for (int k = 0; k < n; ++k)
    g[k] = Complex(omega * omega * fem.w.d[k], 0.5 * omega * fem.w.b[k] / std::sqrt(m[k]));
  return g;
}

CVec g_derivative(const FemOperators& fem, const Vec& m, double omega) {
  const int n = fem.grid.size();
  CVec gp(n);
  for (int k = 0; k < n; ++k)
    gp[k] = Complex(0.0, -0.25 * omega * fem.w.b[k] / (m[k] * std::sqrt(m[k])));
  return gp;
}

CVec boundary_rhs(const FemOperators& fem,
                  const std::function<Complex(double, double, double, double)>& fb) {
  CVec f = CVec::Zero(fem.grid.size());
  for (const auto& e : boundary_edges(fem.grid)) {
    for (int node : {e.a, e.b}) {
      const Point p = fem.grid.node(node);
      f[node] += 0.5 * e.length * fb(p.x, p.z, e.nx, e.nz);
    }
  }
  return f;
}

CSpMat assemble_helmholtz(const FemOperators& fem, const Vec& m, double omega) {
  const int n = fem.grid.size();
  if (m.size() != n) throw InvalidArgument("assemble_helmholtz: model size mismatch");
  std::vector<Eigen::Triplet<Complex>> t;
  t.reserve(fem.S.nonZeros() + n);
  for (int k = 0; k < fem.S.outerSize(); ++k)
    for (SpMat::InnerIterator it(fem.S, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  for (int k = 0; k < n; ++k) {
    if (!(m[k] > 0.0)) throw InvalidArgument("assemble_helmholtz: model must be positive");
    t.emplace_back(k, k, Complex(-omega * omega * fem.w.d[k] * m[k],
                                 -omega * fem.w.b[k] * std::sqrt(m[k])));
  }
  CSpMat A(n, n);
  A.setFromTriplets(t.begin(), t.end());
  A.makeCompressed();
  return A;
}

struct HelmholtzFactorization::Impl {
  Eigen::SparseLU<CSpMat, Eigen::COLAMDOrdering<int>> lu;
};

HelmholtzFactorization::HelmholtzFactorization(const FemOperators& fem, const Vec& m, double omega)
    : fem_(&fem), m_(m), omega_(omega), impl_(std::make_unique<Impl>()),
      served_(std::make_unique<std::atomic<long>>(0)) {
  if (!(omega > 0.0)) throw InvalidArgument("HelmholtzFactorization: omega must be > 0");
  A_ = assemble_helmholtz(fem, m, omega);
  impl_->lu.analyzePattern(A_);
  impl_->lu.factorize(A_);
  if (impl_->lu.info() != Eigen::Success) {
    throw FactorizationError("HelmholtzFactorization: sparse LU failed at omega = " +
                             std::to_string(omega) + ": " + impl_->lu.lastErrorMessage());
  }
}

HelmholtzFactorization::~HelmholtzFactorization() = default;
HelmholtzFactorization::HelmholtzFactorization(HelmholtzFactorization&&) noexcept = default;
HelmholtzFactorization& HelmholtzFactorization::operator=(HelmholtzFactorization&&) noexcept = default;

CVec HelmholtzFactorization::solve_forward(const CVec& rhs, SolvePhase phase) const {
  CVec u = impl_->lu.solve(rhs);
  served_->fetch_add(1, std::memory_order_relaxed);
  solve_counter().add(phase);
  return u;
}

CVec HelmholtzFactorization::solve_adjoint(const CVec& rhs, SolvePhase phase) const {
  CVec v = impl_->lu.solve(CVec(rhs.conjugate())).conjugate();
  served_->fetch_add(1, std::memory_order_relaxed);
  solve_counter().add(phase);
  return v;
}

std::vector<std::pair<int, double>> hat_weights(const Grid& g, const Point& s) {
  if (!g.contains(s)) throw InvalidArgument("hat_weights: point outside the domain");
  const int i = std::min(static_cast<int>(std::floor(s.x / g.hx)), g.n1 - 2);
  const int j = std::min(static_cast<int>(std::floor(s.z / g.hz)), g.n2 - 2);
  const double xi = s.x / g.hx - i;
  const double eta = s.z / g.hz - j;
  std::vector<std::pair<int, double>> w;
  auto push = [&](int k, double v) {
    if (std::abs(v) > 1e-14) w.emplace_back(k, v);
  };
  if (xi >= eta) {
    push(g.index(i, j), 1.0 - xi);
    push(g.index(i + 1, j), xi - eta);
    push(g.index(i + 1, j + 1), eta);
  } else {
    push(g.index(i, j), 1.0 - eta);
    push(g.index(i + 1, j + 1), xi);
    push(g.index(i, j + 1), eta - xi);
  }
  return w;
}

CVec point_source_rhs(const Grid& g, const Point& s) {
  if (!g.strictly_inside(s)) throw InvalidArgument("point_source_rhs: source must lie strictly inside the domain");
  CVec f = CVec::Zero(g.size());
  for (const auto& [k, v] : hat_weights(g, s)) f[k] += v;
  return f;
}

}  // namespace bfwi
