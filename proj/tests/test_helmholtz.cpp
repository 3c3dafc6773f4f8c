#include "doctest.h"
#include "oracles.hpp"

using namespace bfwi;

namespace {

// L2 error of the FEM solution to u = exp(i w x) with m = 1 on the unit square.
double plane_wave_error(int n, double w) {
  const Grid g = build_grid(n, n, 1.0, 1.0);
  const FemOperators fem(g);
  const Vec m = Vec::Ones(g.size());
  const HelmholtzFactorization fact(fem, m, w);
  // -(Lap + w^2) u = 0 inside; du/dn - i w u = i w (n_x - 1) u on the boundary
  const CVec rhs = boundary_rhs(fem, [w](double x, double, double nx, double) {
    return Complex(0.0, w) * (nx - 1.0) * std::exp(Complex(0.0, w * x));
  });
  const CVec u = fact.solve_forward(rhs, SolvePhase::Other);
  double err = 0.0;
  for (int k = 0; k < g.size(); ++k)
    err += fem.w.d[k] * std::norm(u[k] - std::exp(Complex(0.0, w * g.node(k).x)));
  return std::sqrt(err);
}

}  // namespace

TEST_CASE("assembled A matches the dense oracle") {
  const Grid g = build_grid(5, 6, 1.2, 0.9);
  const FemOperators fem(g);
  std::mt19937_64 rng(1);
  const Vec m = oracle::random_model(g, rng);
  const double w = 3.7;
  const Eigen::MatrixXcd A = Eigen::MatrixXcd(assemble_helmholtz(fem, m, w));
  CHECK((A - oracle::dense_A(g, m, w)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((A - A.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("A rejects non-positive models and frequencies") {
  const Grid g = build_grid(4, 4, 1.0, 1.0);
  const FemOperators fem(g);
  Vec m = Vec::Ones(g.size());
  CHECK_THROWS_AS(HelmholtzFactorization(fem, m, 0.0), InvalidArgument);
  m[3] = -1.0;
  CHECK_THROWS_AS(assemble_helmholtz(fem, m, 1.0), InvalidArgument);
}

TEST_CASE("forward and adjoint solves") {
  const Grid g = build_grid(7, 6, 1.0, 1.0);
  const FemOperators fem(g);
  std::mt19937_64 rng(2);
  const Vec m = oracle::random_model(g, rng);
  const double w = 2 * 3.14159265358979 * 1.3;
  const HelmholtzFactorization fact(fem, m, w);
  const Eigen::MatrixXcd A = oracle::dense_A(g, m, w);
  std::normal_distribution<double> N;
  CVec f(g.size()), h(g.size());
  for (int k = 0; k < g.size(); ++k) {
    f[k] = {N(rng), N(rng)};
    h[k] = {N(rng), N(rng)};
  }
  const CVec u = fact.solve_forward(f, SolvePhase::Other);
  CHECK((A * u - f).norm() / f.norm() < 1e-12);
  const CVec v = fact.solve_adjoint(h, SolvePhase::Other);
  CHECK((A.adjoint() * v - h).norm() / h.norm() < 1e-12);
  // <A^{-1} f, h> = <f, A^{-*} h>
  const Complex lhs = h.dot(u), rhs = v.dot(f);
  CHECK(std::abs(lhs - rhs) / std::abs(lhs) < 1e-12);
}

TEST_CASE("solve counter attributes phases") {
  const Grid g = build_grid(4, 4, 1.0, 1.0);
  const FemOperators fem(g);
  const HelmholtzFactorization fact(fem, Vec::Ones(g.size()), 1.0);
  const SolveCounts before = solve_count();
  fact.solve_forward(CVec::Ones(g.size()), SolvePhase::CG);
  fact.solve_adjoint(CVec::Ones(g.size()), SolvePhase::Tau);
  const SolveCounts d = solve_count() - before;
  CHECK(d[SolvePhase::CG] == 1);
  CHECK(d[SolvePhase::Tau] == 1);
  CHECK(d.total() == 2);
  CHECK(fact.solves_served() == 2);
}

TEST_CASE("point source weights") {
  const Grid g = build_grid(5, 5, 1.0, 1.0);
  // at a node: unit vector
  const CVec e = point_source_rhs(g, {0.5, 0.25});
  CHECK(std::abs(e[g.index(2, 1)] - 1.0) < 1e-14);
  CHECK(std::abs(e.sum() - 1.0) < 1e-14);
  // inside a triangle: hat values, reproducing linear functions
  const Point s{0.33, 0.61};
  const CVec f = point_source_rhs(g, s);
  CHECK((f - oracle::dense_source(g, s)).cwiseAbs().maxCoeff() < 1e-14);
  Complex xs = 0.0;
  for (int k = 0; k < g.size(); ++k) xs += f[k] * g.node(k).x;
  CHECK(std::abs(xs - s.x) < 1e-14);
  CHECK_THROWS_AS(point_source_rhs(g, {0.0, 0.5}), InvalidArgument);
}

TEST_CASE("g coefficients are -dA/dm") {
  const Grid g = build_grid(4, 5, 1.0, 1.0);
  const FemOperators fem(g);
  std::mt19937_64 rng(4);
  const Vec m = oracle::random_model(g, rng);
  const double w = 5.0;
  const CVec gc = g_coefficients(fem, m, w);
  const CVec gp = g_derivative(fem, m, w);
  for (int k = 0; k < g.size(); ++k) {
    CHECK(std::abs(gc[k] + oracle::dA_dm(g, m, w, k)) < 1e-7 * std::abs(gc[k]));
    const double h = 1e-6 * m[k];
    Vec mp = m, mm = m;
    mp[k] += h;
    mm[k] -= h;
    const Complex fd = (g_coefficients(fem, mp, w)[k] - g_coefficients(fem, mm, w)[k]) / (2 * h);
    CHECK(std::abs(fd - gp[k]) <= 1e-6 * std::max(1.0, std::abs(gp[k])));
  }
}

TEST_CASE("plane wave converges at second order") {
  const double w = 2 * 3.14159265358979323846;
  double prev = plane_wave_error(9, w);
  for (int n : {17, 33, 65}) {
    const double e = plane_wave_error(n, w);
    const double ratio = prev / e;
    CHECK(ratio > 3.2);
    CHECK(ratio < 4.8);
    prev = e;
  }
}
