#include "doctest.h"
#include "oracles.hpp"

using namespace bfwi;

namespace {

CVec sample(const Grid& g, const std::function<double(double, double)>& q) {
  CVec u(g.size());
  for (int k = 0; k < g.size(); ++k) u[k] = q(g.node(k).x, g.node(k).z);
  return u;
}

}  // namespace

TEST_CASE("stencils follow the sensor cell") {
  const Grid g = build_grid(8, 8, 7.0, 7.0);  // unit spacing
  const RestrictionStencil a(g, std::vector<Point>{{1.5, 3.5}});
  CHECK(a.entry(0).i0 == 0);  // [x1, x2] -> {x0..x3}
  CHECK(a.entry(0).nx == 4);
  const RestrictionStencil b(g, std::vector<Point>{{2.5, 3.5}});
  CHECK(b.entry(0).i0 == 1);  // [x2, x3] -> {x1..x4}
  const RestrictionStencil c(g, std::vector<Point>{{0.2, 6.9}});
  CHECK(c.entry(0).i0 == 0);  // clamped at the edges
  CHECK(c.entry(0).j0 == 4);
  CHECK_THROWS_AS(RestrictionStencil(g, std::vector<Point>{{7.5, 1.0}}), InvalidArgument);
}

TEST_CASE("sensor at a node reads the nodal value") {
  const Grid g = build_grid(6, 5, 1.0, 1.0);
  std::mt19937_64 rng(5);
  const Vec r = oracle::random_model(g, rng, -1, 1);
  const CVec u = r.cast<Complex>();
  const RestrictionStencil st(g, std::vector<Point>{{g.x(3), g.z(2)}});
  CHECK(std::abs(st.restrict(u)[0] - u[g.index(3, 2)]) < 1e-14);
  // adjoint of a unit reading is the unit vector at that node
  const CVec e = st.adjoint(CVec::Ones(1));
  CHECK(std::abs(e[g.index(3, 2)] - 1.0) < 1e-14);
  CHECK(std::abs(e.sum() - 1.0) < 1e-14);
  CHECK(st.adjoint(CVec::Zero(1)).norm() == 0.0);
}

TEST_CASE("bicubic reproduction and derivatives") {
  const Grid g = build_grid(9, 7, 2.0, 1.5);
  const auto q = [](double x, double z) { return x * x * x - 2 * x * z * z + 1 + z * z * z * x * x; };
  const auto qx = [](double x, double z) { return 3 * x * x - 2 * z * z + 2 * z * z * z * x; };
  const auto qz = [](double x, double z) { return -4 * x * z + 3 * z * z * x * x; };
  const CVec u = sample(g, q);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> X(0.0, 2.0), Z(0.0, 1.5);
  std::vector<Point> pts;
  for (int i = 0; i < 100; ++i) pts.push_back({X(rng), Z(rng)});
  const RestrictionStencil st(g, pts);
  const CVec r = st.restrict(u);
  const CVec dx = st.derivative(u, Axis::X);
  const CVec dz = st.derivative(u, Axis::Z);
  for (int j = 0; j < 100; ++j) {
    CHECK(std::abs(r[j] - q(pts[j].x, pts[j].z)) < 1e-12);
    CHECK(std::abs(dx[j] - qx(pts[j].x, pts[j].z)) < 1e-10);
    CHECK(std::abs(dz[j] - qz(pts[j].x, pts[j].z)) < 1e-10);
  }
  // constants: weights sum to one, derivative weights to zero
  const CVec one = CVec::Ones(g.size());
  CHECK((st.restrict(one) - CVec::Ones(100)).cwiseAbs().maxCoeff() < 1e-13);
  CHECK(st.derivative(one, Axis::X).cwiseAbs().maxCoeff() < 1e-11);
}

TEST_CASE("adjoint is the transpose") {
  const Grid g = build_grid(10, 8, 1.0, 1.0);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> N;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Point> pts;
    for (int j = 0; j < 4; ++j) pts.push_back({U(rng), U(rng)});
    const RestrictionStencil st(g, pts);
    CVec u(g.size()), z(4);
    for (auto& v : u) v = {N(rng), N(rng)};
    for (auto& v : z) v = {N(rng), N(rng)};
    const Complex lhs = (st.restrict(u).transpose() * z)(0);
    const Complex rhs = (u.transpose() * st.adjoint(z))(0);
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::abs(lhs));
  }
}

TEST_CASE("position derivative matches finite differences") {
  const Grid g = build_grid(12, 12, 1.0, 1.0);
  const CVec u = sample(g, [](double x, double z) { return std::sin(3 * x) * std::cos(2 * z) + x * z; });
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> U(0.1, 0.9);
  for (int trial = 0; trial < 10; ++trial) {
    const Point p{U(rng), U(rng)};
    const RestrictionStencil st(g, std::vector<Point>{p});
    const double h = 1e-5 * g.hx;
    for (Axis ax : {Axis::X, Axis::Z}) {
      Point pp = p, pm = p;
      (ax == Axis::X ? pp.x : pp.z) += h;
      (ax == Axis::X ? pm.x : pm.z) -= h;
      const Complex fd = (RestrictionStencil(g, std::vector<Point>{pp}).restrict(u)[0] -
                          RestrictionStencil(g, std::vector<Point>{pm}).restrict(u)[0]) /
                         (2 * h);
      const Complex an = st.derivative(u, 0, ax);
      CHECK(std::abs(fd - an) <= 1e-5 * std::abs(an));
    }
  }
}

TEST_CASE("value is continuous across stencil switches") {
  const Grid g = build_grid(10, 10, 1.0, 1.0);
  const CVec u = sample(g, [](double x, double z) { return std::exp(x) * std::sin(4 * z); });
  for (int i = 1; i < 9; ++i) {
    const double x = g.x(i);
    const double eps = 1e-12;
    const Complex left = RestrictionStencil(g, std::vector<Point>{{x - eps, 0.43}}).restrict(u)[0];
    const Complex right = RestrictionStencil(g, std::vector<Point>{{x + eps, 0.43}}).restrict(u)[0];
    CHECK(std::abs(left - right) < 1e-10);
  }
}
