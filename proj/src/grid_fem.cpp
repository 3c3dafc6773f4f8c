#include "bfwi/grid_fem.hpp"

#include <cmath>
#include <string>

namespace bfwi {

NodeKind Grid::kind(int k) const {
  const int i = ix(k);
  const int j = iz(k);
  const bool xb = (i == 0 || i == n1 - 1);
  const bool zb = (j == 0 || j == n2 - 1);
  if (xb && zb) return NodeKind::Corner;
  if (xb || zb) return NodeKind::Edge;
  return NodeKind::Interior;
}

Grid build_grid(int n1, int n2, double width_x, double width_z) {
  if (n1 < 2 || n2 < 2) {
    throw InvalidArgument("build_grid: need at least 2 nodes per direction, got " +
                          std::to_string(n1) + " x " + std::to_string(n2));
  }
  if (!(width_x > 0.0) || !(width_z > 0.0)) {
    throw InvalidArgument("build_grid: widths must be positive");
  }
  Grid g;
  g.n1 = n1;
  g.n2 = n2;
  g.width_x = width_x;
  g.width_z = width_z;
  g.hx = width_x / (n1 - 1);
  g.hz = width_z / (n2 - 1);
  return g;
}

std::vector<BoundaryEdge> boundary_edges(const Grid& g) {
  std::vector<BoundaryEdge> edges;
  edges.reserve(2 * (g.n1 - 1) + 2 * (g.n2 - 1));
  for (int i = 0; i + 1 < g.n1; ++i) {
    edges.push_back({g.index(i, 0), g.index(i + 1, 0), g.hx, 0.0, -1.0});
    edges.push_back({g.index(i, g.n2 - 1), g.index(i + 1, g.n2 - 1), g.hx, 0.0, 1.0});
  }
  for (int j = 0; j + 1 < g.n2; ++j) {
    edges.push_back({g.index(0, j), g.index(0, j + 1), g.hz, -1.0, 0.0});
    edges.push_back({g.index(g.n1 - 1, j), g.index(g.n1 - 1, j + 1), g.hz, 1.0, 0.0});
  }
  return edges;
}

std::vector<std::array<int, 3>> triangles(const Grid& g) {
  std::vector<std::array<int, 3>> tris;
  tris.reserve(2 * (g.n1 - 1) * (g.n2 - 1));
  for (int i = 0; i + 1 < g.n1; ++i) {
    for (int j = 0; j + 1 < g.n2; ++j) {
      const int ll = g.index(i, j);
      const int hl = g.index(i + 1, j);
      const int hh = g.index(i + 1, j + 1);
      const int lh = g.index(i, j + 1);
      tris.push_back({ll, hl, hh});
      tris.push_back({ll, hh, lh});
    }
  }
  return tris;
}

SpMat difference_matrix(int n) {
  if (n < 2) throw InvalidArgument("difference_matrix: n must be >= 2");
  const double s = n - 1;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(2 * (n - 1));
  for (int r = 0; r + 1 < n; ++r) {
    t.emplace_back(r, r, s);
    t.emplace_back(r, r + 1, -s);
  }
  SpMat D(n - 1, n);
  D.setFromTriplets(t.begin(), t.end());
  return D;
}

SpMat assemble_stiffness(const Grid& g) {
  std::vector<Eigen::Triplet<double>> t;
  for (const auto& tri : triangles(g)) {
    double px[3], pz[3];
    for (int a = 0; a < 3; ++a) {
      const Point p = g.node(tri[a]);
      px[a] = p.x;
      pz[a] = p.z;
    }
    const double det = (px[1] - px[0]) * (pz[2] - pz[0]) - (px[2] - px[0]) * (pz[1] - pz[0]);
    const double area = 0.5 * std::abs(det);
    // gradients of the barycentric coordinates
    double gx[3], gz[3];
    for (int a = 0; a < 3; ++a) {
      const int b = (a + 1) % 3;
      const int c = (a + 2) % 3;
      gx[a] = (pz[b] - pz[c]) / det;
      gz[a] = (px[c] - px[b]) / det;
    }
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        t.emplace_back(tri[a], tri[b], area * (gx[a] * gx[b] + gz[a] * gz[b]));
  }
  SpMat S(g.size(), g.size());
  S.setFromTriplets(t.begin(), t.end());
  S.prune(1e-14 * (g.hx / g.hz + g.hz / g.hx));
  return S;
}

NodalWeights nodal_weights(const Grid& g) {
  NodalWeights w{Vec::Zero(g.size()), Vec::Zero(g.size())};
  const double third = g.hx * g.hz / 6.0;  // area(T) / 3 with area = hx hz / 2
  for (const auto& tri : triangles(g))
    for (int k : tri) w.d[k] += third;
  for (const auto& e : boundary_edges(g)) {
    w.b[e.a] += 0.5 * e.length;
    w.b[e.b] += 0.5 * e.length;
  }
  return w;
}

namespace {

SpMat identity(int n) {
  SpMat I(n, n);
  I.setIdentity();
  return I;
}

SpMat kron(const SpMat& A, const SpMat& B) {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(A.nonZeros() * B.nonZeros());
  for (int ka = 0; ka < A.outerSize(); ++ka)
    for (SpMat::InnerIterator ia(A, ka); ia; ++ia)
      for (int kb = 0; kb < B.outerSize(); ++kb)
        for (SpMat::InnerIterator ib(B, kb); ib; ++ib)
          t.emplace_back(ia.row() * B.rows() + ib.row(), ia.col() * B.cols() + ib.col(),
                         ia.value() * ib.value());
  SpMat K(A.rows() * B.rows(), A.cols() * B.cols());
  K.setFromTriplets(t.begin(), t.end());
  return K;
}

}  // namespace

Regulariser::Regulariser(const Grid& g, double alpha, double mu) : alpha_(alpha), mu_(mu) {
  if (!(mu > 0.0)) throw InvalidArgument("Regulariser: mu must be > 0");
  if (!(alpha >= 0.0)) throw InvalidArgument("Regulariser: alpha must be >= 0");
  const SpMat Dx = kron(difference_matrix(g.n1), identity(g.n2));
  const SpMat Dz = kron(identity(g.n1), difference_matrix(g.n2));
  std::vector<Eigen::Triplet<double>> t;
  for (const SpMat* M : {&Dx, &Dz}) {
    const int off = M == &Dx ? 0 : static_cast<int>(Dx.rows());
    for (int k = 0; k < M->outerSize(); ++k)
      for (SpMat::InnerIterator it(*M, k); it; ++it) t.emplace_back(off + it.row(), it.col(), it.value());
  }
  D_.resize(Dx.rows() + Dz.rows(), g.size());
  D_.setFromTriplets(t.begin(), t.end());
  R_ = SpMat(D_.transpose() * D_);
  R_.makeCompressed();
}

double Regulariser::energy(const Vec& v) const {
  return 0.5 * (alpha_ * (D_ * v).squaredNorm() + mu_ * v.squaredNorm());
}

SpMat Regulariser::gamma() const {
  SpMat G = alpha_ * R_ + mu_ * identity(static_cast<int>(R_.rows()));
  G.makeCompressed();
  return G;
}

Regulariser assemble_regulariser(const Grid& grid, double alpha, double mu) {
  return Regulariser(grid, alpha, mu);
}

FemOperators::FemOperators(const Grid& g) : grid(g), S(assemble_stiffness(g)), w(nodal_weights(g)) {}

}  // namespace bfwi
