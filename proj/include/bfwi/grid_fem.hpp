#pragma once

#include <array>
#include <vector>

#include "bfwi/types.hpp"

namespace bfwi {

enum class NodeKind { Interior, Edge, Corner };

/// Uniform rectangular grid on [0, width_x] x [0, width_z].
///
/// Nodes are ordered lexicographically with z fastest: k = i * n2 + j for the
/// node at (x_i, z_j). With this ordering D_x = D_{n1} (x) I_{n2} and
/// D_z = I_{n1} (x) D_{n2}. Each cell is split into two triangles along the
/// diagonal from (x_i, z_j) to (x_{i+1}, z_{j+1}).
struct Grid {
  int n1 = 0;
  int n2 = 0;
  double width_x = 0.0;
  double width_z = 0.0;
  double hx = 0.0;
  double hz = 0.0;

  int size() const { return n1 * n2; }
  int index(int i, int j) const { return i * n2 + j; }
  int ix(int k) const { return k / n2; }
  int iz(int k) const { return k % n2; }
  double x(int i) const { return i * hx; }
  double z(int j) const { return j * hz; }
  Point node(int k) const { return {x(ix(k)), z(iz(k))}; }
  NodeKind kind(int k) const;
  bool on_boundary(int k) const { return kind(k) != NodeKind::Interior; }
  bool contains(const Point& p) const {
    return p.x >= 0.0 && p.x <= width_x && p.z >= 0.0 && p.z <= width_z;
  }
  bool strictly_inside(const Point& p) const {
    return p.x > 0.0 && p.x < width_x && p.z > 0.0 && p.z < width_z;
  }
};

Grid build_grid(int n1, int n2, double width_x, double width_z);

/// Boundary edge between two adjacent boundary nodes with its outward normal.
struct BoundaryEdge {
  int a = 0;
  int b = 0;
  double length = 0.0;
  double nx = 0.0;
  double nz = 0.0;
};

std::vector<BoundaryEdge> boundary_edges(const Grid& grid);

/// The two triangles of every cell, as node index triples.
std::vector<std::array<int, 3>> triangles(const Grid& grid);

/// (n - 1) x n forward difference matrix scaled by (n - 1).
SpMat difference_matrix(int n);

/// P1 stiffness matrix S_ij = int grad(phi_i) . grad(phi_j).
SpMat assemble_stiffness(const Grid& grid);

/// Diagonal (nodal quadrature) mass and boundary weights.
struct NodalWeights {
  Vec d;  // d_k = sum of area(T)/3 over triangles T containing node k
  Vec b;  // b_k = half the length of boundary edges at node k, 0 inside
};

NodalWeights nodal_weights(const Grid& grid);

/// Gamma(alpha, mu) = alpha R + mu I with R = D_x^T D_x + D_z^T D_z.
class Regulariser {
 public:
  Regulariser(const Grid& grid, double alpha, double mu);

  double alpha() const { return alpha_; }
  double mu() const { return mu_; }
  const SpMat& R() const { return R_; }

  /// Assembled Gamma as a sparse symmetric matrix.
  SpMat gamma() const;
  Vec apply(const Vec& v) const { return alpha_ * (R_ * v) + mu_ * v; }
  Vec apply_R(const Vec& v) const { return R_ * v; }
  /// 1/2 v^T Gamma v, summed from the differences to avoid cancellation.
  double energy(const Vec& v) const;

 private:
  double alpha_;
  double mu_;
  SpMat D_;  // stacked Dx, Dz
  SpMat R_;
};

Regulariser assemble_regulariser(const Grid& grid, double alpha, double mu);

/// Model-independent discrete operators shared by every solve on a grid.
struct FemOperators {
  Grid grid;
  SpMat S;
  NodalWeights w;

  explicit FemOperators(const Grid& g);
};

}  // namespace bfwi
