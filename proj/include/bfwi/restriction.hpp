#pragma once

#include <array>
#include <vector>

#include "bfwi/grid_fem.hpp"

namespace bfwi {

enum class Axis : int { X = 0, Z = 1 };

/// Sensor positions with per-coordinate bounds and frozen flags.
struct SensorSet {
  struct Sensor {
    Point p;
    std::array<bool, 2> frozen{false, false};
    std::array<double, 2> lo{0.0, 0.0};
    std::array<double, 2> hi{0.0, 0.0};

    double coord(Axis a) const { return a == Axis::X ? p.x : p.z; }
    double& coord(Axis a) { return a == Axis::X ? p.x : p.z; }
  };
  std::vector<Sensor> sensors;

  int size() const { return static_cast<int>(sensors.size()); }
  std::vector<Point> points() const;

  /// Sensors at the given points, every coordinate frozen.
  static SensorSet fixed(const std::vector<Point>& pts);
};

/// Sliding cubic interpolation of nodal fields at sensor positions.
///
/// Per axis, a sensor in cell [x_i, x_{i+1}] uses nodes x_{i-1}..x_{i+2}, shifted
/// inward near the boundary so four nodes are always used (fewer only when the
/// grid has fewer than four nodes in that direction). A sensor exactly on a
/// node is assigned to the cell on its left/lower side.
class RestrictionStencil {
 public:
  struct Entry {
    int i0 = 0, j0 = 0;    // first node of the stencil along x and z
    int nx = 0, nz = 0;    // stencil widths
    std::array<double, 4> wx{}, wz{};    // Lagrange weights
    std::array<double, 4> dwx{}, dwz{};  // their derivatives
  };

  RestrictionStencil(const Grid& grid, const std::vector<Point>& sensors);
  RestrictionStencil(const Grid& grid, const SensorSet& sensors)
      : RestrictionStencil(grid, sensors.points()) {}

  int num_sensors() const { return static_cast<int>(entries_.size()); }
  const Grid& grid() const { return grid_; }
  const Entry& entry(int j) const { return entries_[j]; }

  /// (R u)_j: interpolant of u at sensor j.
  CVec restrict(const CVec& u) const;
  /// R^T z scattered to nodes.
  CVec adjoint(const CVec& z) const;
  /// d/dx_axis of the interpolant at sensor j.
  Complex derivative(const CVec& u, int j, Axis axis) const;
  /// All sensors' derivatives along one axis.
  CVec derivative(const CVec& u, Axis axis) const;
  /// Nonzero (node, weight) pairs of row j (value, or derivative along an axis).
  std::vector<std::pair<int, double>> row(int j) const;
  std::vector<std::pair<int, double>> derivative_row(int j, Axis axis) const;

  /// Dense N_r x M matrix of the value weights (tests, small grids).
  Mat dense() const;

 private:
  Grid grid_;
  std::vector<Entry> entries_;
};

inline RestrictionStencil build_stencil(const Grid& grid, const SensorSet& sensors) {
  return RestrictionStencil(grid, sensors);
}

}  // namespace bfwi
