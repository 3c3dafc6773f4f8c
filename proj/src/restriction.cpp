#include "bfwi/restriction.hpp"

#include <algorithm>
#include <cmath>

namespace bfwi {

std::vector<Point> SensorSet::points() const {
  std::vector<Point> pts;
  pts.reserve(sensors.size());
  for (const auto& s : sensors) pts.push_back(s.p);
  return pts;
}

SensorSet SensorSet::fixed(const std::vector<Point>& pts) {
  SensorSet set;
  for (const auto& p : pts) {
    Sensor s;
    s.p = p;
    s.frozen = {true, true};
    s.lo = {p.x, p.z};
    s.hi = {p.x, p.z};
    set.sensors.push_back(s);
  }
  return set;
}

namespace {

// 1D sliding Lagrange stencil for coordinate t on nodes t_k = k h, k < n.
void stencil_1d(double t, double h, int n, int& first, int& width, std::array<double, 4>& w,
                std::array<double, 4>& dw) {
  const double s = t / h;
  int cell = static_cast<int>(std::floor(s));
  // on a node: use the cell to the left/below
  if (cell > 0 && s == static_cast<double>(cell)) --cell;
  cell = std::clamp(cell, 0, n - 2);
  width = std::min(n, 4);
  first = std::clamp(cell - 1, 0, n - width);
  w.fill(0.0);
  dw.fill(0.0);
  for (int a = 0; a < width; ++a) {
    const double xa = first + a;
    double num = 1.0, den = 1.0;
    for (int b = 0; b < width; ++b) {
      if (b == a) continue;
      const double xb = first + b;
      num *= (s - xb);
      den *= (xa - xb);
    }
    w[a] = num / den;
    // derivative of prod_b (s - x_b) by the product rule
    double dsum = 0.0;
    for (int c = 0; c < width; ++c) {
      if (c == a) continue;
      double prod = 1.0;
      for (int b = 0; b < width; ++b) {
        if (b == a || b == c) continue;
        prod *= (s - (first + b));
      }
      dsum += prod;
    }
    dw[a] = dsum / den / h;
  }
}

}  // namespace

RestrictionStencil::RestrictionStencil(const Grid& grid, const std::vector<Point>& sensors)
    : grid_(grid) {
  entries_.reserve(sensors.size());
  for (const auto& p : sensors) {
    if (!grid.contains(p)) throw InvalidArgument("RestrictionStencil: sensor outside the domain");
    Entry e;
    stencil_1d(p.x, grid.hx, grid.n1, e.i0, e.nx, e.wx, e.dwx);
    stencil_1d(p.z, grid.hz, grid.n2, e.j0, e.nz, e.wz, e.dwz);
    entries_.push_back(e);
  }
}

CVec RestrictionStencil::restrict(const CVec& u) const {
  CVec r(num_sensors());
  for (int j = 0; j < num_sensors(); ++j) {
    const Entry& e = entries_[j];
    Complex acc = 0.0;
    for (int a = 0; a < e.nx; ++a)
      for (int b = 0; b < e.nz; ++b) acc += e.wx[a] * e.wz[b] * u[grid_.index(e.i0 + a, e.j0 + b)];
    r[j] = acc;
  }
  return r;
}

CVec RestrictionStencil::adjoint(const CVec& z) const {
  CVec out = CVec::Zero(grid_.size());
  for (int j = 0; j < num_sensors(); ++j) {
    const Entry& e = entries_[j];
    for (int a = 0; a < e.nx; ++a)
      for (int b = 0; b < e.nz; ++b) out[grid_.index(e.i0 + a, e.j0 + b)] += e.wx[a] * e.wz[b] * z[j];
  }
  return out;
}

Complex RestrictionStencil::derivative(const CVec& u, int j, Axis axis) const {
  Complex acc = 0.0;
  for (const auto& [k, w] : derivative_row(j, axis)) acc += w * u[k];
  return acc;
}

CVec RestrictionStencil::derivative(const CVec& u, Axis axis) const {
  CVec r(num_sensors());
  for (int j = 0; j < num_sensors(); ++j) r[j] = derivative(u, j, axis);
  return r;
}

std::vector<std::pair<int, double>> RestrictionStencil::row(int j) const {
  const Entry& e = entries_[j];
  std::vector<std::pair<int, double>> out;
  for (int a = 0; a < e.nx; ++a)
    for (int b = 0; b < e.nz; ++b) out.emplace_back(grid_.index(e.i0 + a, e.j0 + b), e.wx[a] * e.wz[b]);
  return out;
}

std::vector<std::pair<int, double>> RestrictionStencil::derivative_row(int j, Axis axis) const {
  const Entry& e = entries_[j];
  std::vector<std::pair<int, double>> out;
  for (int a = 0; a < e.nx; ++a)
    for (int b = 0; b < e.nz; ++b) {
      const double w = axis == Axis::X ? e.dwx[a] * e.wz[b] : e.wx[a] * e.dwz[b];
      out.emplace_back(grid_.index(e.i0 + a, e.j0 + b), w);
    }
  return out;
}

Mat RestrictionStencil::dense() const {
  Mat R = Mat::Zero(num_sensors(), grid_.size());
  for (int j = 0; j < num_sensors(); ++j)
    for (const auto& [k, w] : row(j)) R(j, k) += w;
  return R;
}

}  // namespace bfwi
