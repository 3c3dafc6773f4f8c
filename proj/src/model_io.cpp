#include "bfwi/model_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace bfwi {

Model read_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("read_model: cannot open " + path);
  int n1 = 0, n2 = 0;
  double wx = 0.0, wz = 0.0;
  if (!(in >> n1 >> n2 >> wx >> wz)) throw InvalidArgument("read_model: bad header in " + path);
  Model mdl;
  mdl.grid = build_grid(n1, n2, wx, wz);
  mdl.m.resize(mdl.grid.size());
  for (int k = 0; k < mdl.grid.size(); ++k)
    if (!(in >> mdl.m[k]))
      throw InvalidArgument("read_model: " + path + " has fewer than " + std::to_string(mdl.grid.size()) + " values");
  return mdl;
}

void write_model(const std::string& path, const Model& model) {
  std::ofstream out(path);
  if (!out) throw Error("write_model: cannot open " + path);
  const Grid& g = model.grid;
  out << g.n1 << ' ' << g.n2 << ' ' << std::setprecision(17) << g.width_x << ' ' << g.width_z << '\n';
  for (int k = 0; k < g.size(); ++k) out << model.m[k] << '\n';
}

std::vector<Model> slice_model(const Model& model, int n_slices) {
  const Grid& g = model.grid;
  if (n_slices < 1) throw InvalidArgument("slice_model: need at least one slice");
  if (g.n1 % n_slices != 0)
    throw InvalidArgument("slice_model: " + std::to_string(g.n1) + " columns do not split into " +
                          std::to_string(n_slices) + " slices");
  const int w = g.n1 / n_slices;
  if (w < 2) throw InvalidArgument("slice_model: slices need at least two columns");
  std::vector<Model> out;
  for (int s = 0; s < n_slices; ++s) {
    Model sl;
    sl.grid = build_grid(w, g.n2, (w - 1) * g.hx, g.width_z);
    sl.m = model.m.segment(s * w * g.n2, w * g.n2);
    out.push_back(std::move(sl));
  }
  return out;
}

std::vector<Model> load_and_slice(const std::string& path, int n_slices) {
  return slice_model(read_model(path), n_slices);
}

Model concat_slices(const std::vector<Model>& slices) {
  if (slices.empty()) throw InvalidArgument("concat_slices: nothing to concatenate");
  const Grid& g0 = slices.front().grid;
  int n1 = 0;
  for (const auto& s : slices) {
    if (s.grid.n2 != g0.n2) throw InvalidArgument("concat_slices: depth mismatch");
    n1 += s.grid.n1;
  }
  Model out;
  out.grid = build_grid(n1, g0.n2, (n1 - 1) * g0.hx, g0.width_z);
  out.m.resize(out.grid.size());
  int at = 0;
  for (const auto& s : slices) {
    out.m.segment(at, s.m.size()) = s.m;
    at += static_cast<int>(s.m.size());
  }
  return out;
}

Grid refine_grid(const Grid& g, int factor) {
  if (factor < 1) throw InvalidArgument("refine_grid: factor must be >= 1");
  return build_grid((g.n1 - 1) * factor + 1, (g.n2 - 1) * factor + 1, g.width_x, g.width_z);
}

Vec prolong(const Grid& from, const Vec& v, const Grid& to) {
  Vec out(to.size());
  for (int i = 0; i < to.n1; ++i) {
    const double sx = std::clamp(to.x(i) / from.hx, 0.0, from.n1 - 1.0);
    const int i0 = std::min(static_cast<int>(sx), from.n1 - 2);
    const double tx = sx - i0;
    for (int j = 0; j < to.n2; ++j) {
      const double sz = std::clamp(to.z(j) / from.hz, 0.0, from.n2 - 1.0);
      const int j0 = std::min(static_cast<int>(sz), from.n2 - 2);
      const double tz = sz - j0;
      out[to.index(i, j)] = (1 - tx) * (1 - tz) * v[from.index(i0, j0)] + tx * (1 - tz) * v[from.index(i0 + 1, j0)] +
                            (1 - tx) * tz * v[from.index(i0, j0 + 1)] + tx * tz * v[from.index(i0 + 1, j0 + 1)];
    }
  }
  return out;
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double s = 0.0;
  for (int i = -r; i <= r; ++i) s += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= s;
  return k;
}

}  // namespace

Vec gaussian_smooth(const Grid& g, const Vec& v, double sigma) {
  if (sigma <= 0.0) return v;
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  Vec tmp(g.size()), out(g.size());
  for (int i = 0; i < g.n1; ++i)
    for (int j = 0; j < g.n2; ++j) {
      double acc = 0.0;
      for (int q = -r; q <= r; ++q) acc += k[q + r] * v[g.index(std::clamp(i + q, 0, g.n1 - 1), j)];
      tmp[g.index(i, j)] = acc;
    }
  for (int i = 0; i < g.n1; ++i)
    for (int j = 0; j < g.n2; ++j) {
      double acc = 0.0;
      for (int q = -r; q <= r; ++q) acc += k[q + r] * tmp[g.index(i, std::clamp(j + q, 0, g.n2 - 1))];
      out[g.index(i, j)] = acc;
    }
  return out;
}

Vec linear_velocity_model(const Grid& g, double c_top, double c_bottom) {
  if (!(c_top > 0.0) || !(c_bottom > 0.0)) throw InvalidArgument("linear_velocity_model: wavespeeds must be positive");
  Vec m(g.size());
  for (int k = 0; k < g.size(); ++k) {
    const double c = c_top + (c_bottom - c_top) * g.node(k).z / g.width_z;
    m[k] = 1.0 / (c * c);
  }
  return m;
}

Model layered_model(int n1, int n2, double wx, double wz, double smooth_cells) {
  Model mdl;
  mdl.grid = build_grid(n1, n2, wx, wz);
  const Grid& g = mdl.grid;
  mdl.m.resize(g.size());
  // interface depths as fractions of wz: base, fold amplitude, fold wavelength (fraction of wx), phase
  struct Layer {
    double base, amp, wavelength, phase, c;
  };
  const std::vector<Layer> layers = {
      {0.00, 0.00, 1.00, 0.0, 1.50}, {0.12, 0.03, 0.55, 0.3, 1.70}, {0.24, 0.05, 0.40, 1.1, 1.95},
      {0.36, 0.06, 0.33, 2.0, 2.30}, {0.47, 0.07, 0.45, 0.7, 2.05}, {0.58, 0.06, 0.30, 2.6, 2.70},
      {0.70, 0.05, 0.50, 1.9, 3.20}, {0.77, 0.03, 0.38, 2.9, 3.45}, {0.83, 0.04, 0.60, 0.4, 3.80},
  };
  const double fault_x = 0.62 * wx;
  for (int k = 0; k < g.size(); ++k) {
    const Point p = g.node(k);
    const double throw_z = p.x > fault_x ? 0.06 * wz : 0.0;  // normal fault offset
    double c = layers.front().c;
    for (const auto& L : layers) {
      const double depth =
          (L.base + L.amp * std::sin(2.0 * 3.14159265358979323846 * p.x / (L.wavelength * wx) + L.phase)) * wz +
          (L.base > 0.0 ? throw_z : 0.0);
      if (p.z >= depth) c = L.c;
    }
    // gentle gradient inside layers
    c += 0.25 * p.z / wz;
    mdl.m[k] = 1.0 / (c * c);
  }
  mdl.m = gaussian_smooth(g, mdl.m, smooth_cells);
  return mdl;
}

void write_gnuplot_matrix(const std::string& path, const Grid& g, const Vec& v) {
  std::ofstream out(path);
  if (!out) throw Error("write_gnuplot_matrix: cannot open " + path);
  out << std::setprecision(10);
  for (int j = 0; j < g.n2; ++j) {
    for (int i = 0; i < g.n1; ++i) out << (i ? " " : "") << v[g.index(i, j)];
    out << '\n';
  }
}

}  // namespace bfwi
