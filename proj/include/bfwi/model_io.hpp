#pragma once

#include <string>
#include <vector>

#include "bfwi/grid_fem.hpp"

namespace bfwi {

/// Nodal squared-slowness field on a grid (node order of Grid::index).
struct Model {
  Grid grid;
  Vec m;
};

/// Text format: header line "n1 n2 width_x width_z", then n1*n2 values in node order.
Model read_model(const std::string& path);
void write_model(const std::string& path, const Model& model);

/// Splits along x into n_slices models of n1 / n_slices node columns each.
std::vector<Model> slice_model(const Model& model, int n_slices);
std::vector<Model> load_and_slice(const std::string& path, int n_slices);
/// Inverse of slice_model.
Model concat_slices(const std::vector<Model>& slices);

/// (n - 1) * factor + 1 nodes per direction over the same domain.
Grid refine_grid(const Grid& grid, int factor);

/// Bilinear interpolation of a nodal field onto another grid over the same domain.
Vec prolong(const Grid& from, const Vec& values, const Grid& to);

/// Separable Gaussian filter with standard deviation sigma (in cells), replicate padding.
Vec gaussian_smooth(const Grid& grid, const Vec& values, double sigma_cells);

/// m = 1 / c^2 with c linear in depth from c_top (z = 0) to c_bottom.
Vec linear_velocity_model(const Grid& grid, double c_top, double c_bottom);

/// Layered, laterally varying synthetic model (wavespeeds in km/s converted to
/// squared slowness), smoothed by a Gaussian of smooth_cells cells.
Model layered_model(int n1, int n2, double width_x, double width_z, double smooth_cells);

/// Gnuplot "matrix" dump: n2 rows (depth), n1 columns (x).
void write_gnuplot_matrix(const std::string& path, const Grid& grid, const Vec& values);

}  // namespace bfwi
