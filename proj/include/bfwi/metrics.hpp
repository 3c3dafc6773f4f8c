#pragma once

#include "bfwi/grid_fem.hpp"

namespace bfwi {

/// Per-node relative percentage error |recon - gt| / |gt| * 100.
Vec relative_error_map(const Vec& recon, const Vec& gt);

/// Mean of relative_error_map.
double mre(const Vec& recon, const Vec& gt);

struct SsimOptions {
  double sigma = 1.5;
  int window = 11;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean SSIM map of two nodal images on the same grid. Gaussian window,
/// replicate padding, dynamic range max - min of the ground truth.
double ssim(const Grid& grid, const Vec& recon, const Vec& gt, const SsimOptions& opts = {});

/// psi0 / psi_opt.
double improvement_factor(double psi0, double psi_opt);

}  // namespace bfwi
