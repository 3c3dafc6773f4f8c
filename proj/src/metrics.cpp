#include "bfwi/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace bfwi {

Vec relative_error_map(const Vec& recon, const Vec& gt) {
  if (recon.size() != gt.size()) throw InvalidArgument("relative_error_map: size mismatch");
  Vec re(gt.size());
  for (int j = 0; j < gt.size(); ++j) {
    if (gt[j] == 0.0) throw InvalidArgument("relative_error_map: ground truth has a zero entry");
    re[j] = std::abs((recon[j] - gt[j]) / gt[j]) * 100.0;
  }
  return re;
}

double mre(const Vec& recon, const Vec& gt) {
  const Vec re = relative_error_map(recon, gt);
  if (re.size() == 0) throw InvalidArgument("mre: empty input");
  return re.mean();
}

namespace {

// Separable Gaussian-window mean of an image, replicate padding.
Vec window_mean(const Grid& g, const Vec& v, const std::vector<double>& k) {
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

}  // namespace

double ssim(const Grid& g, const Vec& x, const Vec& y, const SsimOptions& o) {
  if (x.size() != g.size() || y.size() != g.size()) throw InvalidArgument("ssim: images must match the grid");
  const double L = y.maxCoeff() - y.minCoeff();
  if (y.cwiseAbs().maxCoeff() == 0.0) throw InvalidArgument("ssim: ground truth is identically zero");
  if (o.window < 1 || o.window % 2 == 0) throw InvalidArgument("ssim: window must be odd");
  std::vector<double> k(o.window);
  const int r = o.window / 2;
  double s = 0.0;
  for (int i = -r; i <= r; ++i) s += k[i + r] = std::exp(-0.5 * i * i / (o.sigma * o.sigma));
  for (double& v : k) v /= s;

  // a constant ground truth has no dynamic range; fall back to its magnitude
  const double range = L > 0.0 ? L : std::abs(y[0]);
  const double c1 = std::pow(o.k1 * range, 2);
  const double c2 = std::pow(o.k2 * range, 2);
  const Vec mx = window_mean(g, x, k);
  const Vec my = window_mean(g, y, k);
  const Vec sxx = window_mean(g, x.cwiseProduct(x), k) - mx.cwiseProduct(mx);
  const Vec syy = window_mean(g, y.cwiseProduct(y), k) - my.cwiseProduct(my);
  const Vec sxy = window_mean(g, x.cwiseProduct(y), k) - mx.cwiseProduct(my);
  double total = 0.0;
  for (int i = 0; i < g.size(); ++i) {
    const double num = (2 * mx[i] * my[i] + c1) * (2 * sxy[i] + c2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (sxx[i] + syy[i] + c2);
    total += num / den;
  }
  return total / g.size();
}

double improvement_factor(double psi0, double psi_opt) {
  if (!(psi0 > 0.0) || !(psi_opt > 0.0)) throw InvalidArgument("improvement_factor: psi values must be positive");
  return psi0 / psi_opt;
}

}  // namespace bfwi
