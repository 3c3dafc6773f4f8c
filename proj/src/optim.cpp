#include "bfwi/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace bfwi {

std::string to_string(OptimStatus s) {
  switch (s) {
    case OptimStatus::Converged: return "converged";
    case OptimStatus::MaxIterations: return "max_iterations";
    case OptimStatus::LineSearchFailed: return "line_search_failed";
    case OptimStatus::Stalled: return "stalled";
  }
  return "unknown";
}

std::string to_string(StopRule r) {
  switch (r) {
    case StopRule::None: return "none";
    case StopRule::ProjectedGradient: return "projected_gradient";
    case StopRule::Stall: return "stall";
    case StopRule::MaxIterations: return "max_iterations";
    case StopRule::LineSearchFailed: return "line_search_failed";
  }
  return "unknown";
}

namespace {

// Minimiser of the cubic interpolating (a, fa, da) and (b, fb, db), safeguarded
// into the interior of [min(a,b), max(a,b)].
double cubic_step(const LinePoint& a, const LinePoint& b) {
  const double lo = std::min(a.t, b.t);
  const double hi = std::max(a.t, b.t);
  const double d1 = a.df + b.df - 3.0 * (a.f - b.f) / (a.t - b.t);
  const double disc = d1 * d1 - a.df * b.df;
  double t = 0.5 * (a.t + b.t);
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), b.t - a.t);
    const double denom = b.df - a.df + 2.0 * d2;
    if (denom != 0.0) {
      const double cand = b.t - (b.t - a.t) * (b.df + d2 - d1) / denom;
      if (std::isfinite(cand)) t = cand;
    }
  }
  const double margin = 0.1 * (hi - lo);
  return std::clamp(t, lo + margin, hi - margin);
}

}  // namespace

LineSearchResult wolfe_line_search(const std::function<LinePoint(double)>& phi, const LinePoint& at0,
                                   double t_init, const WolfeOptions& opts) {
  LineSearchResult res;
  if (!(at0.df < 0.0)) {
    res.status = LineSearchStatus::NotDescent;
    return res;
  }
  const double armijo_slope = opts.c1 * at0.df;
  const double curv = -opts.c2 * at0.df;
  const double noise = opts.f_noise * std::abs(at0.f);
  auto sufficient = [&](const LinePoint& p) {
    if (p.f <= at0.f + p.t * armijo_slope) return true;
    return p.f <= at0.f + noise && p.df <= -(1.0 - 2.0 * opts.c1) * at0.df;
  };
  auto no_better = [&](const LinePoint& p, const LinePoint& ref) {
    return p.f >= ref.f && std::abs(p.f - ref.f) > noise;
  };

  auto zoom = [&](LinePoint lo, LinePoint hi) {
    while (res.evals < opts.max_evals) {
      const double t = cubic_step(lo, hi);
      const LinePoint p = phi(t);
      ++res.evals;
      if (!std::isfinite(p.f) || !sufficient(p) || no_better(p, lo)) {
        hi = p;
      } else {
        if (std::abs(p.df) <= curv) {
          res.status = LineSearchStatus::Ok;
          res.accepted = p;
          return;
        }
        if (p.df * (hi.t - lo.t) >= 0.0) hi = lo;
        lo = p;
      }
      if (std::abs(hi.t - lo.t) <= 1e-16 * std::max(1.0, std::abs(lo.t))) break;
    }
    res.status = LineSearchStatus::Failed;
  };

  LinePoint prev = at0;
  double t = std::min(t_init, opts.step_max);
  for (int i = 0; res.evals < opts.max_evals; ++i) {
    const LinePoint p = phi(t);
    ++res.evals;
    if (!std::isfinite(p.f) || !sufficient(p) || (i > 0 && no_better(p, prev))) {
      zoom(prev, p);
      return res;
    }
    if (std::abs(p.df) <= curv) {
      res.status = LineSearchStatus::Ok;
      res.accepted = p;
      return res;
    }
    if (p.df >= 0.0) {
      zoom(p, prev);
      return res;
    }
    if (t >= opts.step_max) {
      // Armijo holds at the largest admissible step; curvature cannot be met.
      res.status = LineSearchStatus::StepMaxArmijo;
      res.accepted = p;
      return res;
    }
    prev = p;
    t = std::min(2.0 * t, opts.step_max);
  }
  res.status = LineSearchStatus::Failed;
  return res;
}

namespace {

struct Memory {
  std::deque<Vec> s, y;
  std::deque<double> rho;
  int cap;

  explicit Memory(int m) : cap(m) {}

  void push(const Vec& sv, const Vec& yv) {
    const double sy = sv.dot(yv);
    if (!(sy > 1e-14 * sv.norm() * yv.norm()) || !std::isfinite(sy)) return;
    s.push_back(sv);
    y.push_back(yv);
    rho.push_back(1.0 / sy);
    if (static_cast<int>(s.size()) > cap) {
      s.pop_front();
      y.pop_front();
      rho.pop_front();
    }
  }

  void clear() {
    s.clear();
    y.clear();
    rho.clear();
  }

  bool empty() const { return s.empty(); }

  // -H g by the two-loop recursion, restricted to components where mask is true.
  Vec direction(const Vec& g, const std::vector<bool>* free = nullptr) const {
    auto mask = [&](Vec v) {
      if (free)
        for (int i = 0; i < v.size(); ++i)
          if (!(*free)[i]) v[i] = 0.0;
      return v;
    };
    Vec q = mask(g);
    const int n = static_cast<int>(s.size());
    std::vector<double> a(n);
    for (int i = n - 1; i >= 0; --i) {
      a[i] = rho[i] * mask(s[i]).dot(q);
      q -= a[i] * mask(y[i]);
    }
    if (n > 0) {
      const Vec sl = mask(s.back()), yl = mask(y.back());
      const double yy = yl.squaredNorm();
      const double sy = sl.dot(yl);
      if (yy > 0.0 && sy > 0.0) q *= sy / yy;
    }
    for (int i = 0; i < n; ++i) {
      const double b = rho[i] * mask(y[i]).dot(q);
      q += (a[i] - b) * mask(s[i]);
    }
    return -mask(q);
  }
};

}  // namespace

OptimResult lbfgs_minimize(const ObjectiveFn& fn, const Vec& x0, const LbfgsOptions& opts,
                           const StepHooks& hooks) {
  OptimResult r;
  r.x = x0;
  r.grad.resize(x0.size());
  r.f = fn(r.x, r.grad);
  r.evaluations = 1;
  r.f_history.push_back(r.f);
  Memory mem(opts.memory);

  while (true) {
    if (r.grad.norm() <= opts.grad_tol) {
      r.status = OptimStatus::Converged;
      return r;
    }
    if (r.iterations >= opts.max_iter) {
      r.status = OptimStatus::MaxIterations;
      return r;
    }
    Vec p = mem.direction(r.grad);
    double slope = p.dot(r.grad);
    if (!(slope < 0.0)) {
      mem.clear();
      p = -r.grad;
      slope = p.dot(r.grad);
    }
    double t0 = 1.0;
    if (mem.empty()) t0 = opts.first_step / p.cwiseAbs().maxCoeff();

    WolfeOptions wo = opts.wolfe;
    if (hooks.step_max) wo.step_max = std::min(wo.step_max, hooks.step_max(r.x, p));

    Vec x_trial, g_trial(r.x.size());
    auto phi = [&](double t) {
      x_trial = r.x + t * p;
      const double f = fn(x_trial, g_trial);
      return LinePoint{t, f, g_trial.dot(p)};
    };
    LineSearchResult ls = wolfe_line_search(phi, LinePoint{0.0, r.f, slope}, t0, wo);
    r.evaluations += ls.evals;
    if (!ls.ok()) {
      if (hooks.on_reject) hooks.on_reject(ls.evals);
      r.status = OptimStatus::LineSearchFailed;
      return r;
    }
    if (hooks.on_accept) hooks.on_accept(ls.evals);
    const Vec s = x_trial - r.x;
    const Vec y = g_trial - r.grad;
    r.x = x_trial;
    r.f = ls.accepted.f;
    r.grad = g_trial;
    r.f_history.push_back(r.f);
    ++r.iterations;
    mem.push(s, y);
  }
}

Vec projected_gradient(const Vec& x, const Vec& g, const Vec& lo, const Vec& hi) {
  return (x - g).cwiseMax(lo).cwiseMin(hi) - x;
}

BoundedResult bounded_lbfgs_minimize(const ObjectiveFn& fn, const Vec& x0, const Vec& lo, const Vec& hi,
                                     const BoundedOptions& opts, const StepHooks& hooks,
                                     const IterationLog& log) {
  const int n = static_cast<int>(x0.size());
  auto project = [&](const Vec& v) { return Vec(v.cwiseMax(lo).cwiseMin(hi)); };

  BoundedResult r;
  r.x = project(x0);
  r.grad.resize(n);
  r.f = fn(r.x, r.grad);
  r.evaluations = 1;
  r.f_history.push_back(r.f);
  Memory mem(opts.memory);
  int stall_count = 0;

  while (true) {
    const double pg = n > 0 ? projected_gradient(r.x, r.grad, lo, hi).cwiseAbs().maxCoeff() : 0.0;
    if (log) log(r.iterations, r.x, r.f, pg);
    if (pg < opts.pg_tol) {
      r.rule = StopRule::ProjectedGradient;
      return r;
    }
    if (r.iterations >= opts.max_iter) {
      r.rule = StopRule::MaxIterations;
      return r;
    }
    // variables held at a bound by an outward-pointing gradient
    std::vector<bool> free(n, true);
    const double eps = 1e-12;
    for (int i = 0; i < n; ++i) {
      const bool at_lo = r.x[i] <= lo[i] + eps * std::max(1.0, std::abs(lo[i]));
      const bool at_hi = r.x[i] >= hi[i] - eps * std::max(1.0, std::abs(hi[i]));
      if ((at_lo && r.grad[i] > 0.0) || (at_hi && r.grad[i] < 0.0)) free[i] = false;
    }
    Vec p = mem.direction(r.grad, &free);
    if (!(p.dot(r.grad) < 0.0)) {
      mem.clear();
      p = mem.direction(r.grad, &free);
    }
    double t = 1.0;
    if (mem.empty()) t = opts.first_step / std::max(p.cwiseAbs().maxCoeff(), 1e-300);

    Vec x_trial, g_trial(n);
    double f_trial = 0.0;
    bool accepted = false;
    int evals = 0;
    for (int k = 0; k <= opts.max_backtracks; ++k, t *= 0.5) {
      x_trial = project(r.x + t * p);
      if ((x_trial - r.x).cwiseAbs().maxCoeff() == 0.0) break;
      f_trial = fn(x_trial, g_trial);
      ++evals;
      if (std::isfinite(f_trial) && f_trial <= r.f + opts.c1 * r.grad.dot(x_trial - r.x)) {
        accepted = true;
        break;
      }
    }
    r.evaluations += evals;
    if (!accepted) {
      if (hooks.on_reject) hooks.on_reject(evals);
      r.rule = StopRule::LineSearchFailed;
      return r;
    }
    if (hooks.on_accept) hooks.on_accept(evals);
    const Vec s = x_trial - r.x;
    const Vec y = g_trial - r.grad;
    const double rel_df = std::abs(f_trial - r.f) / std::max(std::abs(r.f), 1e-300);
    const double step = s.cwiseAbs().maxCoeff();
    r.x = x_trial;
    r.f = f_trial;
    r.grad = g_trial;
    r.f_history.push_back(r.f);
    ++r.iterations;
    mem.push(s, y);
    stall_count = (rel_df < opts.stall_tol && step < opts.stall_tol) ? stall_count + 1 : 0;
    if (stall_count >= 2) {
      if (log) log(r.iterations, r.x, r.f, projected_gradient(r.x, r.grad, lo, hi).cwiseAbs().maxCoeff());
      r.rule = StopRule::Stall;
      return r;
    }
  }
}

}  // namespace bfwi
