#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "bfwi/types.hpp"

namespace bfwi {

/// Value and derivative of a one-dimensional restriction f(x + t p).
struct LinePoint {
  double t = 0.0;
  double f = 0.0;
  double df = 0.0;
};

struct WolfeOptions {
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_evals = 40;
  // Relative size of the rounding noise in f. Within it, sufficient decrease is
  // judged from the directional derivative instead of from f.
  double f_noise = 1e-12;
  double step_max = std::numeric_limits<double>::infinity();
};

enum class LineSearchStatus { Ok, StepMaxArmijo, NotDescent, Failed };

struct LineSearchResult {
  LineSearchStatus status = LineSearchStatus::Failed;
  LinePoint accepted;
  int evals = 0;
  bool ok() const { return status == LineSearchStatus::Ok || status == LineSearchStatus::StepMaxArmijo; }
};

/// Strong Wolfe line search (bracketing + cubic zoom). The accepted point is
/// always the last point evaluated.
LineSearchResult wolfe_line_search(const std::function<LinePoint(double)>& phi, const LinePoint& at0,
                                   double t_init, const WolfeOptions& opts = {});

/// f(x) with gradient written into grad.
using ObjectiveFn = std::function<double(const Vec& x, Vec& grad)>;

/// Hooks that let callers attribute work to accepted points vs rejected trials.
struct StepHooks {
  /// Called after a successful line search that used `evals` evaluations;
  /// the last one evaluated is the accepted point.
  std::function<void(int evals)> on_accept;
  /// Called after a failed line search with the number of wasted evaluations.
  std::function<void(int evals)> on_reject;
  /// Largest feasible step along direction p from x (default: unbounded).
  std::function<double(const Vec& x, const Vec& p)> step_max;
};

struct LbfgsOptions {
  int memory = 10;
  double grad_tol = 1e-10;  // on ||grad||_2
  int max_iter = 1000;
  double first_step = 1.0;  // max-norm of the first trial displacement
  WolfeOptions wolfe;
};

enum class OptimStatus { Converged, MaxIterations, LineSearchFailed, Stalled };

std::string to_string(OptimStatus s);

struct OptimResult {
  Vec x;
  double f = 0.0;
  Vec grad;
  int iterations = 0;
  int evaluations = 0;
  OptimStatus status = OptimStatus::MaxIterations;
  std::vector<double> f_history;  // f at every accepted iterate, start included
};

/// Unconstrained L-BFGS with strong Wolfe line search.
OptimResult lbfgs_minimize(const ObjectiveFn& fn, const Vec& x0, const LbfgsOptions& opts = {},
                           const StepHooks& hooks = {});

struct BoundedOptions {
  int memory = 10;
  double pg_tol = 1e-10;    // on the infinity norm of the projected gradient
  int max_iter = 50;
  double stall_tol = 1e-12;  // relative f change and max-norm step
  double first_step = 1.0;
  double c1 = 1e-4;
  int max_backtracks = 20;
};

enum class StopRule { None, ProjectedGradient, Stall, MaxIterations, LineSearchFailed };

std::string to_string(StopRule r);

struct BoundedResult {
  Vec x;
  double f = 0.0;
  Vec grad;
  int iterations = 0;
  int evaluations = 0;
  StopRule rule = StopRule::None;
  std::vector<double> f_history;
};

/// Per-iteration callback of the bounded optimiser (x, f, projected gradient norm).
using IterationLog = std::function<void(int iter, const Vec& x, double f, double pg_norm)>;

/// x -> P(x - g) - x, the projected gradient step on [lo, hi].
Vec projected_gradient(const Vec& x, const Vec& g, const Vec& lo, const Vec& hi);

/// Bound-constrained L-BFGS: L-BFGS directions on the free variables with
/// projected Armijo backtracking, so every iterate stays in [lo, hi].
BoundedResult bounded_lbfgs_minimize(const ObjectiveFn& fn, const Vec& x0, const Vec& lo, const Vec& hi,
                                     const BoundedOptions& opts = {}, const StepHooks& hooks = {},
                                     const IterationLog& log = {});

}  // namespace bfwi
