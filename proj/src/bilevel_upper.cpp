#include "bfwi/bilevel_upper.hpp"

#include <cmath>
#include <exception>
#include <ostream>

#include <Eigen/QR>
#include <nlohmann/json.hpp>

namespace bfwi {

void TrainingSet::validate() const {
  if (!fem) throw InvalidArgument("TrainingSet: missing FEM operators");
  if (models.empty()) throw InvalidArgument("TrainingSet: no training models");
  if (data.size() != models.size()) throw InvalidArgument("TrainingSet: one data set per model required");
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (models[i].size() != fem->grid.size())
      throw InvalidArgument("TrainingSet: model " + std::to_string(i) + " has the wrong size");
    if (!(models[i].minCoeff() > 0.0))
      throw InvalidArgument("TrainingSet: model " + std::to_string(i) + " is not positive");
    data[i].validate();
  }
}

void FrequencySchedule::validate() const {
  if (groups.empty()) throw InvalidArgument("FrequencySchedule: no groups");
  double prev = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].omegas.empty())
      throw InvalidArgument("FrequencySchedule: group " + std::to_string(g) + " is empty");
    double mx = 0.0;
    for (double w : groups[g].omegas) {
      if (!(w > 0.0)) throw InvalidArgument("FrequencySchedule: frequencies must be positive");
      mx = std::max(mx, w);
    }
    if (mx < prev) throw InvalidArgument("FrequencySchedule: group maxima must not decrease");
    prev = mx;
  }
}

FrequencySchedule FrequencySchedule::from_hz(const std::vector<std::vector<double>>& groups_hz) {
  FrequencySchedule s;
  for (const auto& g : groups_hz) {
    FrequencyGroup fg;
    for (double f : g) fg.omegas.push_back(omega_from_hz(f));
    s.groups.push_back(fg);
  }
  if (!s.groups.empty()) s.groups.back().optimise_alpha = true;
  s.validate();
  return s;
}

SensorParametrisation::SensorParametrisation(SensorSet base, Vec p0, Mat B, Vec lo, Vec hi)
    : base_(std::move(base)), p0_(std::move(p0)), B_(std::move(B)), lo_(std::move(lo)), hi_(std::move(hi)) {
  const int nc = 2 * base_.size();
  if (p0_.size() != nc || B_.rows() != nc) throw InvalidArgument("SensorParametrisation: shape mismatch");
  if (lo_.size() != B_.cols() || hi_.size() != B_.cols())
    throw InvalidArgument("SensorParametrisation: bounds must match the parameter count");
  if ((lo_.array() > hi_.array()).any()) throw InvalidArgument("SensorParametrisation: lo > hi");
}

SensorParametrisation SensorParametrisation::free_coordinates(const SensorSet& sensors) {
  const int nc = 2 * sensors.size();
  std::vector<int> free;
  Vec p0(nc);
  for (int j = 0; j < sensors.size(); ++j)
    for (int l = 0; l < 2; ++l) {
      const auto& s = sensors.sensors[j];
      const bool fr = s.frozen[l];
      p0[2 * j + l] = fr ? s.coord(static_cast<Axis>(l)) : 0.0;
      if (!fr) free.push_back(2 * j + l);
    }
  const int nf = static_cast<int>(free.size());
  Mat B = Mat::Zero(nc, nf);
  Vec lo(nf), hi(nf);
  for (int q = 0; q < nf; ++q) {
    const int j = free[q] / 2, l = free[q] % 2;
    B(free[q], q) = 1.0;
    lo[q] = sensors.sensors[j].lo[l];
    hi[q] = sensors.sensors[j].hi[l];
  }
  return SensorParametrisation(sensors, p0, B, lo, hi);
}

SensorParametrisation SensorParametrisation::symmetric_triplet(double x, double zc, double delta_lo,
                                                               double delta_hi) {
  SensorSet set;
  for (int j = 0; j < 3; ++j) {
    SensorSet::Sensor s;
    s.p = {x, zc};
    s.frozen = {true, false};
    s.lo = {x, zc - 0.5 * delta_hi};
    s.hi = {x, zc + 0.5 * delta_hi};
    set.sensors.push_back(s);
  }
  Vec p0(6);
  p0 << x, zc, x, zc, x, zc;
  Mat B = Mat::Zero(6, 1);
  B(1, 0) = -0.5;
  B(5, 0) = 0.5;
  return SensorParametrisation(set, p0, B, Vec::Constant(1, delta_lo), Vec::Constant(1, delta_hi));
}

SensorSet SensorParametrisation::sensors(const Vec& theta) const {
  if (theta.size() != size()) throw InvalidArgument("SensorParametrisation::sensors: wrong parameter count");
  const Vec p = p0_ + B_ * theta;
  SensorSet out = base_;
  for (int j = 0; j < out.size(); ++j) out.sensors[j].p = {p[2 * j], p[2 * j + 1]};
  return out;
}

Vec SensorParametrisation::theta_of(const SensorSet& sensors) const {
  Vec p(2 * sensors.size());
  for (int j = 0; j < sensors.size(); ++j) {
    p[2 * j] = sensors.sensors[j].p.x;
    p[2 * j + 1] = sensors.sensors[j].p.z;
  }
  if (B_.cols() == 0) return Vec(0);
  return B_.colPivHouseholderQr().solve(p - p0_);
}

Vec SensorParametrisation::pullback(const Mat& grad_p) const {
  Vec g(2 * grad_p.rows());
  for (int j = 0; j < grad_p.rows(); ++j) {
    g[2 * j] = grad_p(j, 0);
    g[2 * j + 1] = grad_p(j, 1);
  }
  return B_.transpose() * g;
}

double psi_value(const std::vector<Vec>& truth, const std::vector<Vec>& recon) {
  if (truth.size() != recon.size() || truth.empty()) throw InvalidArgument("psi_value: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) s += (truth[i] - recon[i]).squaredNorm();
  return s / (2.0 * truth.size());
}

PcgResult solve_rho(const LowerProblem& problem, std::shared_ptr<const LowerEvaluation> cache, const Vec& m_true,
                    const Preconditioner& pre, const PcgOptions& opts) {
  const HessianOperator H(problem, cache);
  const Vec rhs = m_true - cache->m;
  if (rhs.squaredNorm() == 0.0) {
    PcgResult r;
    r.x = Vec::Zero(rhs.size());
    r.converged = true;
    return r;
  }
  return pcg_solve(H, rhs, pre, opts);
}

CVec tau_field(const LowerProblem& problem, const LowerEvaluation& cache, const Vec& rho, int k, SolvePhase phase) {
  const int ns = problem.data().num_sources();
  const int w = k / ns;
  const CVec g = g_coefficients(problem.fem(), cache.m, problem.data().omegas[w]);
  const CVec rhs = (rho.cast<Complex>().array() * g.array() * cache.u[k].array()).matrix();
  return cache.factorizations[w]->solve_forward(rhs, phase);
}

Mat grad_psi_positions(const LowerProblem& problem, const LowerEvaluation& cache, const Vec& rho, SolvePhase phase) {
  const DataSet& data = problem.data();
  const RestrictionStencil& st = problem.stencil();
  const int nr = st.num_sensors();
  Mat G = Mat::Zero(nr, 2);
  for (int k = 0; k < data.num_pairs(); ++k) {
    const CVec tau = tau_field(problem, cache, rho, k, phase);
    const CVec tau_p = st.restrict(tau);
    // u(p_j) - d_j
    const CVec diff = -cache.residual[k];
    for (int l = 0; l < 2; ++l) {
      const Axis ax = static_cast<Axis>(l);
      const CVec dtau = st.derivative(tau, ax);
      const CVec ddiff = st.derivative(cache.u[k], ax) - data.reading_derivative(k, ax);
      for (int j = 0; j < nr; ++j)
        G(j, l) += std::real(tau_p[j] * std::conj(ddiff[j]) + dtau[j] * std::conj(diff[j]));
    }
  }
  for (int j = 0; j < nr; ++j)
    for (int l = 0; l < 2; ++l)
      if (data.sensors.sensors[j].frozen[l]) G(j, l) = 0.0;
  return G;
}

double grad_psi_alpha(const LowerProblem& problem, const Vec& m_fwi, const Vec& rho) {
  return m_fwi.dot(problem.regulariser().apply_R(rho));
}

namespace {

bool same_points(const SensorSet& a, const SensorSet& b) {
  if (a.size() != b.size()) return false;
  for (int j = 0; j < a.size(); ++j)
    if (a.sensors[j].p.x != b.sensors[j].p.x || a.sensors[j].p.z != b.sensors[j].p.z) return false;
  return true;
}

}  // namespace

UpperEvaluation evaluate_upper(const TrainingSet& T, const SensorSet& sensors, double alpha,
                               const std::vector<double>& omegas, const std::vector<Vec>& starts,
                               const UpperOptions& opts, bool with_gradient, const Preconditioner* pre) {
  const int nm = T.size();
  if (static_cast<int>(starts.size()) != nm) throw InvalidArgument("evaluate_upper: one start per model required");
  Preconditioner local;
  if (with_gradient && !pre) {
    if (opts.precon == RhoPreconditioner::P2) local = build_P2(T.fem->grid, alpha, opts.lower.mu);
    pre = &local;
  }
  const SolveCounts before = solve_count();
  UpperEvaluation ev;
  ev.models.resize(nm);
  std::vector<std::exception_ptr> errors(nm);
  const bool par = opts.policy == ExecPolicy::Parallel;

#pragma omp parallel for schedule(dynamic) if (par)
  for (int i = 0; i < nm; ++i) {
    try {
      DataSet d = T.data[i].with_omegas(omegas);
      if (!same_points(d.sensors, sensors)) {
        d = d.resampled(sensors);
      } else {
        d.sensors = sensors;
      }
      auto problem = std::make_shared<const LowerProblem>(T.fem, std::move(d), alpha, opts.lower);
      ModelResult& mr = ev.models[i];
      mr.problem = problem;
      mr.lower = lbfgs_minimize(*problem, starts[i]);
      mr.error_sq = (T.models[i] - mr.lower.m).squaredNorm();
      if (with_gradient) {
        mr.pcg = solve_rho(*problem, mr.lower.cache, T.models[i], *pre, opts.pcg);
        mr.rho = mr.pcg.x;
        mr.grad_p = grad_psi_positions(*problem, *mr.lower.cache, mr.rho);
        mr.grad_alpha = grad_psi_alpha(*problem, mr.lower.m, mr.rho);
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (int i = 0; i < nm; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      throw Error("training model " + std::to_string(i) + ": " + e.what());
    }
  }

  double s = 0.0;
  for (const auto& mr : ev.models) s += mr.error_sq;
  ev.psi = s / (2.0 * nm);
  if (with_gradient) {
    ev.grad_p = Mat::Zero(sensors.size(), 2);
    for (const auto& mr : ev.models) {
      ev.grad_p += mr.grad_p;
      ev.grad_alpha += mr.grad_alpha;
    }
    ev.grad_p /= nm;
    ev.grad_alpha /= nm;
  }
  ev.solves = solve_count() - before;
  return ev;
}

BilevelState make_state(std::shared_ptr<const SensorParametrisation> param, const Vec& theta0, double alpha0,
                        const Vec& m0, int num_models, const Grid& grid, double mu) {
  if (!(alpha0 > 0.0)) throw InvalidArgument("make_state: alpha0 must be positive");
  BilevelState s;
  s.param = std::move(param);
  s.theta = theta0;
  s.alpha = alpha0;
  s.recon.assign(num_models, m0);
  s.P2 = build_P2(grid, alpha0, mu);
  return s;
}

namespace {

struct PendingEval {
  SolveCounts solves;
  std::vector<Vec> recon;
  long lower = 0;
  long cg = 0;
};

void move_to_line_search(const SolveCounts& c) {
  for (SolvePhase p : {SolvePhase::Lower, SolvePhase::CG, SolvePhase::Tau})
    solve_counter().transfer(p, SolvePhase::LineSearch, c[p]);
}

nlohmann::json sensors_json(const SensorSet& s) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& p : s.points()) a.push_back({p.x, p.z});
  return a;
}

nlohmann::json counts_json(const SolveCounts& c) {
  return {{"lower", c[SolvePhase::Lower]}, {"line_search", c[SolvePhase::LineSearch]},
          {"cg", c[SolvePhase::CG]},       {"tau", c[SolvePhase::Tau]},
          {"total", c.total()}};
}

}  // namespace

GroupResult optimise_group(BilevelState& state, const TrainingSet& T, const FrequencyGroup& group,
                           const UpperOptions& opts) {
  T.validate();
  const int nt = state.param->size();
  const bool with_alpha = group.optimise_alpha;
  const int nx = nt + (with_alpha ? 1 : 0);
  Vec lo(nx), hi(nx), x0(nx);
  lo.head(nt) = state.param->lower();
  hi.head(nt) = state.param->upper();
  x0.head(nt) = state.theta;
  if (with_alpha) {
    lo[nt] = std::log(opts.alpha_lo);
    hi[nt] = std::log(opts.alpha_hi);
    x0[nt] = std::log(state.alpha);
  }
  auto alpha_of = [&](const Vec& x) { return with_alpha ? std::exp(x[nt]) : state.alpha; };

  std::vector<PendingEval> pending;
  bool started = false;
  auto accept = [&](const PendingEval& p) {
    state.recon = p.recon;
    state.ledger.upper += 1;
    state.ledger.lower += p.lower;
    state.ledger.cg += p.cg;
    state.ledger.model_evals += T.size();
  };

  ObjectiveFn fn = [&](const Vec& x, Vec& g) {
    const double alpha = alpha_of(x);
    const UpperEvaluation ev = evaluate_upper(T, state.param->sensors(x.head(nt)), alpha, group.omegas,
                                              state.recon, opts, true, &state.P2);
    PendingEval p;
    p.solves = ev.solves;
    for (const auto& mr : ev.models) {
      p.recon.push_back(mr.lower.m);
      p.lower += mr.lower.accepted_evaluations;
      p.cg += mr.pcg.products;
    }
    g.resize(nx);
    g.head(nt) = state.param->pullback(ev.grad_p);
    if (with_alpha) g[nt] = alpha * ev.grad_alpha;
    if (!started) {
      started = true;
      accept(p);
    } else {
      pending.push_back(std::move(p));
    }
    return ev.psi;
  };

  StepHooks hooks;
  hooks.on_accept = [&](int) {
    for (std::size_t i = 0; i + 1 < pending.size(); ++i) move_to_line_search(pending[i].solves);
    if (!pending.empty()) accept(pending.back());
    pending.clear();
  };
  hooks.on_reject = [&](int) {
    for (const auto& p : pending) move_to_line_search(p.solves);
    pending.clear();
  };

  IterationLog log;
  if (opts.log) {
    log = [&](int iter, const Vec& x, double f, double pg) {
      nlohmann::json j = {{"iter", iter},
                          {"psi", f},
                          {"pg_norm", pg},
                          {"alpha", alpha_of(x)},
                          {"sensors", sensors_json(state.param->sensors(x.head(nt)))},
                          {"solves", counts_json(solve_count())},
                          {"rule", nullptr}};
      *opts.log << j.dump() << '\n';
    };
  }

  GroupResult gr;
  gr.opt = bounded_lbfgs_minimize(fn, x0, lo, hi, opts.bounded, hooks, log);
  gr.rule = gr.opt.rule;
  gr.iterations = gr.opt.iterations;
  state.theta = gr.opt.x.head(nt);
  state.alpha = alpha_of(gr.opt.x);
  state.psi = gr.opt.f;
  state.ledger.solves = solve_count();
  if (opts.log) {
    nlohmann::json j = {{"iter", gr.iterations},   {"psi", state.psi}, {"alpha", state.alpha},
                        {"sensors", sensors_json(state.sensors())}, {"solves", counts_json(solve_count())},
                        {"rule", to_string(gr.rule)}};
    *opts.log << j.dump() << '\n';
  }
  return gr;
}

ContinuationResult frequency_continuation(const TrainingSet& T, const FrequencySchedule& schedule,
                                          BilevelState start, const UpperOptions& opts) {
  schedule.validate();
  ContinuationResult res;
  res.state = std::move(start);
  for (std::size_t g = 0; g < schedule.groups.size(); ++g) {
    try {
      res.groups.push_back(optimise_group(res.state, T, schedule.groups[g], opts));
    } catch (const std::exception& e) {
      throw Error("frequency group " + std::to_string(g) + ": " + e.what());
    }
  }
  return res;
}

long predicted_solve_count(long n_upper, long n_lower, long n_cg, long n_data) {
  if (n_upper < 0 || n_lower < 0 || n_cg < 0 || n_data < 0)
    throw InvalidArgument("predicted_solve_count: counts must be nonnegative");
  return n_upper * (2 * n_lower + 2 * n_cg + 1) * n_data;
}

}  // namespace bfwi
