#include "bfwi/fwi_lower.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bfwi {

void DataSet::validate() const {
  if (static_cast<int>(readings.size()) != num_pairs())
    throw InvalidArgument("DataSet: expected " + std::to_string(num_pairs()) + " reading vectors, got " +
                          std::to_string(readings.size()));
  for (const auto& r : readings)
    if (r.size() != sensors.size()) throw InvalidArgument("DataSet: reading length differs from sensor count");
  if (has_reference() && static_cast<int>(reference.size()) != num_pairs())
    throw InvalidArgument("DataSet: reference fields not aligned with readings");
  for (double w : omegas)
    if (!(w > 0.0)) throw InvalidArgument("DataSet: frequencies must be positive");
}

DataSet DataSet::resampled(const SensorSet& new_sensors) const {
  if (!has_reference()) throw InvalidArgument("DataSet::resampled: no reference wavefields");
  DataSet out = *this;
  out.sensors = new_sensors;
  for (int k = 0; k < num_pairs(); ++k) {
    const RestrictionStencil st(reference[k]->grid, new_sensors);
    out.readings[k] = st.restrict(reference[k]->u);
  }
  return out;
}

CVec DataSet::reading_derivative(int k, Axis axis) const {
  if (!has_reference()) throw InvalidArgument("DataSet::reading_derivative: no reference wavefields");
  const RestrictionStencil st(reference[k]->grid, sensors);
  return st.derivative(reference[k]->u, axis);
}

DataSet DataSet::with_omegas(const std::vector<double>& keep) const {
  DataSet out;
  out.sources = sources;
  out.sensors = sensors;
  for (double w : keep) {
    const auto it = std::find(omegas.begin(), omegas.end(), w);
    if (it == omegas.end()) throw InvalidArgument("DataSet::with_omegas: frequency not in the data set");
    const int wi = static_cast<int>(it - omegas.begin());
    out.omegas.push_back(w);
    for (int s = 0; s < num_sources(); ++s) {
      out.readings.push_back(readings[pair(wi, s)]);
      if (has_reference()) out.reference.push_back(reference[pair(wi, s)]);
    }
  }
  return out;
}

LowerProblem::LowerProblem(std::shared_ptr<const FemOperators> fem, DataSet data, double alpha, LowerOptions opts)
    : fem_(std::move(fem)), data_(std::move(data)), opts_(opts), reg_(fem_->grid, alpha, opts.mu),
      stencil_(fem_->grid, data_.sensors) {
  data_.validate();
  sources_rhs_.reserve(data_.sources.size());
  for (const auto& s : data_.sources) sources_rhs_.push_back(point_source_rhs(fem_->grid, s));
}

LowerEvaluation LowerProblem::evaluate(const Vec& m, bool with_gradient, SolvePhase phase) const {
  const int n = size();
  if (m.size() != n) throw InvalidArgument("LowerProblem::evaluate: model size mismatch");
  for (int k = 0; k < n; ++k)
    if (!(m[k] > 0.0)) throw InvalidArgument("LowerProblem::evaluate: model must be positive");

  const bool par = opts_.policy == ExecPolicy::Parallel;
  const int nw = data_.num_omegas();
  const int ns = data_.num_sources();
  const int np = data_.num_pairs();

  LowerEvaluation ev;
  ev.m = m;
  ev.factorizations.resize(nw);
  ev.u.resize(np);
  ev.residual.resize(np);
  if (with_gradient) ev.lambda.resize(np);

#pragma omp parallel for schedule(dynamic) if (par)
  for (int w = 0; w < nw; ++w)
    ev.factorizations[w] = std::make_shared<const HelmholtzFactorization>(*fem_, m, data_.omegas[w]);

  std::vector<double> misfit(np, 0.0);
  std::vector<Vec> contrib(with_gradient ? np : 0);
#pragma omp parallel for schedule(dynamic) if (par)
  for (int k = 0; k < np; ++k) {
    const int w = k / ns;
    const int s = k % ns;
    const auto& fact = *ev.factorizations[w];
    ev.u[k] = fact.solve_forward(sources_rhs_[s], phase);
    ev.residual[k] = data_.readings[k] - stencil_.restrict(ev.u[k]);
    misfit[k] = 0.5 * ev.residual[k].squaredNorm();
    if (with_gradient) {
      ev.lambda[k] = fact.solve_adjoint(stencil_.adjoint(ev.residual[k]), phase);
      const CVec g = g_coefficients(*fem_, m, data_.omegas[w]);
      contrib[k] = -(g.array() * ev.u[k].array() * ev.lambda[k].array().conjugate()).real().matrix();
    }
  }

  ev.reg = reg_.energy(m);
  for (double v : misfit) ev.misfit += v;
  ev.f = ev.misfit + ev.reg;
  if (with_gradient) {
    ev.grad = reg_.apply(m);
    for (const auto& c : contrib) ev.grad += c;
  }
  return ev;
}

double LowerProblem::objective(const Vec& m, SolvePhase phase) const { return evaluate(m, false, phase).f; }

Vec LowerProblem::gradient(const Vec& m, SolvePhase phase) const { return evaluate(m, true, phase).grad; }

double positivity_step_max(const Vec& x, const Vec& p) {
  double t = std::numeric_limits<double>::infinity();
  for (int k = 0; k < x.size(); ++k)
    if (p[k] < 0.0) t = std::min(t, -x[k] / p[k]);
  return 0.99 * t;
}

LowerSolveReport lbfgs_minimize(const LowerProblem& problem, const Vec& start) {
  const LowerOptions& o = problem.options();
  const long per_eval = 2L * problem.data().num_pairs();
  const SolveCounts before = solve_count();

  std::shared_ptr<const LowerEvaluation> latest, accepted;
  ObjectiveFn fn = [&](const Vec& x, Vec& g) {
    for (int k = 0; k < x.size(); ++k)
      if (!(x[k] > 0.0)) {
        g = Vec::Zero(x.size());
        return std::numeric_limits<double>::infinity();
      }
    latest = std::make_shared<const LowerEvaluation>(problem.evaluate(x, true, SolvePhase::Lower));
    if (!accepted) accepted = latest;  // start point
    g = latest->grad;
    return latest->f;
  };

  int accepted_evals = 0;
  StepHooks hooks;
  hooks.on_accept = [&](int evals) {
    solve_counter().transfer(SolvePhase::Lower, SolvePhase::LineSearch, per_eval * (evals - 1));
    accepted = latest;
    ++accepted_evals;
  };
  hooks.on_reject = [&](int evals) {
    solve_counter().transfer(SolvePhase::Lower, SolvePhase::LineSearch, per_eval * evals);
  };
  hooks.step_max = positivity_step_max;

  LbfgsOptions lo;
  lo.memory = o.memory;
  lo.grad_tol = o.grad_tol;
  lo.max_iter = o.max_iter;
  lo.wolfe = o.wolfe;
  // first trial moves the model by at most 5% of its smallest entry
  lo.first_step = 0.05 * start.minCoeff();

  const OptimResult r = lbfgs_minimize(fn, start, lo, hooks);

  LowerSolveReport rep;
  rep.m = r.x;
  rep.f = r.f;
  rep.grad_norm = r.grad.norm();
  rep.iterations = r.iterations;
  rep.evaluations = r.evaluations;
  rep.accepted_evaluations = accepted_evals + 1;
  rep.status = r.status;
  rep.f_history = r.f_history;
  rep.cache = accepted;
  rep.solves = solve_count() - before;
  return rep;
}

}  // namespace bfwi
