#include "doctest.h"
#include "oracles.hpp"

#include <sstream>

using namespace bfwi;

namespace {

SensorSet free_z(const std::vector<Point>& pts, double zlo, double zhi) {
  SensorSet s;
  for (const auto& p : pts) {
    SensorSet::Sensor q;
    q.p = p;
    q.frozen = {true, false};
    q.lo = {p.x, zlo};
    q.hi = {p.x, zhi};
    s.sensors.push_back(q);
  }
  return s;
}

// Model invariant under the half turn (x, z) -> (1 - x, 1 - z), which also maps the mesh onto itself.
Vec symmetric_model(const Grid& g, double phase) {
  Vec m(g.size());
  for (int k = 0; k < g.size(); ++k) {
    const double x = g.node(k).x, z = g.node(k).z;
    auto f = [&](double a, double b) { return 0.05 * std::sin(3 * a + phase) * std::cos(2 * b - phase) + 0.04 * a; };
    m[k] = 0.3 + f(x, z) + f(1 - x, 1 - z);
  }
  return m;
}

struct Bench {
  TrainingSet T;
  SensorSet sensors;
  std::vector<double> omegas{5.0, 8.0};
  std::vector<Point> sources{{0.12, 0.3}, {0.88, 0.7}};
  UpperOptions opts;
  Vec m0;

  explicit Bench(int n, double grad_tol = 1e-12) {
    const Grid g = build_grid(n, n, 1.0, 1.0);
    T.fem = std::make_shared<const FemOperators>(g);
    sensors = free_z({{0.5, 0.23}, {0.5, 0.47}, {0.5, 0.81}}, 0.05, 0.95);
    for (double ph : {0.0, 0.9}) {
      T.models.push_back(symmetric_model(g, ph));
      T.data.push_back(generate_data(g, T.models.back(), sensors, omegas, sources, 1, ExecPolicy::Serial));
    }
    opts.lower.mu = 1e-4;
    opts.lower.grad_tol = grad_tol;
    opts.lower.policy = ExecPolicy::Serial;
    m0 = Vec::Constant(g.size(), 0.3);
  }

  std::vector<Vec> starts() const { return std::vector<Vec>(T.size(), m0); }

  UpperEvaluation eval(const SensorSet& s, double alpha, bool grad) const {
    return evaluate_upper(T, s, alpha, omegas, starts(), opts, grad);
  }
};

}  // namespace

TEST_CASE("psi arithmetic") {
  std::vector<Vec> a{Vec::Ones(3), Vec::Zero(3)}, b{Vec::Ones(3), Vec::Ones(3)};
  CHECK(psi_value(a, a) == 0.0);
  CHECK(psi_value(a, b) == doctest::Approx(3.0 / 4.0));
  CHECK_THROWS_AS(psi_value(a, {}), InvalidArgument);
}

TEST_CASE("rho vanishes when the reconstruction is exact") {
  Bench B(6);
  const LowerProblem P(B.T.fem, B.T.data[0], 0.1, B.opts.lower);
  auto cache = std::make_shared<const LowerEvaluation>(P.evaluate(B.T.models[0], true));
  const PcgResult r = solve_rho(P, cache, B.T.models[0], Preconditioner::identity(), {1e-12, 0, true});
  CHECK(r.x.norm() == 0.0);
  CHECK(r.products == 0);
}

TEST_CASE("rho solves the Hessian system") {
  Bench B(7);
  const LowerProblem P(B.T.fem, B.T.data[0], 0.1, B.opts.lower);
  auto cache = std::make_shared<const LowerEvaluation>(P.evaluate(B.m0, true));
  const PcgResult r = solve_rho(P, cache, B.T.models[0], build_P2(P.grid(), 0.1, 1e-4), {1e-13, 0, true});
  CHECK(r.converged);
  const Vec rhs = B.T.models[0] - B.m0;
  const Vec Hr = HessianOperator(P, cache).apply(r.x, SolvePhase::Other);
  CHECK((Hr - rhs).norm() / rhs.norm() < 1e-11);
}

TEST_CASE("without sources and alpha = 0, rho = rhs / mu") {
  const Grid g = build_grid(5, 5, 1.0, 1.0);
  auto fem = std::make_shared<const FemOperators>(g);
  DataSet d;
  d.omegas = {3.0};
  d.sensors = SensorSet::fixed({{0.5, 0.5}});
  const LowerProblem P(fem, d, 0.0, {.mu = 0.25});
  const Vec m = Vec::Constant(g.size(), 0.3);
  auto cache = std::make_shared<const LowerEvaluation>(P.evaluate(m, true));
  const Vec mt = Vec::LinSpaced(g.size(), 0.2, 0.4);
  const PcgResult r = solve_rho(P, cache, mt, Preconditioner::identity(), {1e-14, 0, true});
  CHECK((r.x - (mt - m) / 0.25).norm() < 1e-12);
}

TEST_CASE("tau is linear in rho and solves A tau = rho g u") {
  Bench B(6);
  const LowerProblem P(B.T.fem, B.T.data[0], 0.1, B.opts.lower);
  const LowerEvaluation c = P.evaluate(B.m0, true);
  std::mt19937_64 rng(1);
  const Grid& g = P.grid();
  const Vec r1 = oracle::random_model(g, rng, -1, 1), r2 = oracle::random_model(g, rng, -1, 1);
  const int k = 3;  // omega 1, source 1
  const CVec t1 = tau_field(P, c, r1, k), t2 = tau_field(P, c, r2, k);
  CHECK((tau_field(P, c, 2 * r1 - r2, k) - (2 * t1 - t2)).norm() < 1e-12 * t1.norm());
  const double w = B.omegas[1];
  const CVec gc = g_coefficients(P.fem(), B.m0, w);
  const CVec rhs = (r1.cast<Complex>().array() * gc.array() * c.u[k].array()).matrix();
  CHECK((oracle::dense_A(g, B.m0, w) * t1 - rhs).norm() / rhs.norm() < 1e-12);
}

TEST_CASE("upper-level gradients match finite differences") {
  Bench B(8);
  const double alpha = 0.05;
  const UpperEvaluation e = B.eval(B.sensors, alpha, true);
  for (const auto& mr : e.models) CHECK(mr.lower.grad_norm < 1e-10);
  CHECK(e.grad_p.col(0).norm() == 0.0);  // x frozen

  SUBCASE("positions") {
    const double h = 1e-4;
    for (int j = 0; j < 3; ++j) {
      SensorSet sp = B.sensors, sm = B.sensors;
      sp.sensors[j].p.z += h;
      sm.sensors[j].p.z -= h;
      const double fd = (B.eval(sp, alpha, false).psi - B.eval(sm, alpha, false).psi) / (2 * h);
      CHECK(std::abs(fd - e.grad_p(j, 1)) <= 1e-3 * e.grad_p.cwiseAbs().maxCoeff());
    }
  }
  SUBCASE("alpha") {
    const double h = 1e-4 * alpha;
    const double fd = (B.eval(B.sensors, alpha + h, false).psi - B.eval(B.sensors, alpha - h, false).psi) / (2 * h);
    CHECK(std::abs(fd - e.grad_alpha) <= 1e-3 * std::abs(e.grad_alpha));
  }
}

TEST_CASE("a loose lower-level tolerance spoils the gradient") {
  const double alpha = 0.05, h = 1e-4;
  auto grad_error = [&](double tol) {
    Bench B(8, tol);
    const UpperEvaluation e = B.eval(B.sensors, alpha, true);
    Bench F(8, 1e-12);
    SensorSet sp = F.sensors, sm = F.sensors;
    sp.sensors[1].p.z += h;
    sm.sensors[1].p.z -= h;
    const double fd = (F.eval(sp, alpha, false).psi - F.eval(sm, alpha, false).psi) / (2 * h);
    return std::abs(fd - e.grad_p(1, 1)) / std::abs(fd);
  };
  const double tight = grad_error(1e-12), loose = grad_error(1e-4);
  MESSAGE("relative gradient error: tight " << tight << ", loose " << loose);
  CHECK(tight < 1e-3);
  CHECK(loose > 10 * tight);
}

TEST_CASE("half-turn symmetry flips the position gradient") {
  Bench B(8);
  const SensorSet a = free_z({{0.37, 0.29}, {0.41, 0.62}}, 0.05, 0.95);
  const SensorSet b = free_z({{0.63, 0.71}, {0.59, 0.38}}, 0.05, 0.95);
  // training data were generated at other sensors: resampling is exercised too
  const UpperEvaluation ea = B.eval(a, 0.05, true), eb = B.eval(b, 0.05, true);
  CHECK(std::abs(ea.psi - eb.psi) <= 1e-8 * ea.psi);
  for (int j = 0; j < 2; ++j)
    CHECK(std::abs(ea.grad_p(j, 1) + eb.grad_p(j, 1)) <= 1e-5 * ea.grad_p.cwiseAbs().maxCoeff());
}

TEST_CASE("predicted solve count") {
  CHECK(predicted_solve_count(2, 3, 4, 5) == 150);
  CHECK(predicted_solve_count(0, 3, 4, 5) == 0);
  CHECK_THROWS_AS(predicted_solve_count(1, -1, 0, 1), InvalidArgument);
}

TEST_CASE("instrumented solves match the cost model") {
  Bench B(7, 1e-10);
  const long nd = static_cast<long>(B.sources.size() * B.omegas.size());
  const UpperEvaluation e = B.eval(B.sensors, 0.1, true);
  long expected = 0;
  for (const auto& mr : e.models) expected += predicted_solve_count(1, mr.lower.accepted_evaluations, mr.pcg.products, nd);
  CHECK(e.solves[SolvePhase::Lower] + e.solves[SolvePhase::CG] + e.solves[SolvePhase::Tau] == expected);

  SUBCASE("over an optimisation run") {
    auto param = std::make_shared<const SensorParametrisation>(SensorParametrisation::free_coordinates(B.sensors));
    BilevelState st = make_state(param, param->theta_of(B.sensors), 0.1, B.m0, B.T.size(), B.T.fem->grid, 1e-4);
    B.opts.bounded.max_iter = 3;
    std::ostringstream log;
    B.opts.log = &log;
    const SolveCounts c0 = solve_count();
    const GroupResult gr = optimise_group(st, B.T, {B.omegas, true}, B.opts);
    const SolveCounts c = solve_count() - c0;
    const long measured = c[SolvePhase::Lower] + c[SolvePhase::CG] + c[SolvePhase::Tau];
    CHECK(measured == (2 * st.ledger.lower + 2 * st.ledger.cg + st.ledger.model_evals) * nd);
    CHECK(st.ledger.upper == gr.iterations + 1);
    CHECK(st.psi <= e.psi);
    const std::string text = log.str();
    CHECK(std::count(text.begin(), text.end(), '\n') >= 2);
  }
}

TEST_CASE("continuation over one group equals a single group run") {
  Bench B(6, 1e-10);
  B.opts.bounded.max_iter = 2;
  auto param = std::make_shared<const SensorParametrisation>(SensorParametrisation::free_coordinates(B.sensors));
  const BilevelState s0 = make_state(param, param->theta_of(B.sensors), 0.1, B.m0, B.T.size(), B.T.fem->grid, 1e-4);
  BilevelState s1 = s0;
  FrequencySchedule sched;
  sched.groups = {{B.omegas, true}};
  const ContinuationResult cr = frequency_continuation(B.T, sched, s0, B.opts);
  optimise_group(s1, B.T, sched.groups[0], B.opts);
  CHECK(cr.state.psi == s1.psi);
  CHECK(cr.state.alpha == s1.alpha);
  CHECK((cr.state.theta - s1.theta).norm() == 0.0);
}

TEST_CASE("frequency schedules") {
  const FrequencySchedule s = FrequencySchedule::from_hz({{0.5}, {0.5, 1.5}});
  CHECK(s.groups.size() == 2);
  CHECK_FALSE(s.groups[0].optimise_alpha);
  CHECK(s.groups[1].optimise_alpha);
  CHECK(s.groups[0].omegas[0] == doctest::Approx(3.14159265358979));
  CHECK_THROWS_AS(FrequencySchedule::from_hz({{1.5}, {0.5}}), InvalidArgument);
  CHECK_THROWS_AS(FrequencySchedule::from_hz({{}}), InvalidArgument);
  CHECK_THROWS_AS(FrequencySchedule{}.validate(), InvalidArgument);
}

TEST_CASE("sensor parametrisations") {
  const auto tri = SensorParametrisation::symmetric_triplet(0.9, 0.5, 0.0, 1.0);
  Vec th(1);
  th << 0.4;
  const SensorSet s = tri.sensors(th);
  CHECK(s.sensors[0].p.z == doctest::Approx(0.3));
  CHECK(s.sensors[1].p.z == doctest::Approx(0.5));
  CHECK(s.sensors[2].p.z == doctest::Approx(0.7));
  CHECK(tri.theta_of(s)[0] == doctest::Approx(0.4));
  Mat gp = Mat::Zero(3, 2);
  gp(0, 1) = 1.0;
  gp(2, 1) = 3.0;
  CHECK(tri.pullback(gp)[0] == doctest::Approx(1.0));

  const SensorSet f = free_z({{0.2, 0.3}, {0.4, 0.6}}, 0.1, 0.9);
  const auto fc = SensorParametrisation::free_coordinates(f);
  CHECK(fc.size() == 2);
  CHECK(fc.lower()[1] == 0.1);
  const SensorSet back = fc.sensors(fc.theta_of(f));
  CHECK(back.sensors[1].p.x == doctest::Approx(0.4));
  CHECK(back.sensors[1].p.z == doctest::Approx(0.6));

  SensorSet frozen = f;
  for (auto& s : frozen.sensors) s.frozen = {true, true};
  const auto none = SensorParametrisation::free_coordinates(frozen);
  CHECK(none.size() == 0);
  CHECK(none.theta_of(frozen).size() == 0);
  CHECK(none.sensors(Vec(0)).sensors[1].p.z == 0.6);
}

TEST_CASE("training set validation") {
  TrainingSet T;
  CHECK_THROWS_AS(T.validate(), InvalidArgument);
  Bench B(5);
  T = B.T;
  T.models[1][0] = -1.0;
  CHECK_THROWS_AS(T.validate(), InvalidArgument);
}
