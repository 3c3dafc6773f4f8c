// bfwi: forward solves, FWI, bilevel learning, cross validation, preconditioner
// benchmark and finite-difference checks.

#include <omp.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>

#include "bfwi/data_gen.hpp"
#include "bfwi/experiments.hpp"
#include "bfwi/metrics.hpp"

namespace fs = std::filesystem;
using namespace bfwi;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out;
};

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = load_config(c.config, c.overrides);
  if (c.seed) cfg.seed = *c.seed;
  if (c.threads) cfg.threads = *c.threads;
  if (c.out) cfg.out = *c.out;
  cfg.validate();
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
  fs::create_directories(cfg.out);
  std::ofstream(fs::path(cfg.out) / "config.json") << to_json(cfg).dump(2) << '\n';
  return cfg;
}

int slice_index(const Experiment& ex, int slice) {
  if (slice < 1 || slice > ex.num_slices())
    throw InvalidArgument("slice must be in 1.." + std::to_string(ex.num_slices()));
  return slice - 1;
}

void write_vec(const fs::path& path, const Grid& g, const Vec& v) { write_gnuplot_matrix(path.string(), g, v); }

int cmd_forward(const Common& c, int slice, double freq_hz, int source) {
  const ExperimentConfig cfg = resolve(c);
  const Experiment ex = build_experiment(cfg);
  const int s = slice_index(ex, slice);
  if (source < 1 || source > static_cast<int>(ex.sources.size())) throw InvalidArgument("source out of range");
  const Grid& g = ex.fem->grid;
  const double w = omega_from_hz(freq_hz);
  const HelmholtzFactorization fact(*ex.fem, ex.slices[s].m, w);
  const CVec u = fact.solve_forward(point_source_rhs(g, ex.sources[source - 1]), SolvePhase::Other);
  const fs::path out(cfg.out);
  write_vec(out / "field_re.dat", g, u.real());
  write_vec(out / "field_im.dat", g, u.imag());
  write_vec(out / "field_abs.dat", g, u.cwiseAbs());
  const RestrictionStencil st(g, ex.sensors0.points());
  const CVec r = st.restrict(u);
  std::ofstream csv(out / "readings.csv");
  csv << std::setprecision(17) << "sensor,x,z,re,im\n";
  const auto pts = ex.sensors0.points();
  for (int j = 0; j < r.size(); ++j)
    csv << j + 1 << ',' << pts[j].x << ',' << pts[j].z << ',' << r[j].real() << ',' << r[j].imag() << '\n';
  std::cout << "forward: slice " << slice << ", " << freq_hz << " Hz, source " << source << ", max |u| "
            << u.cwiseAbs().maxCoeff() << '\n';
  return 0;
}

int cmd_fwi(const Common& c, int slice, std::optional<double> alpha) {
  const ExperimentConfig cfg = resolve(c);
  const Experiment ex = build_experiment(cfg);
  const int s = slice_index(ex, slice);
  const SliceEvaluation ev = evaluate_slice(ex, s, ex.sensors0, alpha.value_or(cfg.alpha0));
  const fs::path out(cfg.out);
  write_model((out / "recon.txt").string(), {ex.fem->grid, ev.recon});
  write_vec(out / "recon.dat", ex.fem->grid, ev.recon);
  write_vec(out / "re_map.dat", ex.fem->grid, ev.re_map);
  const nlohmann::json j{{"slice", slice}, {"alpha", alpha.value_or(cfg.alpha0)}, {"mre", ev.mre},
                         {"ssim", ev.ssim}, {"psi", ev.psi}};
  std::ofstream(out / "metrics.json") << j.dump(2) << '\n';
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_bilevel(const Common& c, const std::string& strategy, int test_slice) {
  const ExperimentConfig cfg = resolve(c);
  const Experiment ex = build_experiment(cfg);
  std::vector<int> train;
  for (int s = 0; s < ex.num_slices(); ++s)
    if (s + 1 != test_slice) train.push_back(s);
  if (train.empty()) throw InvalidArgument("no training slices left");
  const fs::path out(cfg.out);
  std::ofstream log(out / "bilevel_log.jsonl");
  const TrainingSet T = make_training_set(ex, train);
  const LearnedParams lp = learn(ex, T, parse_strategy(strategy), &log);
  nlohmann::json sens = nlohmann::json::array();
  for (const auto& p : lp.sensors.points()) sens.push_back({p.x, p.z});
  nlohmann::json j{{"strategy", strategy}, {"alpha", lp.alpha}, {"sensors", sens}, {"psi_train", lp.psi},
                   {"solves", lp.ledger.solves.total()}, {"upper_evaluations", lp.ledger.upper}};
  if (test_slice > 0) {
    const int s = slice_index(ex, test_slice);
    const SliceEvaluation before = evaluate_slice(ex, s, ex.sensors0, cfg.alpha0);
    const SliceEvaluation after = evaluate_slice(ex, s, lp.sensors, lp.alpha);
    j["test"] = {{"slice", test_slice},   {"mre0", before.mre}, {"mre", after.mre},
                 {"ssim0", before.ssim},  {"ssim", after.ssim}, {"psi0", before.psi},
                 {"psi_opt", after.psi}, {"if", improvement_factor(before.psi, after.psi)}};
    write_vec(out / "recon_before.dat", ex.fem->grid, before.recon);
    write_vec(out / "recon_after.dat", ex.fem->grid, after.recon);
  }
  std::ofstream(out / "learned.json") << j.dump(2) << '\n';
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_xval(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  const Experiment ex = build_experiment(cfg);
  const CrossValidationResult r = run_cross_validation(ex, cfg.out, &std::cerr);
  write_metrics_csv(std::cout, r.rows);
  for (const auto& f : r.failures) std::cerr << "failed: " << f << '\n';
  return r.failures.empty() ? 0 : 1;
}

int cmd_bench_precon(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  const Experiment ex = build_experiment(cfg);
  SensorSet far = ex.sensors0;
  for (auto& s : far.sensors) s.p.z = cfg.width_z - s.p.z;
  const auto rows = run_precon_benchmark(ex, ex.sensors0, ex.sensors0, far);
  std::ofstream csv(fs::path(cfg.out) / "precon.csv");
  write_precon_csv(csv, rows);
  write_precon_csv(std::cout, rows);
  return 0;
}

// Finite-difference suites on a small layered instance.
int cmd_gradcheck(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  const Model lay = layered_model(12, 10, 1.2, 1.0, 1.0);
  const Grid& g = lay.grid;
  auto fem = std::make_shared<const FemOperators>(g);
  SensorSet sensors;
  for (double z : {0.2, 0.45, 0.8}) {
    SensorSet::Sensor s;
    s.p = {1.1, z};
    s.frozen = {true, false};
    s.lo = {1.1, 0.05};
    s.hi = {1.1, 0.95};
    sensors.sensors.push_back(s);
  }
  const std::vector<double> om{3.0, 6.0};
  const std::vector<Point> src{{0.1, 0.3}, {0.1, 0.7}};
  const Vec m0 = linear_velocity_model(g, 0.9 * std::sqrt(1.0 / lay.m.maxCoeff()), 1.1 * std::sqrt(1.0 / lay.m.minCoeff()));
  DataSet data = generate_data(g, lay.m, sensors, om, src, cfg.refine);
  const double alpha = 0.05;
  LowerOptions lo;
  lo.mu = cfg.mu;
  lo.grad_tol = 1e-12;
  const LowerProblem P(fem, data, alpha, lo);

  std::mt19937_64 rng(cfg.seed);
  bool ok = true;
  auto report = [&](const std::string& name, double err, double tol) {
    const bool pass = err < tol;
    ok = ok && pass;
    std::cout << (pass ? "PASS  " : "FAIL  ") << name << ": " << err << " (tol " << tol << ")\n";
  };

  {  // lower gradient, 20 components
    const Vec gr = P.gradient(m0);
    std::uniform_int_distribution<int> K(0, P.size() - 1);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      const int k = K(rng);
      const double h = 1e-6 * m0[k];
      Vec mp = m0, mm = m0;
      mp[k] += h;
      mm[k] -= h;
      const double fd = (P.objective(mp) - P.objective(mm)) / (2 * h);
      worst = std::max(worst, std::abs(fd - gr[k]) / std::max(std::abs(gr[k]), 1e-3 * gr.cwiseAbs().maxCoeff()));
    }
    report("lower gradient", worst, 1e-6);
  }
  {  // Hessian-vector product
    auto cache = std::make_shared<const LowerEvaluation>(P.evaluate(m0, true));
    const HessianOperator H(P, cache);
    std::normal_distribution<double> N;
    Vec v(P.size());
    for (auto& x : v) x = N(rng);
    const Vec Hv = H.apply(v);
    const double h = 1e-6 * m0.norm() / v.norm();
    const Vec fd = (P.gradient(m0 + h * v) - P.gradient(m0 - h * v)) / (2 * h);
    report("Hessian-vector product", (fd - Hv).norm() / Hv.norm(), 1e-5);
  }
  {  // upper gradients
    TrainingSet T;
    T.fem = fem;
    T.models = {lay.m};
    T.data = {data};
    UpperOptions uo;
    uo.lower = lo;
    const std::vector<Vec> start{m0};
    auto psi = [&](const SensorSet& s, double a) { return evaluate_upper(T, s, a, om, start, uo, false).psi; };
    const UpperEvaluation e = evaluate_upper(T, sensors, alpha, om, start, uo, true);
    double worst = 0.0;
    for (int j = 0; j < sensors.size(); ++j) {
      SensorSet sp = sensors, sm = sensors;
      sp.sensors[j].p.z += 1e-4;
      sm.sensors[j].p.z -= 1e-4;
      const double fd = (psi(sp, alpha) - psi(sm, alpha)) / 2e-4;
      worst = std::max(worst, std::abs(fd - e.grad_p(j, 1)) / std::abs(fd));
    }
    report("upper gradient (positions)", worst, 1e-3);
    const double ha = 1e-4 * alpha;
    const double fd = (psi(sensors, alpha + ha) - psi(sensors, alpha - ha)) / (2 * ha);
    report("upper gradient (alpha)", std::abs(fd - e.grad_alpha) / std::abs(fd), 1e-3);
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bilevel learning of sensor positions and regularisation for frequency-domain FWI"};
  app.require_subcommand(1);
  Common c;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", c.config, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--set", c.overrides, "override, key=value (repeatable)")->take_all();
    sub->add_option("--seed", c.seed, "random seed");
    sub->add_option("--threads", c.threads, "OpenMP threads");
    sub->add_option("--out", c.out, "output directory");
  };

  int slice = 1, source = 1, test_slice = 0;
  double freq = 0.5;
  std::optional<double> alpha;
  std::string strategy = "both";

  auto* forward = app.add_subcommand("forward", "one Helmholtz solve on a slice");
  add_common(forward);
  forward->add_option("--slice", slice, "1-based slice");
  forward->add_option("--freq", freq, "frequency in Hz");
  forward->add_option("--source", source, "1-based source");

  auto* fwi = app.add_subcommand("fwi", "lower-level FWI on a slice with the starting sensors");
  add_common(fwi);
  fwi->add_option("--slice", slice, "1-based slice");
  fwi->add_option("--alpha", alpha, "regularisation weight (default alpha0)");

  auto* bilevel = app.add_subcommand("bilevel", "learn sensors and alpha");
  add_common(bilevel);
  bilevel->add_option("--strategy", strategy, "none, alpha, sensors or both");
  bilevel->add_option("--test-slice", test_slice, "1-based held-out slice (0: train on all)");

  auto* xval = app.add_subcommand("xval", "cross validation over slices");
  add_common(xval);
  auto* bench = app.add_subcommand("bench-precon", "PCG iteration counts with and without preconditioning");
  add_common(bench);
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference checks of every gradient");
  add_common(gradcheck);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*forward) return cmd_forward(c, slice, freq, source);
    if (*fwi) return cmd_fwi(c, slice, alpha);
    if (*bilevel) return cmd_bilevel(c, strategy, test_slice);
    if (*xval) return cmd_xval(c);
    if (*bench) return cmd_bench_precon(c);
    if (*gradcheck) return cmd_gradcheck(c);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
