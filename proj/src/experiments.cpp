#include "bfwi/experiments.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "bfwi/data_gen.hpp"
#include "bfwi/metrics.hpp"

namespace bfwi {

std::vector<Point> line_points(const Grid& g, const LineSpec& l) {
  std::vector<Point> pts;
  const double x = l.x_frac * g.width_x;
  for (int i = 0; i < l.count; ++i) {
    const double t = l.count == 1 ? 0.5 : static_cast<double>(i) / (l.count - 1);
    pts.push_back({x, (l.z_lo_frac + t * (l.z_hi_frac - l.z_lo_frac)) * g.width_z});
  }
  return pts;
}

Experiment build_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  Experiment ex;
  ex.cfg = cfg;
  const Model full = cfg.model_file.empty()
                         ? layered_model(cfg.n1, cfg.n2, cfg.width_x, cfg.width_z, cfg.smooth_cells)
                         : read_model(cfg.model_file);
  ex.slices = slice_model(full, cfg.slices);
  const Grid& g = ex.slices.front().grid;
  ex.fem = std::make_shared<const FemOperators>(g);
  ex.sources = line_points(g, cfg.sources);

  std::mt19937_64 rng(cfg.seed);
  const double zlo = cfg.sensors.z_lo_frac * g.width_z;
  const double zhi = cfg.sensors.z_hi_frac * g.width_z;
  std::uniform_real_distribution<double> depth(zlo, zhi);
  std::vector<double> zs(cfg.sensors.count);
  for (double& z : zs) z = depth(rng);
  std::sort(zs.begin(), zs.end());
  for (double z : zs) {
    SensorSet::Sensor s;
    s.p = {cfg.sensors.x_frac * g.width_x, z};
    s.frozen = {true, false};
    s.lo = {s.p.x, zlo};
    s.hi = {s.p.x, zhi};
    ex.sensors0.sensors.push_back(s);
  }
  ex.m0 = linear_velocity_model(g, cfg.c_top, cfg.c_bottom);
  ex.schedule = FrequencySchedule::from_hz(cfg.groups_hz);
  std::set<double> all;
  for (const auto& grp : ex.schedule.groups) all.insert(grp.omegas.begin(), grp.omegas.end());
  ex.all_omegas.assign(all.begin(), all.end());
  return ex;
}

TrainingSet make_training_set(const Experiment& ex, const std::vector<int>& ids) {
  TrainingSet T;
  T.fem = ex.fem;
  for (int id : ids) {
    if (id < 0 || id >= ex.num_slices()) throw InvalidArgument("make_training_set: slice id out of range");
    T.models.push_back(ex.slices[id].m);
    T.data.push_back(generate_data(ex.fem->grid, ex.slices[id].m, ex.sensors0, ex.all_omegas, ex.sources,
                                   ex.cfg.refine));
  }
  T.validate();
  return T;
}

UpperOptions upper_options(const ExperimentConfig& cfg) {
  UpperOptions o;
  o.lower.mu = cfg.mu;
  o.lower.grad_tol = cfg.lower_grad_tol;
  o.lower.max_iter = cfg.lower_max_iter;
  o.pcg.tol = cfg.pcg_tol;
  o.bounded.max_iter = cfg.upper_max_iter;
  o.bounded.pg_tol = cfg.upper_pg_tol;
  o.alpha_lo = cfg.alpha_lo;
  o.alpha_hi = cfg.alpha_hi;
  return o;
}

Strategy parse_strategy(const std::string& s) {
  if (s == "none") return Strategy::None;
  if (s == "alpha") return Strategy::Alpha;
  if (s == "sensors") return Strategy::Sensors;
  if (s == "both") return Strategy::Both;
  throw InvalidArgument("unknown strategy '" + s + "'");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::None: return "none";
    case Strategy::Alpha: return "alpha";
    case Strategy::Sensors: return "sensors";
    case Strategy::Both: return "both";
  }
  return "unknown";
}

LearnedParams learn(const Experiment& ex, const TrainingSet& T, Strategy strategy, std::ostream* log) {
  LearnedParams out;
  out.strategy = strategy;
  out.sensors = ex.sensors0;
  out.alpha = ex.cfg.alpha0;
  if (strategy == Strategy::None) return out;

  SensorSet base = ex.sensors0;
  if (strategy == Strategy::Alpha)
    for (auto& s : base.sensors) s.frozen = {true, true};
  auto param = std::make_shared<const SensorParametrisation>(SensorParametrisation::free_coordinates(base));
  FrequencySchedule schedule = ex.schedule;
  if (strategy == Strategy::Sensors)
    for (auto& g : schedule.groups) g.optimise_alpha = false;

  UpperOptions opts = upper_options(ex.cfg);
  opts.log = log;
  BilevelState state = make_state(param, param->theta_of(base), ex.cfg.alpha0, ex.m0, T.size(), ex.fem->grid,
                                  ex.cfg.mu);
  ContinuationResult res = frequency_continuation(T, schedule, std::move(state), opts);
  out.sensors = res.state.sensors();
  out.alpha = res.state.alpha;
  out.psi = res.state.psi;
  out.groups = std::move(res.groups);
  out.ledger = res.state.ledger;
  return out;
}

SliceEvaluation evaluate_slice(const Experiment& ex, int slice, const SensorSet& sensors, double alpha, bool noisy) {
  if (slice < 0 || slice >= ex.num_slices()) throw InvalidArgument("evaluate_slice: slice out of range");
  const Vec& truth = ex.slices[slice].m;
  DataSet data = generate_data(ex.fem->grid, truth, sensors, ex.all_omegas, ex.sources, ex.cfg.refine);
  if (noisy) data = add_noise(data, ex.cfg.noise_snr_db, ex.cfg.seed * 7919 + static_cast<std::uint64_t>(slice));
  LowerOptions lo = upper_options(ex.cfg).lower;
  Vec m = ex.m0;
  for (const auto& grp : ex.schedule.groups) {
    const LowerProblem problem(ex.fem, data.with_omegas(grp.omegas), alpha, lo);
    m = lbfgs_minimize(problem, m).m;
  }
  SliceEvaluation ev;
  ev.recon = m;
  ev.re_map = relative_error_map(m, truth);
  ev.mre = ev.re_map.mean();
  ev.ssim = ssim(ex.fem->grid, m, truth);
  ev.psi = 0.5 * (truth - m).squaredNorm();
  return ev;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << "test_slice,slice,role,strategy,mre0,mre,ssim0,ssim,psi0,psi_opt,if,alpha\n";
  out << std::setprecision(17);
  for (const auto& r : rows)
    out << r.test_slice << ',' << r.slice << ',' << r.role << ',' << r.strategy << ',' << r.mre0 << ',' << r.mre << ','
        << r.ssim0 << ',' << r.ssim << ',' << r.psi0 << ',' << r.psi_opt << ',' << r.improvement << ',' << r.alpha
        << '\n';
}

std::vector<MetricsRow> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("read_metrics_csv: missing header");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 12) throw InvalidArgument("read_metrics_csv: expected 12 fields in '" + line + "'");
    MetricsRow r;
    r.test_slice = std::stoi(f[0]);
    r.slice = std::stoi(f[1]);
    r.role = f[2];
    r.strategy = f[3];
    r.mre0 = std::stod(f[4]);
    r.mre = std::stod(f[5]);
    r.ssim0 = std::stod(f[6]);
    r.ssim = std::stod(f[7]);
    r.psi0 = std::stod(f[8]);
    r.psi_opt = std::stod(f[9]);
    r.improvement = std::stod(f[10]);
    r.alpha = std::stod(f[11]);
    rows.push_back(r);
  }
  return rows;
}

std::vector<MetricsRow> run_fold(const Experiment& ex, int test, const std::string& out_dir, std::ostream* log) {
  namespace fs = std::filesystem;
  if (ex.num_slices() < 2) throw InvalidArgument("run_fold: need at least two slices");
  if (test < 0 || test >= ex.num_slices()) throw InvalidArgument("run_fold: test slice out of range");
  std::vector<int> train;
  for (int s = 0; s < ex.num_slices(); ++s)
    if (s != test) train.push_back(s);
  const fs::path dir = fs::path(out_dir) / ("fold" + std::to_string(test + 1));
  fs::create_directories(dir);

  const TrainingSet T = make_training_set(ex, train);
  std::vector<SliceEvaluation> base;
  for (int s = 0; s < ex.num_slices(); ++s) base.push_back(evaluate_slice(ex, s, ex.sensors0, ex.cfg.alpha0));

  std::vector<MetricsRow> rows;
  for (const auto& name : ex.cfg.strategies) {
    const Strategy st = parse_strategy(name);
    std::ofstream jl(dir / (name + "_log.jsonl"));
    const LearnedParams lp = learn(ex, T, st, &jl);
    {
      std::ofstream pj(dir / (name + "_params.json"));
      nlohmann::json sens = nlohmann::json::array();
      for (const auto& p : lp.sensors.points()) sens.push_back({p.x, p.z});
      pj << nlohmann::json{{"alpha", lp.alpha}, {"sensors", sens}, {"psi_train", lp.psi}}.dump(2) << '\n';
    }
    for (int s = 0; s < ex.num_slices(); ++s) {
      const SliceEvaluation ev = st == Strategy::None ? base[s] : evaluate_slice(ex, s, lp.sensors, lp.alpha);
      MetricsRow r;
      r.test_slice = test + 1;
      r.slice = s + 1;
      r.role = s == test ? "test" : "train";
      r.strategy = name;
      r.mre0 = base[s].mre;
      r.mre = ev.mre;
      r.ssim0 = base[s].ssim;
      r.ssim = ev.ssim;
      r.psi0 = base[s].psi;
      r.psi_opt = ev.psi;
      r.improvement = improvement_factor(base[s].psi, ev.psi);
      r.alpha = lp.alpha;
      rows.push_back(r);
      const std::string stem = name + "_slice" + std::to_string(s + 1);
      write_gnuplot_matrix((dir / (stem + "_recon.dat")).string(), ex.fem->grid, ev.recon);
      write_gnuplot_matrix((dir / (stem + "_re.dat")).string(), ex.fem->grid, ev.re_map);
      if (log) *log << "fold " << test + 1 << " " << name << " slice " << s + 1 << ": MRE " << r.mre0 << " -> "
                    << r.mre << ", SSIM " << r.ssim0 << " -> " << r.ssim << ", IF " << r.improvement << '\n';
    }
  }
  std::ofstream csv(dir / "metrics.csv");
  write_metrics_csv(csv, rows);
  return rows;
}

CrossValidationResult run_cross_validation(const Experiment& ex, const std::string& out_dir, std::ostream* log) {
  if (ex.num_slices() < 2)
    throw InvalidArgument("config: cross validation needs two slices; testing would equal training");
  std::vector<int> tests;
  for (int s : ex.cfg.test_slices) tests.push_back(s - 1);
  if (tests.empty())
    for (int s = 0; s < ex.num_slices(); ++s) tests.push_back(s);
  CrossValidationResult res;
  for (int t : tests) {
    try {
      auto rows = run_fold(ex, t, out_dir, log);
      res.rows.insert(res.rows.end(), rows.begin(), rows.end());
    } catch (const std::exception& e) {
      res.failures.push_back("fold " + std::to_string(t + 1) + ": " + e.what());
      if (log) *log << "fold " << t + 1 << " failed: " << e.what() << '\n';
    }
  }
  std::filesystem::create_directories(out_dir);
  std::ofstream csv(std::filesystem::path(out_dir) / "metrics.csv");
  write_metrics_csv(csv, res.rows);
  return res;
}

std::vector<PreconBenchRow> run_precon_benchmark(const Experiment& ex, const SensorSet& sensors,
                                                 const SensorSet& near, const SensorSet& far) {
  const int slice = ex.cfg.bench_slice - 1;
  const Vec& truth = ex.slices[slice].m;
  const std::vector<double> omegas{omega_from_hz(ex.cfg.bench_freq_hz)};
  const Grid& g = ex.fem->grid;
  LowerOptions lo = upper_options(ex.cfg).lower;

  auto solve_at = [&](const SensorSet& P, double alpha) {
    DataSet d = generate_data(g, truth, P, omegas, ex.sources, ex.cfg.refine);
    auto problem = std::make_shared<const LowerProblem>(ex.fem, std::move(d), alpha, lo);
    LowerSolveReport rep = lbfgs_minimize(*problem, ex.m0);
    return std::make_pair(problem, rep);
  };
  auto p1_at = [&](const SensorSet& P) {
    auto [problem, rep] = solve_at(P, ex.cfg.bench_alpha0);
    return build_P1(*problem, *rep.cache);
  };
  const Preconditioner p1_near = p1_at(near);
  const Preconditioner p1_far = p1_at(far);
  const Preconditioner p2 = build_P2(g, ex.cfg.bench_alpha0, ex.cfg.mu);
  PcgOptions po;
  po.tol = ex.cfg.bench_tol;
  po.ones_start = true;

  std::vector<PreconBenchRow> rows;
  for (double alpha : ex.cfg.bench_alphas) {
    auto [problem, rep] = solve_at(sensors, alpha);
    const HessianOperator H(*problem, rep.cache);
    const Vec rhs = truth - rep.m;
    PreconBenchRow r;
    r.alpha = alpha;
    r.n_cg = pcg_solve(H, rhs, Preconditioner::identity(), po).iterations;
    r.n_p1_near = pcg_solve(H, rhs, p1_near, po).iterations;
    r.n_p1_far = pcg_solve(H, rhs, p1_far, po).iterations;
    r.n_p2 = pcg_solve(H, rhs, p2, po).iterations;
    rows.push_back(r);
  }
  return rows;
}

void write_precon_csv(std::ostream& out, const std::vector<PreconBenchRow>& rows) {
  out << "alpha,N_i,N_i_P1near,N_i_P1far,N_i_P2\n";
  for (const auto& r : rows)
    out << r.alpha << ',' << r.n_cg << ',' << r.n_p1_near << ',' << r.n_p1_far << ',' << r.n_p2 << '\n';
}

}  // namespace bfwi
