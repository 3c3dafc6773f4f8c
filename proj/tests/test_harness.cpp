#include "doctest.h"
#include "oracles.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "bfwi/experiments.hpp"
#include "bfwi/metrics.hpp"

using namespace bfwi;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("bfwi_test_" + name)).string();
}

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.n1 = 24;
  c.n2 = 9;
  c.width_x = 2.3;
  c.width_z = 0.8;
  c.slices = 2;
  c.smooth_cells = 1.0;
  c.refine = 2;
  c.groups_hz = {{0.8}, {0.8, 1.6}};
  c.alpha0 = 0.1;
  c.mu = 1e-4;
  c.lower_grad_tol = 1e-8;
  c.lower_max_iter = 60;
  c.upper_max_iter = 2;
  c.upper_pg_tol = 1e-10;
  c.pcg_tol = 1e-10;
  c.strategies = {"none", "alpha", "both"};
  return c;
}

}  // namespace

TEST_CASE("slicing") {
  Model m;
  m.grid = build_grid(4, 2, 3.0, 1.0);
  m.m.resize(8);
  for (int k = 0; k < 8; ++k) m.m[k] = k + 1;
  const auto s = slice_model(m, 2);
  REQUIRE(s.size() == 2);
  CHECK(s[0].grid.n1 == 2);
  CHECK(s[0].grid.width_x == doctest::Approx(1.0));
  // columns x0, x1 then x2, x3
  CHECK(s[0].m == (Vec(4) << 1, 2, 3, 4).finished());
  CHECK(s[1].m == (Vec(4) << 5, 6, 7, 8).finished());
  const Model back = concat_slices(s);
  CHECK(back.m == m.m);
  CHECK(back.grid.width_x == doctest::Approx(3.0));
  CHECK_THROWS_AS(slice_model(m, 3), InvalidArgument);

  Model big;
  big.grid = build_grid(440, 121, 22.0, 3.0);
  big.m = Vec::Ones(big.grid.size());
  const auto five = slice_model(big, 5);
  CHECK(five.size() == 5);
  for (const auto& sl : five) CHECK(sl.grid.size() == 10648);
}

TEST_CASE("model files round trip") {
  const Model m = layered_model(12, 7, 2.0, 1.0, 1.0);
  const std::string path = temp_path("model.txt");
  write_model(path, m);
  const Model r = read_model(path);
  CHECK(r.grid.n1 == 12);
  CHECK(r.grid.width_z == 1.0);
  CHECK(r.m == m.m);
  const auto sl = load_and_slice(path, 3);
  CHECK(sl.size() == 3);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_model(path), InvalidArgument);
}

TEST_CASE("generated models") {
  const Grid g = build_grid(11, 6, 2.0, 1.0);
  const Vec m0 = linear_velocity_model(g, 1.5, 3.5);
  CHECK(m0[g.index(3, 0)] == doctest::Approx(1 / 2.25));
  CHECK(m0[g.index(7, 5)] == doctest::Approx(1 / 12.25));
  const Model lay = layered_model(40, 12, 4.0, 1.0, 2.0);
  CHECK((lay.m.array() > 0).all());
  const double cmin = 1 / std::sqrt(lay.m.maxCoeff()), cmax = 1 / std::sqrt(lay.m.minCoeff());
  CHECK(cmin >= 1.4);
  CHECK(cmax <= 4.2);
  // smoothing keeps constants and the mean of a symmetric bump
  CHECK((gaussian_smooth(g, Vec::Constant(g.size(), 2.0), 1.5).array() - 2.0).abs().maxCoeff() < 1e-14);
}

TEST_CASE("prolongation reproduces bilinear fields") {
  const Grid c = build_grid(5, 4, 2.0, 1.0);
  const Grid f = refine_grid(c, 3);
  CHECK(f.n1 == 13);
  CHECK(f.n2 == 10);
  Vec v(c.size());
  for (int k = 0; k < c.size(); ++k) v[k] = 1 + 2 * c.node(k).x - c.node(k).z + 0.5 * c.node(k).x * c.node(k).z;
  const Vec p = prolong(c, v, f);
  for (int k = 0; k < f.size(); ++k) {
    const double x = f.node(k).x, z = f.node(k).z;
    CHECK(p[k] == doctest::Approx(1 + 2 * x - z + 0.5 * x * z));
  }
}

TEST_CASE("synthetic data") {
  const Grid g = build_grid(9, 9, 1.0, 1.0);
  Vec m(g.size());
  for (int k = 0; k < g.size(); ++k) m[k] = 0.3 + 0.1 * std::sin(2 * g.node(k).x) * g.node(k).z;
  const SensorSet sensors = SensorSet::fixed({{0.8, 0.3}, {0.85, 0.55}, {0.8, 0.8}});
  const std::vector<Point> src{{0.25, 0.5}, {0.125, 0.25}};  // on coarse nodes
  const std::vector<double> om{6.0};

  SUBCASE("readings converge at second order under refinement") {
    const DataSet d2 = generate_data(g, m, sensors, om, src, 2);
    const DataSet d4 = generate_data(g, m, sensors, om, src, 4);
    const DataSet d8 = generate_data(g, m, sensors, om, src, 8);
    for (int k = 0; k < d2.num_pairs(); ++k) {
      const double ratio = (d2.readings[k] - d4.readings[k]).norm() / (d4.readings[k] - d8.readings[k]).norm();
      MESSAGE("pair " << k << " Richardson ratio " << ratio);
      CHECK(ratio >= 3.2);
      CHECK(ratio <= 4.8);
    }
  }
  SUBCASE("sources give independent rows") {
    const DataSet both = generate_data(g, m, sensors, om, src, 2);
    const DataSet one = generate_data(g, m, sensors, om, {src[1]}, 2);
    CHECK((both.readings[1] - one.readings[0]).norm() == 0.0);
  }
  SUBCASE("reference fields resample the readings") {
    const DataSet d = generate_data(g, m, sensors, om, src, 2);
    CHECK(d.has_reference());
    const DataSet r = d.resampled(sensors);
    for (int k = 0; k < d.num_pairs(); ++k) CHECK((r.readings[k] - d.readings[k]).norm() < 1e-14 * d.readings[k].norm());
  }
}

TEST_CASE("noise") {
  const Grid g = build_grid(9, 9, 1.0, 1.0);
  const Vec m = Vec::Constant(g.size(), 0.3);
  std::vector<Point> pts;
  for (int j = 0; j < 50; ++j) pts.push_back({0.9, 0.05 + 0.018 * j});
  std::vector<double> om;
  for (int w = 0; w < 10; ++w) om.push_back(3.0 + w);
  const DataSet d = generate_data(g, m, SensorSet::fixed(pts), om, {{0.1, 0.3}, {0.1, 0.7}}, 1);
  const DataSet n1 = add_noise(d, 40.0, 99), n2 = add_noise(d, 40.0, 99), n3 = add_noise(d, 40.0, 100);
  double e2 = 0, s2 = 0;
  for (int k = 0; k < d.num_pairs(); ++k) {
    e2 += (n1.readings[k] - d.readings[k]).squaredNorm();
    s2 += d.readings[k].squaredNorm();
    CHECK(n1.readings[k] == n2.readings[k]);
  }
  CHECK(std::sqrt(e2 / s2) == doctest::Approx(0.01).epsilon(0.1));
  CHECK(n1.readings[0] != n3.readings[0]);
  CHECK_FALSE(n1.has_reference());
  const DataSet clean = add_noise(d, std::numeric_limits<double>::infinity(), 1);
  CHECK(clean.readings[3] == d.readings[3]);
  CHECK_THROWS_AS(add_noise(d, std::nan(""), 1), InvalidArgument);
}

TEST_CASE("relative error metrics") {
  Vec gt(2), rc(2);
  gt << 2, 4;
  rc << 1, 5;
  const Vec re = relative_error_map(rc, gt);
  CHECK(re[0] == doctest::Approx(50.0));
  CHECK(re[1] == doctest::Approx(25.0));
  CHECK(mre(rc, gt) == doctest::Approx(37.5));
  CHECK(mre(gt, gt) == 0.0);
  CHECK(mre(-3.0 * rc, -3.0 * gt) == doctest::Approx(37.5));
  CHECK(mre(rc, gt) == re.mean());
  CHECK((re.array() >= 0).all());
  gt[1] = 0.0;
  CHECK_THROWS_AS(mre(rc, gt), InvalidArgument);
}

TEST_CASE("SSIM") {
  const Grid g = build_grid(20, 15, 2.0, 1.5);
  const Model lay = layered_model(20, 15, 2.0, 1.5, 1.0);
  const Vec& gt = lay.m;
  CHECK(ssim(g, gt, gt) == doctest::Approx(1.0).epsilon(1e-14));
  const Vec flip = Vec::Constant(g.size(), gt.maxCoeff() + gt.minCoeff()) - gt;
  const double sf = ssim(g, flip, gt);
  CHECK(sf < 1.0);
  CHECK(sf >= -1.0);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> N;
  Vec noisy = gt;
  for (auto& v : noisy) v += 1e-9 * N(rng);
  CHECK(ssim(g, noisy, gt) >= 0.9999);
  CHECK_THROWS_AS(ssim(g, gt, Vec::Zero(g.size())), InvalidArgument);
}

TEST_CASE("improvement factor") {
  CHECK(improvement_factor(3.0, 3.0) == 1.0);
  CHECK(improvement_factor(2.0, 0.5) == 4.0);
  CHECK_THROWS_AS(improvement_factor(0.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(improvement_factor(1.0, -1.0), InvalidArgument);
}

TEST_CASE("metrics CSV round trip") {
  std::vector<MetricsRow> rows{{1, 2, "train", "both", 7.37, 4.92, 0.81, 0.9, 1.0 / 3, 0.1, 10.0 / 3, 12.5},
                               {1, 1, "test", "none", 1e-300, 2.0, -0.5, 1.0, 5.0, 5.0, 1.0, 10.0}};
  std::stringstream ss;
  write_metrics_csv(ss, rows);
  CHECK(read_metrics_csv(ss) == rows);
  std::stringstream bad("header\n1,2,3\n");
  CHECK_THROWS_AS(read_metrics_csv(bad), InvalidArgument);
}

TEST_CASE("configuration") {
  SUBCASE("overrides") {
    nlohmann::json j = to_json(ExperimentConfig{});
    apply_override(j, "upper.max_iter=7");
    apply_override(j, "groups_hz=[[1.0],[1.0,2.0]]");
    apply_override(j, "out=runs/a");
    const ExperimentConfig c = config_from_json(j);
    CHECK(c.upper_max_iter == 7);
    CHECK(c.groups_hz.size() == 2);
    CHECK(c.out == "runs/a");
    CHECK_THROWS_AS(apply_override(j, "no_equals_sign"), InvalidArgument);
  }
  SUBCASE("unknown keys are rejected") {
    nlohmann::json j = to_json(ExperimentConfig{});
    apply_override(j, "lower_grad_tol=1e-6");
    CHECK_THROWS_AS(config_from_json(j), InvalidArgument);
    j = to_json(ExperimentConfig{});
    apply_override(j, "model.n3=4");
    CHECK_THROWS_AS(config_from_json(j), InvalidArgument);
  }
  SUBCASE("file then overrides") {
    const std::string path = temp_path("cfg.json");
    std::ofstream(path) << R"({"alpha0": 3.5, "model": {"slices": 4, "n1": 40}})";
    const ExperimentConfig c = load_config(path, {"alpha0=2"});
    CHECK(c.alpha0 == 2.0);
    CHECK(c.slices == 4);
    CHECK(c.n2 == 61);
    std::filesystem::remove(path);
    CHECK_THROWS(load_config(path, {}));
  }
  SUBCASE("round trip through JSON") {
    ExperimentConfig c;
    c.seed = 42;
    c.test_slices = {2, 3};
    const ExperimentConfig r = config_from_json(to_json(c));
    CHECK(to_json(r) == to_json(c));
  }
  SUBCASE("invalid settings") {
    ExperimentConfig c;
    c.slices = 1;
    c.test_slices = {1};
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = ExperimentConfig{};
    c.test_slices = {6};
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = ExperimentConfig{};
    c.strategies = {"everything"};
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = ExperimentConfig{};
    c.mu = 0.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
  }
}

TEST_CASE("experiment set-up") {
  const Experiment ex = build_experiment(tiny_config());
  CHECK(ex.num_slices() == 2);
  CHECK(ex.fem->grid.n1 == 12);
  CHECK(ex.sources.size() == 3);
  CHECK(ex.sensors0.size() == 3);
  for (int j = 0; j + 1 < 3; ++j) CHECK(ex.sensors0.sensors[j].p.z <= ex.sensors0.sensors[j + 1].p.z);
  CHECK(ex.all_omegas.size() == 2);
  // same seed, same start
  const Experiment ex2 = build_experiment(tiny_config());
  CHECK(ex2.sensors0.sensors[1].p.z == ex.sensors0.sensors[1].p.z);

  ExperimentConfig one = tiny_config();
  one.n1 = 12;
  one.slices = 1;
  CHECK_THROWS_AS(run_cross_validation(build_experiment(one), temp_path("xval1")), InvalidArgument);
}

TEST_CASE("slice evaluation is deterministic") {
  const Experiment ex = build_experiment(tiny_config());
  const SliceEvaluation a = evaluate_slice(ex, 1, ex.sensors0, 0.1), b = evaluate_slice(ex, 1, ex.sensors0, 0.1);
  CHECK(a.mre == b.mre);
  CHECK(a.ssim == b.ssim);
  CHECK((a.recon - b.recon).norm() == 0.0);
  CHECK(a.mre == a.re_map.mean());
}

TEST_CASE("cross validation on a tiny problem") {
  const Experiment ex = build_experiment(tiny_config());
  const std::string dir = temp_path("xval");
  std::filesystem::remove_all(dir);
  const CrossValidationResult r = run_cross_validation(ex, dir);
  CHECK(r.failures.empty());
  // 2 folds x 2 slices x 3 strategies
  CHECK(r.rows.size() == 12);
  for (const auto& row : r.rows) {
    CHECK(row.mre >= 0.0);
    CHECK(row.ssim <= 1.0);
    CHECK(row.improvement > 0.0);
    CHECK(row.role == (row.slice == row.test_slice ? "test" : "train"));
  }
  std::ifstream csv(std::filesystem::path(dir) / "metrics.csv");
  CHECK(read_metrics_csv(csv).size() == r.rows.size());
  CHECK(std::filesystem::exists(std::filesystem::path(dir) / "fold1"));
  std::filesystem::remove_all(dir);
}
