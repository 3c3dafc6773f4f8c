// Serial reference vs OpenMP kernels: lower-level evaluation and Hessian-vector products.

#include <benchmark/benchmark.h>

#include <map>
#include <random>

#include "bfwi/data_gen.hpp"
#include "bfwi/hessian_ops.hpp"
#include "bfwi/model_io.hpp"

using namespace bfwi;

namespace {

struct Fixture {
  std::shared_ptr<const FemOperators> fem;
  DataSet data;
  Vec m;

  explicit Fixture(int n) {
    const Model lay = layered_model(n, n, 2.2, 3.0, 3.0);
    fem = std::make_shared<const FemOperators>(lay.grid);
    std::vector<Point> src, rec;
    for (int s = 0; s < 6; ++s) src.push_back({0.1, 0.3 + 0.4 * s});
    for (int r = 0; r < 6; ++r) rec.push_back({2.1, 0.25 + 0.45 * r});
    data = generate_data(lay.grid, lay.m, SensorSet::fixed(rec), {omega_from_hz(0.5), omega_from_hz(1.5)}, src, 1,
                         ExecPolicy::Serial);
    m = linear_velocity_model(lay.grid, 1.5, 3.5);
  }
};

const Fixture& fixture(int n) {
  static std::map<int, Fixture> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, Fixture(n)).first;
  return it->second;
}

LowerProblem problem(const Fixture& f, ExecPolicy policy) {
  LowerOptions o;
  o.policy = policy;
  return LowerProblem(f.fem, f.data, 10.0, o);
}

void BM_Evaluate(benchmark::State& state, ExecPolicy policy) {
  const Fixture& f = fixture(static_cast<int>(state.range(0)));
  const LowerProblem P = problem(f, policy);
  for (auto _ : state) benchmark::DoNotOptimize(P.evaluate(f.m, true).f);
}

void BM_Hvp(benchmark::State& state, ExecPolicy policy) {
  const Fixture& f = fixture(static_cast<int>(state.range(0)));
  const LowerProblem P = problem(f, policy);
  auto cache = std::make_shared<const LowerEvaluation>(P.evaluate(f.m, true));
  const HessianOperator H(P, cache);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> N;
  Vec v(P.size());
  for (auto& x : v) x = N(rng);
  for (auto _ : state) benchmark::DoNotOptimize(H.apply(v).data());
}

}  // namespace

BENCHMARK_CAPTURE(BM_Evaluate, serial, ExecPolicy::Serial)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Evaluate, parallel, ExecPolicy::Parallel)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Hvp, serial, ExecPolicy::Serial)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Hvp, parallel, ExecPolicy::Parallel)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
