#include "bfwi/data_gen.hpp"

#include <cmath>
#include <random>

#include "bfwi/model_io.hpp"

namespace bfwi {

DataSet generate_data(const Grid& grid, const Vec& m_true, const SensorSet& sensors, const std::vector<double>& omegas,
                      const std::vector<Point>& sources, int refine, ExecPolicy policy) {
  if (refine < 1) throw InvalidArgument("generate_data: refine must be >= 1");
  if (m_true.size() != grid.size()) throw InvalidArgument("generate_data: model size mismatch");
  const Grid fine = refine_grid(grid, refine);
  const FemOperators fem(fine);
  const Vec mf = refine == 1 ? m_true : prolong(grid, m_true, fine);
  const RestrictionStencil st(fine, sensors);

  DataSet d;
  d.sources = sources;
  d.omegas = omegas;
  d.sensors = sensors;
  const int ns = d.num_sources();
  const int np = d.num_pairs();
  d.readings.resize(np);
  d.reference.resize(np);
  std::vector<CVec> rhs;
  for (const auto& s : sources) rhs.push_back(point_source_rhs(fine, s));

  const bool par = policy == ExecPolicy::Parallel;
  const int nw = d.num_omegas();
#pragma omp parallel for schedule(dynamic) if (par)
  for (int w = 0; w < nw; ++w) {
    const HelmholtzFactorization fact(fem, mf, omegas[w]);
    for (int s = 0; s < ns; ++s) {
      auto ref = std::make_shared<ReferenceField>();
      ref->grid = fine;
      ref->u = fact.solve_forward(rhs[s], SolvePhase::Data);
      d.readings[d.pair(w, s)] = st.restrict(ref->u);
      d.reference[d.pair(w, s)] = std::move(ref);
    }
  }
  return d;
}

DataSet add_noise(const DataSet& data, double snr_db, std::uint64_t seed) {
  if (std::isinf(snr_db) && snr_db > 0.0) return data;
  if (!std::isfinite(snr_db)) throw InvalidArgument("add_noise: snr_db must be finite or +inf");
  DataSet out = data;
  out.reference.clear();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double ratio = std::pow(10.0, -snr_db / 20.0);
  for (auto& r : out.readings) {
    const int n = static_cast<int>(r.size());
    if (n == 0) continue;
    const double signal_rms = r.norm() / std::sqrt(static_cast<double>(n));
    // E|e_j|^2 = (ratio * signal_rms)^2
    const double sigma = ratio * signal_rms / std::sqrt(2.0);
    for (int j = 0; j < n; ++j) r[j] += sigma * Complex(normal(rng), normal(rng));
  }
  return out;
}

}  // namespace bfwi
