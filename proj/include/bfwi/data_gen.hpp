#pragma once

#include <cstdint>
#include <vector>

#include "bfwi/fwi_lower.hpp"

namespace bfwi {

/// Synthetic readings of m_true (given on grid) computed on the grid refined
/// by `refine` in each direction; reference wavefields are kept on that grid.
DataSet generate_data(const Grid& grid, const Vec& m_true, const SensorSet& sensors,
                      const std::vector<double>& omegas, const std::vector<Point>& sources, int refine,
                      ExecPolicy policy = ExecPolicy::Parallel);

/// Adds complex Gaussian noise whose expected per-(source, frequency) RMS is the
/// signal RMS times 10^(-snr_db / 20). snr_db = +inf leaves the data unchanged.
/// Reference wavefields are dropped since they no longer describe the readings.
DataSet add_noise(const DataSet& data, double snr_db, std::uint64_t seed);

}  // namespace bfwi
