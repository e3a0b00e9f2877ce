#pragma once

#include <cmath>
#include <vector>

#include "exrange/pipeline.hpp"
#include "exrange/simgrf.hpp"

namespace exrange {

enum class SimModel { Gaussian, ScaleMixture };

struct ThetaConsistencyRow {
  std::size_t n = 0;
  double p_n = 0.0;
  double median_p0 = 0.0;
  double median_pn = 0.0;
  double theta = 0.0;
};

/// Pooled-median theta estimate between two levels on a stationary stack
/// (spatially constant pooled thresholds, Erode policy).
inline double pooled_theta(const RasterStack& stack, double p0, double p1, EdgeFallback fallback = EdgeFallback::None,
                           double* m0_out = nullptr, double* m1_out = nullptr) {
  const auto domain = stack.domain();
  const auto f0 = range_fields(stack, pooled_quantile_field(stack, p0), BoundaryPolicy::Erode, fallback);
  const double m0 = pooled_median_range(f0, domain);
  const auto f1 = range_fields(stack, pooled_quantile_field(stack, p1), BoundaryPolicy::Erode, fallback);
  const double m1 = pooled_median_range(f1, domain);
  if (m0_out) *m0_out = m0;
  if (m1_out) *m1_out = m1;
  return theta_hat(m0, m1, p0, p1);
}

/// theta(p0, p_n) against the number of simulated slices n, with p_n = 1 - n^(-gamma)
/// so that n (1 - p_n) grows without bound.
inline std::vector<ThetaConsistencyRow> consistency_check_theta(const AdSimConfig& cfg, SimModel model,
                                                                std::span<const std::size_t> ns, double p0,
                                                                double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("gamma must lie in (0,1)");
  std::vector<ThetaConsistencyRow> rows;
  for (std::size_t n : ns) {
    if (n == 0) throw ValidationError("slice count n must be positive");
    const double pn = 1.0 - std::pow(static_cast<double>(n), -gamma);
    if (!(pn > p0)) throw ValidationError("p_n must exceed p0; increase n");
    AdSimConfig c = cfg;
    c.base.n_slices = n;
    const auto stack = model == SimModel::Gaussian ? simulate_gaussian(c.base) : simulate_ad_field(c);
    ThetaConsistencyRow row{n, pn, 0.0, 0.0, 0.0};
    row.theta = pooled_theta(stack, p0, pn, EdgeFallback::None, &row.median_p0, &row.median_pn);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace exrange
