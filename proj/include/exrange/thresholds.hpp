#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "exrange/parallel.hpp"
#include "exrange/raster.hpp"

namespace exrange {

/// How pixels outside the domain enter an excursion set: as non-exceedances
/// (Erode), or as exceedances so the domain edge does not truncate ranges (FillExceed).
enum class BoundaryPolicy { Erode, FillExceed };

/// Adaptive threshold u_p(s); NaN outside the domain.
struct ThresholdField {
  double p = 0.0;
  RealGrid u;
};

struct ExcursionMask {
  BinaryGrid exceed;
  BoundaryPolicy policy = BoundaryPolicy::Erode;
  double p = 0.0;
  std::size_t slice = 0;
};

/// 1-based rank k of the order statistic X_(k) = inf{x : F_n(x) >= p}, i.e.
/// k = ceil(p * n). The small slack absorbs binary rounding of levels like 0.85.
inline std::size_t quantile_rank(double p, std::size_t n) {
  double k = std::ceil(p * static_cast<double>(n) - 1e-9);
  return static_cast<std::size_t>(std::clamp(k, 1.0, static_cast<double>(n)));
}

inline void check_level(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("probability level must lie in (0,1)");
}

/// Per-pixel empirical quantiles for several levels at once (one sort per pixel).
inline std::vector<ThresholdField> quantile_fields(const RasterStack& stack, std::span<const double> levels) {
  for (double p : levels) check_level(p);
  if (stack.nt() < 2) throw ValidationError("quantiles need at least 2 time slices");
  const auto domain = stack.domain();
  const std::size_t nt = stack.nt();
  std::vector<ThresholdField> out;
  for (double p : levels) out.push_back({p, RealGrid(stack.nx(), stack.ny(), std::nan(""))});
  std::vector<std::size_t> ranks;
  for (double p : levels) ranks.push_back(quantile_rank(p, nt));

  parallel_for(stack.ny(), [&](std::size_t y) {
    std::vector<float> series(nt);
    for (std::size_t x = 0; x < stack.nx(); ++x) {
      if (!domain.contains(x, y)) continue;
      for (std::size_t t = 0; t < nt; ++t) series[t] = stack.at(t, x, y);
      std::sort(series.begin(), series.end());
      for (std::size_t l = 0; l < levels.size(); ++l) out[l].u(x, y) = series[ranks[l] - 1];
    }
  });
  return out;
}

inline ThresholdField quantile_field(const RasterStack& stack, double p) {
  return std::move(quantile_fields(stack, std::span<const double>(&p, 1)).front());
}

/// Spatially constant threshold from the quantile of all domain pixel-days;
/// appropriate when the field is stationary.
inline ThresholdField pooled_quantile_field(const RasterStack& stack, double p) {
  check_level(p);
  const auto domain = stack.domain();
  std::vector<float> all;
  all.reserve(domain.area_pixels() * stack.nt());
  for (std::size_t t = 0; t < stack.nt(); ++t) {
    auto s = stack.slice(t);
    for (std::size_t i = 0; i < s.size(); ++i)
      if (domain.inside[i]) all.push_back(s[i]);
  }
  if (all.size() < 2) throw ValidationError("pooled quantile needs at least 2 values");
  const std::size_t k = quantile_rank(p, all.size()) - 1;
  std::nth_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
  ThresholdField f{p, RealGrid(stack.nx(), stack.ny(), std::nan(""))};
  for (std::size_t i = 0; i < f.u.size(); ++i)
    if (domain.inside[i]) f.u[i] = all[k];
  return f;
}

/// Constant threshold u on the domain (known marginal quantile of a simulator, say).
inline ThresholdField constant_threshold(const RasterStack& stack, double u, double p = 0.0) {
  const auto domain = stack.domain();
  ThresholdField f{p, RealGrid(stack.nx(), stack.ny(), std::nan(""))};
  for (std::size_t i = 0; i < f.u.size(); ++i)
    if (domain.inside[i]) f.u[i] = u;
  return f;
}

/// Strict exceedance X > u on the domain; outside pixels follow the policy.
inline ExcursionMask excursion_mask(const RasterStack& stack, std::size_t t, const ThresholdField& thr,
                                    BoundaryPolicy policy) {
  if (!thr.u.same_shape(stack.nx(), stack.ny())) throw ValidationError("threshold/stack dimension mismatch");
  auto s = stack.slice(t);
  ExcursionMask m{BinaryGrid(stack.nx(), stack.ny()), policy, thr.p, t};
  const std::uint8_t outside = policy == BoundaryPolicy::FillExceed ? 1 : 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (stack.is_nodata(s[i]))
      m.exceed[i] = outside;
    else
      m.exceed[i] = static_cast<double>(s[i]) > thr.u[i] ? 1 : 0;
  }
  return m;
}

}  // namespace exrange
