#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "exrange/morphology.hpp"
#include "exrange/parallel.hpp"
#include "exrange/raster.hpp"
#include "exrange/thresholds.hpp"

namespace exrange {

/// Per-pixel extremal range: distance to the nearest non-exceedance, 0 on non-exceedances.
struct RangeField {
  RealGrid r;
  double p = 0.0;
  std::size_t slice = 0;
  BoundaryPolicy policy = BoundaryPolicy::Erode;
};

/// Empirical CDF of the extremal range at a list of radii.
struct CdfEstimate {
  std::vector<double> radii;
  std::vector<double> F;
  std::vector<std::uint64_t> n_within;  // numerator counts: 0 < R <= r inside T_{-r}
  std::vector<std::uint64_t> n_exceed;  // denominator counts: R > 0 inside T_{-r}
  std::vector<double> se;               // slice-batch standard error of F
  double r_max = 0.0;
};

/// Distances from each exceedance to the nearest non-exceedance pixel. Under
/// FillExceed, pixels outside the domain are exceedances and so never stop a range.
inline RangeField range_field(const ExcursionMask& mask, double dx, EdgeFallback fallback = EdgeFallback::None) {
  RangeField out{distance_transform(mask.exceed, dx, fallback), mask.p, mask.slice, mask.policy};
  return out;
}

/// Distance of each domain pixel to the nearest pixel outside the domain (the
/// area beyond the grid included). T_{-r} is the set where this exceeds r.
inline RealGrid domain_depth(const DomainMask& domain, double dx) {
  return distance_transform(domain.inside, dx, EdgeFallback::GridEdge);
}

/// Largest radius r with T_{-r} non-empty.
inline double inradius(const DomainMask& domain, double dx) {
  const auto depth = domain_depth(domain, dx);
  double m = 0.0;
  for (std::size_t i = 0; i < depth.size(); ++i)
    if (domain.inside[i]) m = std::max(m, depth[i]);
  return m;
}

/// Ratio-estimator standard error from per-slice numerator/denominator counts.
inline double ratio_standard_error(std::span<const double> num, std::span<const double> den) {
  const std::size_t n = num.size();
  double sn = 0.0, sd = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sn += num[i];
    sd += den[i];
  }
  if (n < 2 || sd <= 0.0) return 0.0;
  const double ratio = sn / sd;
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) ss += (num[i] - ratio * den[i]) * (num[i] - ratio * den[i]);
  return std::sqrt(static_cast<double>(n) / static_cast<double>(n - 1) * ss) / sd;
}

/// F_n(r) = sum_i #{t in T_{-r} : 0 < R_i(t) <= r} / sum_i #{t in T_{-r} : R_i(t) > 0},
/// and 0 where the denominator vanishes.
inline CdfEstimate ecdf(std::span<const RangeField> fields, const DomainMask& domain, std::span<const double> radii,
                        double dx) {
  const auto depth = domain_depth(domain, dx);
  double r_max = 0.0;
  for (std::size_t i = 0; i < depth.size(); ++i)
    if (domain.inside[i]) r_max = std::max(r_max, depth[i]);
  for (std::size_t k = 0; k < radii.size(); ++k) {
    if (!(radii[k] > 0.0)) throw ValidationError("cdf radii must be positive");
    if (!(radii[k] < r_max)) throw ValidationError("cdf radius must be below the domain inradius " + format_real(r_max));
  }
  for (const auto& f : fields)
    if (!f.r.same_shape(domain.inside)) throw ValidationError("range field/domain dimension mismatch");

  const std::size_t nr = radii.size(), ns = fields.size();
  std::vector<std::uint64_t> num(ns * nr, 0), den(ns * nr, 0);
  parallel_for(ns, [&](std::size_t s) {
    const auto& r = fields[s].r;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (!domain.inside[i] || !(r[i] > 0.0)) continue;
      for (std::size_t k = 0; k < nr; ++k) {
        if (!(depth[i] > radii[k])) continue;
        ++den[s * nr + k];
        if (r[i] <= radii[k]) ++num[s * nr + k];
      }
    }
  });

  CdfEstimate est;
  est.radii.assign(radii.begin(), radii.end());
  est.r_max = r_max;
  for (std::size_t k = 0; k < nr; ++k) {
    std::uint64_t a = 0, b = 0;
    std::vector<double> an(ns), bn(ns);
    for (std::size_t s = 0; s < ns; ++s) {
      a += num[s * nr + k];
      b += den[s * nr + k];
      an[s] = static_cast<double>(num[s * nr + k]);
      bn[s] = static_cast<double>(den[s * nr + k]);
    }
    est.n_within.push_back(a);
    est.n_exceed.push_back(b);
    est.F.push_back(b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b));
    est.se.push_back(ratio_standard_error(an, bn));
  }
  return est;
}

/// Lower-midpoint median of the strictly positive observations, 0 if there are none.
inline double median_positive(std::vector<double> values) {
  std::erase_if(values, [](double v) { return !(v > 0.0); });
  if (values.empty()) return 0.0;
  const std::size_t k = (values.size() - 1) / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  return values[k];
}

/// Median over all domain pixel-slices with a positive range.
inline double pooled_median_range(std::span<const RangeField> fields, const DomainMask& domain) {
  std::vector<double> v;
  for (const auto& f : fields)
    for (std::size_t i = 0; i < f.r.size(); ++i)
      if (domain.inside[i] && f.r[i] > 0.0) v.push_back(f.r[i]);
  return median_positive(std::move(v));
}

/// Per-pixel medians over slices; 0 where a pixel never exceeds.
inline RealGrid pixel_median_range(std::span<const RangeField> fields, const DomainMask& domain) {
  RealGrid out(domain.nx(), domain.ny(), 0.0);
  parallel_for(domain.ny(), [&](std::size_t y) {
    std::vector<double> v;
    for (std::size_t x = 0; x < domain.nx(); ++x) {
      if (!domain.contains(x, y)) continue;
      v.clear();
      for (const auto& f : fields) v.push_back(f.r(x, y));
      out(x, y) = median_positive(v);
    }
  });
  return out;
}

struct PixelOffset {
  long dx = 0;
  long dy = 0;
  double length() const { return std::hypot(static_cast<double>(dx), static_cast<double>(dy)); }
};

struct TailDependence {
  double chi = 0.0;
  double se = 0.0;
  std::uint64_t joint = 0;      // both pixels of a pair exceed
  std::uint64_t reference = 0;  // reference pixel exceeds
};

/// chi_p at a pixel lag: joint exceedances over reference exceedances, pooled
/// over every in-domain pair (s, s + lag) and every slice.
inline TailDependence tail_dependence(const RasterStack& stack, const ThresholdField& thr, PixelOffset lag) {
  if (!thr.u.same_shape(stack.nx(), stack.ny())) throw ValidationError("threshold/stack dimension mismatch");
  const auto domain = stack.domain();
  const long nx = static_cast<long>(stack.nx()), ny = static_cast<long>(stack.ny());
  std::vector<double> joint(stack.nt(), 0.0), ref(stack.nt(), 0.0);
  parallel_for(stack.nt(), [&](std::size_t t) {
    auto s = stack.slice(t);
    std::uint64_t a = 0, b = 0;
    for (long y = 0; y < ny; ++y) {
      const long y2 = y + lag.dy;
      if (y2 < 0 || y2 >= ny) continue;
      for (long x = 0; x < nx; ++x) {
        const long x2 = x + lag.dx;
        if (x2 < 0 || x2 >= nx) continue;
        const auto i = static_cast<std::size_t>(y * nx + x), j = static_cast<std::size_t>(y2 * nx + x2);
        if (!domain.inside[i] || !domain.inside[j]) continue;
        if (!(static_cast<double>(s[i]) > thr.u[i])) continue;
        ++b;
        if (static_cast<double>(s[j]) > thr.u[j]) ++a;
      }
    }
    joint[t] = static_cast<double>(a);
    ref[t] = static_cast<double>(b);
  });
  TailDependence td;
  for (std::size_t t = 0; t < stack.nt(); ++t) {
    td.joint += static_cast<std::uint64_t>(joint[t]);
    td.reference += static_cast<std::uint64_t>(ref[t]);
  }
  if (td.reference == 0) throw NumericError("no reference exceedances at this level and lag");
  td.chi = static_cast<double>(td.joint) / static_cast<double>(td.reference);
  td.se = ratio_standard_error(joint, ref);
  return td;
}

/// Per-pixel chi_p map: the reference pixel is fixed at s.
inline RealGrid tail_dependence_map(const RasterStack& stack, const ThresholdField& thr, PixelOffset lag) {
  const auto domain = stack.domain();
  const long nx = static_cast<long>(stack.nx()), ny = static_cast<long>(stack.ny());
  RealGrid out(stack.nx(), stack.ny(), std::nan(""));
  parallel_for(stack.ny(), [&](std::size_t ys) {
    const long y = static_cast<long>(ys), y2 = y + lag.dy;
    for (long x = 0; x < nx; ++x) {
      const long x2 = x + lag.dx;
      if (y2 < 0 || y2 >= ny || x2 < 0 || x2 >= nx) continue;
      const auto i = static_cast<std::size_t>(y * nx + x), j = static_cast<std::size_t>(y2 * nx + x2);
      if (!domain.inside[i] || !domain.inside[j]) continue;
      std::uint64_t a = 0, b = 0;
      for (std::size_t t = 0; t < stack.nt(); ++t) {
        auto s = stack.slice(t);
        if (!(static_cast<double>(s[i]) > thr.u[i])) continue;
        ++b;
        if (static_cast<double>(s[j]) > thr.u[j]) ++a;
      }
      if (b > 0) out[i] = static_cast<double>(a) / static_cast<double>(b);
    }
  });
  return out;
}

/// Small-r approximation of P(R <= r) for a smooth Gaussian field at level u:
/// min(sqrt(pi alpha / 2) u r, 1).
inline double gaussian_cdf_approx(double alpha, double u, double r) {
  if (!(alpha > 0.0) || !(u > 0.0)) throw ValidationError("alpha and u must be positive");
  if (r < 0.0) throw ValidationError("radius must be non-negative");
  return std::min(std::sqrt(std::numbers::pi * alpha / 2.0) * u * r, 1.0);
}

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::uint64_t count = 0;
};

/// Counts of positive ranges in [k w, (k+1) w), k = 0..n_bins-1; the last bin is open-ended.
inline std::vector<HistogramBin> range_histogram(std::span<const RangeField> fields, const DomainMask& domain,
                                                 double bin_width, std::size_t n_bins) {
  if (!(bin_width > 0.0) || n_bins == 0) throw ValidationError("histogram needs a positive bin width and >= 1 bin");
  std::vector<HistogramBin> bins(n_bins);
  for (std::size_t k = 0; k < n_bins; ++k) {
    bins[k].lo = static_cast<double>(k) * bin_width;
    bins[k].hi = static_cast<double>(k + 1) * bin_width;
  }
  for (const auto& f : fields)
    for (std::size_t i = 0; i < f.r.size(); ++i) {
      if (!domain.inside[i] || !(f.r[i] > 0.0)) continue;
      auto k = static_cast<std::size_t>(std::floor(f.r[i] / bin_width));
      ++bins[std::min(k, n_bins - 1)].count;
    }
  return bins;
}

}  // namespace exrange
