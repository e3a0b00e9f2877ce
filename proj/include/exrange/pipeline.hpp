#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "exrange/extremal_range.hpp"
#include "exrange/tailfit.hpp"
#include "exrange/thresholds.hpp"

namespace exrange {

enum class ThresholdMode { PerPixel, Pooled };

/// Settings shared by every stage from thresholds to MER fits.
struct ChainOptions {
  std::vector<double> levels;
  BoundaryPolicy policy = BoundaryPolicy::Erode;
  EdgeFallback fallback = EdgeFallback::None;
  ThresholdMode threshold = ThresholdMode::PerPixel;
  double min_range = 0.0;  // ranges below this are dropped from regressions
  FitMode fit = FitMode::PerPixel;
  SplineFitOptions spline;
};

inline std::vector<ThresholdField> thresholds_for(const RasterStack& stack, std::span<const double> levels,
                                                  ThresholdMode mode) {
  if (mode == ThresholdMode::PerPixel) return quantile_fields(stack, levels);
  std::vector<ThresholdField> out;
  for (double p : levels) out.push_back(pooled_quantile_field(stack, p));
  return out;
}

/// Range fields for every slice at one threshold.
inline std::vector<RangeField> range_fields(const RasterStack& stack, const ThresholdField& thr, BoundaryPolicy policy,
                                            EdgeFallback fallback) {
  std::vector<RangeField> out(stack.nt());
  parallel_for(stack.nt(), [&](std::size_t t) {
    const auto mask = excursion_mask(stack, t, thr, policy);
    if (count_true(mask.exceed) == 0) {
      out[t] = RangeField{RealGrid(stack.nx(), stack.ny(), 0.0), thr.p, t, policy};
      return;
    }
    out[t] = range_field(mask, stack.dx(), fallback);
  });
  return out;
}

/// Regression samples (level covariate, log range) for all positive in-domain
/// ranges across levels and slices.
inline SampleSet collect_samples(const RasterStack& stack, const ChainOptions& opt) {
  const auto domain = stack.domain();
  const auto thresholds = thresholds_for(stack, opt.levels, opt.threshold);
  std::vector<RangeSample> samples;
  for (std::size_t l = 0; l < opt.levels.size(); ++l) {
    const double x = level_covariate(opt.levels[l]);
    const auto fields = range_fields(stack, thresholds[l], opt.policy, opt.fallback);
    for (std::size_t t = 0; t < fields.size(); ++t) {
      const auto& r = fields[t].r;
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (!domain.inside[i] || !(r[i] > 0.0) || r[i] < opt.min_range) continue;
        samples.push_back({static_cast<std::uint32_t>(i), x, std::log(r[i]), static_cast<std::uint32_t>(t)});
      }
    }
  }
  return SampleSet(stack.nx(), stack.ny(), std::move(samples));
}

inline MerSurface fit_mer(const RasterStack& stack, const ChainOptions& opt) {
  const auto samples = collect_samples(stack, opt);
  const auto domain = stack.domain();
  if (opt.fit == FitMode::PerPixel) return fit_mer_pixels(samples, domain);
  return fit_mer_spline(samples, domain, opt.spline, stack.nt());
}

struct MerJackknife {
  RealGrid se_beta;
  RealGrid se_theta;
  BinaryGrid theta_all_positive;  // every delete-one theta estimate > 0
  JackknifeResult raw;
};

/// Block jackknife of the full chain (thresholds, masks, ranges, fit).
/// For spline fits the penalty chosen on the full data is reused in every replicate.
inline MerJackknife jackknife_mer(const RasterStack& stack, std::span<const int> block_of_slice, ChainOptions opt) {
  if (block_of_slice.size() != stack.nt()) throw ValidationError("block file must list one block id per slice");
  if (opt.fit == FitMode::Spline && opt.spline.penalty < 0.0) {
    const auto samples = collect_samples(stack, opt);
    opt.spline.penalty = select_penalty(samples, stack.domain(), opt.spline, stack.nt());
  }
  const std::size_t px = stack.pixels();
  auto estimate = [&](std::span<const std::size_t> keep) {
    const auto sub = stack.select(keep);
    const auto surf = fit_mer(sub, opt);
    std::vector<double> v(2 * px);
    for (std::size_t i = 0; i < px; ++i) {
      v[i] = surf.beta[i];
      v[px + i] = surf.theta[i];
    }
    return v;
  };
  MerJackknife out;
  out.raw = jackknife(block_of_slice, estimate);
  out.se_beta = RealGrid(stack.nx(), stack.ny());
  out.se_theta = RealGrid(stack.nx(), stack.ny());
  out.theta_all_positive = BinaryGrid(stack.nx(), stack.ny());
  const auto pos = all_replicates_positive(out.raw);
  for (std::size_t i = 0; i < px; ++i) {
    out.se_beta[i] = out.raw.se[i];
    out.se_theta[i] = out.raw.se[px + i];
    out.theta_all_positive[i] = pos[px + i];
  }
  return out;
}

/// Contiguous equal-size blocks: slice t belongs to block t * n_blocks / nt.
inline std::vector<int> contiguous_blocks(std::size_t nt, std::size_t n_blocks) {
  std::vector<int> b(nt);
  for (std::size_t t = 0; t < nt; ++t) b[t] = static_cast<int>(t * n_blocks / nt);
  return b;
}

}  // namespace exrange
