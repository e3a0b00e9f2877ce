#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "exrange/parallel.hpp"
#include "exrange/raster.hpp"

namespace exrange {

/// Regression covariate of a probability level: log(-log(1 - p)).
inline double level_covariate(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("probability level must lie in (0,1)");
  return std::log(-std::log1p(-p));
}

/// Two-level tail decay rate: slope of log median range against the level
/// covariate, sign flipped so that shrinking ranges give a positive value.
/// Either median being 0 (no positive ranges) yields 0.
inline double theta_hat(double m1, double m2, double p1, double p2) {
  if (p1 == p2) throw ValidationError("theta estimator needs two distinct levels");
  const double x1 = level_covariate(p1), x2 = level_covariate(p2);
  if (!(m1 > 0.0) || !(m2 > 0.0)) return 0.0;
  return (std::log(m2) - std::log(m1)) / (x1 - x2);
}

/// Coefficients of log MER(s; p) = beta - theta log(-log(1 - p)).
struct MerCoefficients {
  double beta = 0.0;
  double theta = 0.0;
  double loss = 0.0;  // sum of absolute residuals at the solution
};

/// Sum |y_i - (beta - theta x_i)|.
inline double lad_loss(std::span<const double> x, std::span<const double> y, double beta, double theta) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(y[i] - (beta - theta * x[i]));
  return s;
}

namespace detail {

/// Lower median of y_i + theta x_i and the absolute deviation it attains.
inline std::pair<double, double> profile_lad(std::span<const double> x, std::span<const double> y, double theta,
                                             std::vector<double>& work) {
  const std::size_t n = x.size();
  work.resize(n);
  for (std::size_t i = 0; i < n; ++i) work[i] = y[i] + theta * x[i];
  const std::size_t k = (n - 1) / 2;
  std::nth_element(work.begin(), work.begin() + static_cast<std::ptrdiff_t>(k), work.end());
  const double beta = work[k];
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(y[i] + theta * x[i] - beta);
  return {beta, s};
}

}  // namespace detail

/// Exact least-absolute-deviation line y = beta - theta x.
///
/// The profiled loss h(theta) = min_beta sum |y_i + theta x_i - beta| is convex
/// and piecewise linear with breakpoints only at slopes of lines through two
/// samples, so its minimum is attained at one of those. Candidate slopes are
/// enumerated and the convex sequence h(theta_k) is searched for its leftmost
/// minimum. Ties resolve to the smallest theta, then the smallest beta (lower median).
inline MerCoefficients fit_lad(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("x/y size mismatch");
  const std::size_t n = x.size();
  if (n < 2) throw NumericError("LAD fit needs at least two samples");
  const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
  if (*xmin == *xmax) throw NumericError("all samples share one covariate value; slope unidentifiable");

  std::vector<double> slopes;
  slopes.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (x[i] != x[j]) slopes.push_back((y[j] - y[i]) / (x[i] - x[j]));
  std::sort(slopes.begin(), slopes.end());
  slopes.erase(std::unique(slopes.begin(), slopes.end()), slopes.end());

  std::vector<double> work;
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) scale += std::abs(y[i]) + std::abs(x[i]);
  const double tol = 1e-12 * std::max(scale, 1.0);
  auto h = [&](std::size_t k) { return detail::profile_lad(x, y, slopes[k], work).second; };

  // first k with h(k+1) - h(k) >= -tol; differences are non-decreasing by convexity
  std::size_t lo = 0, hi = slopes.size() - 1;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (h(mid + 1) - h(mid) >= -tol)
      hi = mid;
    else
      lo = mid + 1;
  }
  // walk left across a numerically flat stretch to honour the smallest-theta rule
  double best = h(lo);
  while (lo > 0 && h(lo - 1) <= best + tol) best = h(--lo);

  const double theta = slopes[lo];
  const auto [beta, loss] = detail::profile_lad(x, y, theta, work);
  return {beta, theta, loss};
}

/// Regression sample: one positive extremal range at one pixel, level and slice.
struct RangeSample {
  std::uint32_t pixel = 0;
  double x = 0.0;  // level covariate
  double y = 0.0;  // log range
  std::uint32_t slice = 0;
};

/// Samples grouped by pixel (compressed rows), pixels in row-major order.
class SampleSet {
 public:
  SampleSet() = default;
  SampleSet(std::size_t nx, std::size_t ny, std::vector<RangeSample> samples) : nx_(nx), ny_(ny) {
    std::stable_sort(samples.begin(), samples.end(),
                     [](const RangeSample& a, const RangeSample& b) { return a.pixel < b.pixel; });
    offsets_.assign(nx * ny + 1, 0);
    for (const auto& s : samples) {
      if (s.pixel >= nx * ny) throw ValidationError("sample pixel index out of range");
      ++offsets_[s.pixel + 1];
    }
    std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
    x_.reserve(samples.size());
    y_.reserve(samples.size());
    slice_.reserve(samples.size());
    for (const auto& s : samples) {
      x_.push_back(s.x);
      y_.push_back(s.y);
      slice_.push_back(s.slice);
    }
  }

  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  std::size_t pixels() const { return nx_ * ny_; }
  std::size_t size() const { return x_.size(); }
  std::size_t begin(std::size_t pixel) const { return offsets_[pixel]; }
  std::size_t end(std::size_t pixel) const { return offsets_[pixel + 1]; }
  std::span<const double> x() const { return x_; }
  std::span<const double> y() const { return y_; }
  std::span<const std::uint32_t> slices() const { return slice_; }
  std::span<const double> x(std::size_t pixel) const { return std::span(x_).subspan(begin(pixel), end(pixel) - begin(pixel)); }
  std::span<const double> y(std::size_t pixel) const { return std::span(y_).subspan(begin(pixel), end(pixel) - begin(pixel)); }

  /// Subset keeping the samples for which keep(sample index) is true.
  template <typename Pred>
  SampleSet filter(Pred keep) const {
    std::vector<RangeSample> out;
    for (std::size_t p = 0; p < pixels(); ++p)
      for (std::size_t i = begin(p); i < end(p); ++i)
        if (keep(i)) out.push_back({static_cast<std::uint32_t>(p), x_[i], y_[i], slice_[i]});
    return SampleSet(nx_, ny_, std::move(out));
  }

 private:
  std::size_t nx_ = 0, ny_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<double> x_, y_;
  std::vector<std::uint32_t> slice_;
};

/// Exact per-pixel median regression.
inline MerCoefficients fit_mer_pixel(std::span<const double> x, std::span<const double> y) { return fit_lad(x, y); }

enum class FitMode { PerPixel, Spline };

struct MerSurface {
  RealGrid beta;
  RealGrid theta;
  RealGrid se_beta;
  RealGrid se_theta;
  FitMode mode = FitMode::PerPixel;
  std::size_t knots_x = 0, knots_y = 0;
  double penalty = 0.0;
  DomainMask domain;
};

/// Per-pixel LAD fits; pixels with unidentifiable slopes are NaN.
inline MerSurface fit_mer_pixels(const SampleSet& samples, const DomainMask& domain) {
  MerSurface s{RealGrid(samples.nx(), samples.ny(), std::nan("")), RealGrid(samples.nx(), samples.ny(), std::nan("")),
               RealGrid(samples.nx(), samples.ny(), std::nan("")), RealGrid(samples.nx(), samples.ny(), std::nan("")),
               FitMode::PerPixel, 0, 0, 0.0, domain};
  parallel_for(samples.pixels(), [&](std::size_t p) {
    if (!domain.inside[p]) return;
    auto x = samples.x(p);
    if (x.size() < 2 || *std::min_element(x.begin(), x.end()) == *std::max_element(x.begin(), x.end())) return;
    auto c = fit_lad(x, samples.y(p));
    s.beta[p] = c.beta;
    s.theta[p] = c.theta;
  });
  return s;
}

/// Uniform cubic B-spline basis with `count` functions spanning [0, extent].
class CubicBSplineBasis {
 public:
  CubicBSplineBasis() = default;
  CubicBSplineBasis(std::size_t count, double extent) : count_(count), extent_(extent) {
    if (count < 4) throw ValidationError("cubic B-spline basis needs at least 4 functions");
    spacing_ = extent > 0.0 ? extent / static_cast<double>(count - 3) : 1.0;
  }

  std::size_t count() const { return count_; }

  /// First non-zero basis index and the four weights at position t.
  std::pair<std::size_t, std::array<double, 4>> eval(double t) const {
    const double s = t / spacing_;
    const auto last = static_cast<double>(count_ - 4);
    const double cell = std::clamp(std::floor(s), 0.0, last);
    const double u = s - cell;
    const double v = 1.0 - u;
    return {static_cast<std::size_t>(cell),
            {v * v * v / 6.0, (3 * u * u * u - 6 * u * u + 4) / 6.0, (-3 * u * u * u + 3 * u * u + 3 * u + 1) / 6.0,
             u * u * u / 6.0}};
  }

 private:
  std::size_t count_ = 0;
  double extent_ = 0.0;
  double spacing_ = 1.0;
};

/// Smoothed check loss at the median: |r|/2 outside [-kappa, kappa], a matching quadratic inside.
inline double smoothed_pinball(double r, double kappa) {
  const double a = std::abs(r);
  return a >= kappa ? 0.5 * a : r * r / (4.0 * kappa) + kappa / 4.0;
}
inline double smoothed_pinball_derivative(double r, double kappa) {
  if (r >= kappa) return 0.5;
  if (r <= -kappa) return -0.5;
  return r / (2.0 * kappa);
}
inline double pinball_median(double r) { return 0.5 * std::abs(r); }

/// Penalised smoothed median regression with tensor-product spline surfaces
/// beta(s) and theta(s):
///   J(c) = mean_i rho_kappa(y_i - beta(s_i) + theta(s_i) x_i) + penalty (D(c_beta) + D(c_theta)),
/// D being the sum of squared second differences of a coefficient grid along both axes.
/// Coefficients are laid out as [c_beta (kx * ky, x fastest), c_theta (kx * ky)].
class MerSplineProblem {
 public:
  MerSplineProblem(const SampleSet& samples, const DomainMask& domain, std::size_t knots_x, std::size_t knots_y,
                   double penalty)
      : samples_(&samples),
        domain_(&domain),
        bx_(knots_x, static_cast<double>(samples.nx() - 1)),
        by_(knots_y, static_cast<double>(samples.ny() - 1)),
        penalty_(penalty) {
    if (!(penalty >= 0.0)) throw ValidationError("penalty must be non-negative");
    const std::size_t dim = 2 * knots_x * knots_y;
    std::size_t n = 0;
    for (std::size_t p = 0; p < samples.pixels(); ++p)
      if (domain.inside[p]) n += samples.end(p) - samples.begin(p);
    if (n < dim) throw NumericError("degenerate spline basis: fewer samples than basis functions");
    n_ = n;
    for (std::size_t p = 0; p < samples.pixels(); ++p) {
      if (!domain.inside[p] || samples.begin(p) == samples.end(p)) continue;
      PixelBasis pb;
      pb.pixel = p;
      std::tie(pb.ix, pb.wx) = bx_.eval(static_cast<double>(p % samples.nx()));
      std::tie(pb.iy, pb.wy) = by_.eval(static_cast<double>(p / samples.nx()));
      pixels_.push_back(pb);
    }
  }

  std::size_t dimension() const { return 2 * bx_.count() * by_.count(); }
  std::size_t samples() const { return n_; }
  double penalty() const { return penalty_; }
  std::size_t knots_x() const { return bx_.count(); }
  std::size_t knots_y() const { return by_.count(); }

  /// beta and theta at an arbitrary grid position.
  std::pair<double, double> surface_at(std::span<const double> c, double x, double y) const {
    auto [ix, wx] = bx_.eval(x);
    auto [iy, wy] = by_.eval(y);
    return eval_pair(c, ix, wx, iy, wy);
  }

  double value(std::span<const double> c, double kappa) const { return evaluate(c, kappa, nullptr); }
  double value_and_gradient(std::span<const double> c, double kappa, std::span<double> grad) const {
    return evaluate(c, kappa, &grad);
  }

  /// Unsmoothed median check loss averaged over the samples accepted by `use`.
  template <typename Pred>
  double check_loss(std::span<const double> c, Pred use) const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& pb : pixels_) {
      auto [b, t] = eval_pair(c, pb.ix, pb.wx, pb.iy, pb.wy);
      for (std::size_t i = samples_->begin(pb.pixel); i < samples_->end(pb.pixel); ++i) {
        if (!use(i)) continue;
        s += pinball_median(samples_->y()[i] - b + t * samples_->x()[i]);
        ++n;
      }
    }
    return n == 0 ? 0.0 : s / static_cast<double>(n);
  }

 private:
  struct PixelBasis {
    std::size_t pixel = 0;
    std::size_t ix = 0, iy = 0;
    std::array<double, 4> wx{}, wy{};
  };

  std::pair<double, double> eval_pair(std::span<const double> c, std::size_t ix, const std::array<double, 4>& wx,
                                      std::size_t iy, const std::array<double, 4>& wy) const {
    const std::size_t kx = bx_.count(), plane = kx * by_.count();
    double b = 0.0, t = 0.0;
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t i = 0; i < 4; ++i) {
        const double w = wx[i] * wy[j];
        const std::size_t k = (iy + j) * kx + ix + i;
        b += w * c[k];
        t += w * c[plane + k];
      }
    return {b, t};
  }

  double roughness(std::span<const double> c, std::span<double>* grad) const {
    const std::size_t kx = bx_.count(), ky = by_.count(), plane = kx * ky;
    double r = 0.0;
    for (std::size_t surf = 0; surf < 2; ++surf) {
      const std::size_t o = surf * plane;
      auto term = [&](std::size_t a, std::size_t m, std::size_t b) {
        const double d = c[o + a] - 2.0 * c[o + m] + c[o + b];
        r += d * d;
        if (grad) {
          const double g = 2.0 * penalty_ * d;
          (*grad)[o + a] += g;
          (*grad)[o + m] -= 2.0 * g;
          (*grad)[o + b] += g;
        }
      };
      for (std::size_t j = 0; j < ky; ++j)
        for (std::size_t i = 1; i + 1 < kx; ++i) term(j * kx + i - 1, j * kx + i, j * kx + i + 1);
      for (std::size_t j = 1; j + 1 < ky; ++j)
        for (std::size_t i = 0; i < kx; ++i) term((j - 1) * kx + i, j * kx + i, (j + 1) * kx + i);
    }
    return penalty_ * r;
  }

  double evaluate(std::span<const double> c, double kappa, std::span<double>* grad) const {
    const std::size_t dim = dimension(), kx = bx_.count(), plane = kx * by_.count();
    if (c.size() != dim) throw ValidationError("coefficient vector has the wrong dimension");
    // fixed chunking keeps the floating-point summation order independent of the thread count
    const Chunks chunks{pixels_.size(), 256};
    std::vector<double> loss(chunks.count(), 0.0);
    std::vector<std::vector<double>> partial(grad ? chunks.count() : 0);
    const auto xs = samples_->x();
    const auto ys = samples_->y();
    const double inv_n = 1.0 / static_cast<double>(n_);
    parallel_for(chunks.count(), [&](std::size_t ch) {
      std::vector<double> g;
      if (grad) g.assign(dim, 0.0);
      double l = 0.0;
      for (std::size_t q = chunks.begin(ch); q < chunks.end(ch); ++q) {
        const auto& pb = pixels_[q];
        auto [b, t] = eval_pair(c, pb.ix, pb.wx, pb.iy, pb.wy);
        double gb = 0.0, gt = 0.0;
        for (std::size_t i = samples_->begin(pb.pixel); i < samples_->end(pb.pixel); ++i) {
          const double r = ys[i] - b + t * xs[i];
          l += smoothed_pinball(r, kappa);
          if (grad) {
            const double d = smoothed_pinball_derivative(r, kappa);
            gb -= d;
            gt += d * xs[i];
          }
        }
        if (grad) {
          for (std::size_t j = 0; j < 4; ++j)
            for (std::size_t i = 0; i < 4; ++i) {
              const double w = pb.wx[i] * pb.wy[j];
              const std::size_t k = (pb.iy + j) * kx + pb.ix + i;
              g[k] += w * gb;
              g[plane + k] += w * gt;
            }
        }
      }
      loss[ch] = l;
      if (grad) partial[ch] = std::move(g);
    });
    double total = 0.0;
    for (double l : loss) total += l;
    total *= inv_n;
    if (grad) {
      std::fill(grad->begin(), grad->end(), 0.0);
      for (const auto& g : partial)
        for (std::size_t k = 0; k < dim; ++k) (*grad)[k] += g[k] * inv_n;
    }
    return total + roughness(c, grad);
  }

  const SampleSet* samples_;
  const DomainMask* domain_;
  CubicBSplineBasis bx_, by_;
  double penalty_;
  std::size_t n_ = 0;
  std::vector<PixelBasis> pixels_;
};

namespace detail {

/// Limited-memory BFGS with Armijo backtracking; deterministic.
template <typename Objective>
std::vector<double> lbfgs_minimize(Objective&& f, std::vector<double> x, std::size_t iters, std::size_t memory = 10) {
  const std::size_t n = x.size();
  std::vector<double> g(n), g_new(n), x_new(n), d(n);
  double fx = f(x, g);
  std::vector<std::vector<double>> s_hist, y_hist;
  std::vector<double> rho_hist;
  for (std::size_t it = 0; it < iters; ++it) {
    // two-loop recursion
    d = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alpha[k] = rho_hist[k] * std::inner_product(s_hist[k].begin(), s_hist[k].end(), d.begin(), 0.0);
      for (std::size_t i = 0; i < n; ++i) d[i] -= alpha[k] * y_hist[k][i];
    }
    if (!s_hist.empty()) {
      const auto& sl = s_hist.back();
      const auto& yl = y_hist.back();
      const double gamma = std::inner_product(sl.begin(), sl.end(), yl.begin(), 0.0) /
                           std::inner_product(yl.begin(), yl.end(), yl.begin(), 0.0);
      for (auto& v : d) v *= gamma;
    }
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * std::inner_product(y_hist[k].begin(), y_hist[k].end(), d.begin(), 0.0);
      for (std::size_t i = 0; i < n; ++i) d[i] += s_hist[k][i] * (alpha[k] - beta);
    }
    for (auto& v : d) v = -v;
    double slope = std::inner_product(g.begin(), g.end(), d.begin(), 0.0);
    if (!(slope < 0.0)) {
      // not a descent direction: restart from steepest descent
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
      slope = -std::inner_product(g.begin(), g.end(), g.begin(), 0.0);
      if (slope == 0.0) break;
    }
    double step = s_hist.empty() ? 1.0 / std::max(1.0, std::sqrt(-slope)) : 1.0;
    double f_new = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      for (std::size_t i = 0; i < n; ++i) x_new[i] = x[i] + step * d[i];
      f_new = f(x_new, g_new);
      if (f_new <= fx + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = x_new[i] - x[i];
      y[i] = g_new[i] - g[i];
    }
    const double sy = std::inner_product(s.begin(), s.end(), y.begin(), 0.0);
    const bool converged = std::abs(fx - f_new) <= 1e-15 * std::max(1.0, std::abs(fx));
    x.swap(x_new);
    g.swap(g_new);
    fx = f_new;
    if (sy > 1e-300) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > memory) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
        rho_hist.erase(rho_hist.begin());
      }
    }
    if (converged) break;
  }
  return x;
}

}  // namespace detail

struct SplineFitOptions {
  std::size_t knots_x = 8;
  std::size_t knots_y = 8;
  double penalty = -1.0;  // negative: choose by block cross-validation
  std::size_t iters = 300;
  std::vector<double> penalty_grid{1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
  std::size_t cv_folds = 5;
};

/// Minimises the penalised objective over the kappa schedule {1e-1, 1e-2, 1e-3},
/// a third of the iteration budget each, starting from the pooled LAD line.
inline std::vector<double> optimize_mer_spline(const MerSplineProblem& problem, std::span<const double> start,
                                               std::size_t iters) {
  std::vector<double> c(start.begin(), start.end());
  const std::array<double, 3> kappas{1e-1, 1e-2, 1e-3};
  const std::size_t per = std::max<std::size_t>(1, iters / 3);
  for (double kappa : kappas) {
    c = detail::lbfgs_minimize(
        [&](const std::vector<double>& v, std::vector<double>& g) { return problem.value_and_gradient(v, kappa, g); },
        std::move(c), per);
  }
  return c;
}

/// Pooled LAD over every in-domain sample.
inline MerCoefficients pooled_lad(const SampleSet& samples, const DomainMask& domain) {
  std::vector<double> x, y;
  for (std::size_t p = 0; p < samples.pixels(); ++p) {
    if (!domain.inside[p]) continue;
    auto xs = samples.x(p), ys = samples.y(p);
    x.insert(x.end(), xs.begin(), xs.end());
    y.insert(y.end(), ys.begin(), ys.end());
  }
  if (x.size() <= 2000) return fit_lad(x, y);
  // Large pools: the profiled loss is convex in theta, so golden-section search
  // down to a relative width of 1e-10 replaces the quadratic pair enumeration.
  const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
  if (*xmin == *xmax) throw NumericError("all samples share one covariate value; slope unidentifiable");
  const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
  std::vector<double> xs_sorted(x);
  std::sort(xs_sorted.begin(), xs_sorted.end());
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < xs_sorted.size(); ++i)
    if (xs_sorted[i] > xs_sorted[i - 1]) min_gap = std::min(min_gap, xs_sorted[i] - xs_sorted[i - 1]);
  double lo = -(*ymax - *ymin) / min_gap, hi = -lo;
  std::vector<double> work;
  auto h = [&](double t) { return detail::profile_lad(x, y, t, work).second; };
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - phi * (hi - lo), b = lo + phi * (hi - lo);
  double fa = h(a), fb = h(b);
  while (hi - lo > 1e-10 * std::max(1.0, std::abs(lo) + std::abs(hi))) {
    if (fa <= fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - phi * (hi - lo);
      fa = h(a);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + phi * (hi - lo);
      fb = h(b);
    }
  }
  const double theta = 0.5 * (lo + hi);
  const auto [beta, loss] = detail::profile_lad(x, y, theta, work);
  return {beta, theta, loss};
}

/// Penalty with the lowest held-out check loss under block cross-validation
/// (fold = contiguous group of slices); ties go to the larger penalty.
inline double select_penalty(const SampleSet& samples, const DomainMask& domain, const SplineFitOptions& opt,
                             std::size_t n_slices) {
  if (opt.penalty_grid.empty()) throw ValidationError("empty penalty grid");
  const std::size_t folds = std::max<std::size_t>(2, std::min(opt.cv_folds, n_slices));
  auto fold_of = [&](std::size_t sample) { return samples.slices()[sample] * folds / std::max<std::size_t>(n_slices, 1); };
  std::vector<double> score(opt.penalty_grid.size(), 0.0);
  for (std::size_t f = 0; f < folds; ++f) {
    const SampleSet train = samples.filter([&](std::size_t i) { return fold_of(i) != f; });
    const auto base = pooled_lad(train, domain);
    for (std::size_t k = 0; k < opt.penalty_grid.size(); ++k) {
      MerSplineProblem prob(train, domain, opt.knots_x, opt.knots_y, opt.penalty_grid[k]);
      std::vector<double> start(prob.dimension(), base.beta);
      std::fill(start.begin() + static_cast<std::ptrdiff_t>(start.size() / 2), start.end(), base.theta);
      const auto c = optimize_mer_spline(prob, start, opt.iters);
      MerSplineProblem held(samples, domain, opt.knots_x, opt.knots_y, opt.penalty_grid[k]);
      score[k] += held.check_loss(c, [&](std::size_t i) { return fold_of(i) == f; });
    }
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < score.size(); ++k)
    if (score[k] <= score[best]) best = k;
  return opt.penalty_grid[best];
}

/// Spatially smooth MER surfaces by penalised spline median regression.
inline MerSurface fit_mer_spline(const SampleSet& samples, const DomainMask& domain, SplineFitOptions opt,
                                 std::size_t n_slices) {
  if (opt.penalty < 0.0) opt.penalty = select_penalty(samples, domain, opt, n_slices);
  MerSplineProblem prob(samples, domain, opt.knots_x, opt.knots_y, opt.penalty);
  const auto base = pooled_lad(samples, domain);
  std::vector<double> start(prob.dimension(), base.beta);
  std::fill(start.begin() + static_cast<std::ptrdiff_t>(start.size() / 2), start.end(), base.theta);
  const auto c = optimize_mer_spline(prob, start, opt.iters);

  const std::size_t nx = samples.nx(), ny = samples.ny();
  MerSurface s{RealGrid(nx, ny, std::nan("")), RealGrid(nx, ny, std::nan("")), RealGrid(nx, ny, std::nan("")),
               RealGrid(nx, ny, std::nan("")), FitMode::Spline, opt.knots_x, opt.knots_y, opt.penalty, domain};
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t x = 0; x < nx; ++x) {
      if (!domain.contains(x, y)) continue;
      auto [b, t] = prob.surface_at(c, static_cast<double>(x), static_cast<double>(y));
      s.beta(x, y) = b;
      s.theta(x, y) = t;
    }
  return s;
}

/// Median extremal range at pixel (x, y) and level p: exp(beta - theta log(-log(1 - p))).
inline double predict_mer(const MerSurface& surface, std::size_t x, std::size_t y, double p) {
  const double cov = level_covariate(p);
  if (x >= surface.beta.nx() || y >= surface.beta.ny() || !surface.domain.contains(x, y))
    throw ValidationError("pixel outside the fitted domain");
  const double b = surface.beta(x, y), t = surface.theta(x, y);
  if (!std::isfinite(b) || !std::isfinite(t)) return std::nan("");
  return std::exp(b - t * cov);
}

inline RealGrid predict_mer_map(const MerSurface& surface, double p) {
  RealGrid out(surface.beta.nx(), surface.beta.ny(), std::nan(""));
  for (std::size_t y = 0; y < out.ny(); ++y)
    for (std::size_t x = 0; x < out.nx(); ++x)
      if (surface.domain.contains(x, y)) out(x, y) = predict_mer(surface, x, y, p);
  return out;
}

struct JackknifeResult {
  std::vector<double> se;
  std::vector<double> mean;
  std::vector<std::vector<double>> replicates;  // one per deleted block, in block-id order
  std::vector<int> block_ids;
};

/// Delete-one-block jackknife. `estimate(kept_slices)` reruns the whole
/// estimation chain and returns a flat parameter vector of fixed length.
/// SE = sqrt((B - 1) / B * sum_b (est_b - mean)^2); NaN if any replicate is NaN.
inline JackknifeResult jackknife(std::span<const int> block_of_slice,
                                 const std::function<std::vector<double>(std::span<const std::size_t>)>& estimate) {
  std::map<int, std::vector<std::size_t>> blocks;
  for (std::size_t t = 0; t < block_of_slice.size(); ++t) blocks[block_of_slice[t]];
  if (blocks.size() < 3) throw ValidationError("jackknife needs at least 3 blocks");
  JackknifeResult res;
  for (const auto& [id, unused] : blocks) {
    res.block_ids.push_back(id);
    std::vector<std::size_t> keep;
    for (std::size_t t = 0; t < block_of_slice.size(); ++t)
      if (block_of_slice[t] != id) keep.push_back(t);
    res.replicates.push_back(estimate(keep));
  }
  const std::size_t dim = res.replicates.front().size();
  for (const auto& r : res.replicates)
    if (r.size() != dim) throw NumericError("jackknife replicates differ in length");
  const double nb = static_cast<double>(res.replicates.size());
  res.mean.assign(dim, 0.0);
  res.se.assign(dim, 0.0);
  for (std::size_t k = 0; k < dim; ++k) {
    double m = 0.0;
    for (const auto& r : res.replicates) m += r[k];
    m /= nb;
    double ss = 0.0;
    for (const auto& r : res.replicates) ss += (r[k] - m) * (r[k] - m);
    res.mean[k] = m;
    res.se[k] = std::sqrt((nb - 1.0) / nb * ss);
  }
  return res;
}

/// True where every delete-one replicate of parameter k is strictly positive.
inline std::vector<std::uint8_t> all_replicates_positive(const JackknifeResult& r) {
  std::vector<std::uint8_t> out(r.mean.size(), 1);
  for (const auto& rep : r.replicates)
    for (std::size_t k = 0; k < rep.size(); ++k)
      if (!(rep[k] > 0.0)) out[k] = 0;
  return out;
}

}  // namespace exrange
