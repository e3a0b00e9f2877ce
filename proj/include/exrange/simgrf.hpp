#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <memory>
#include <mutex>
#include <random>
#include <vector>

#include <fftw3.h>

#include "exrange/parallel.hpp"
#include "exrange/raster.hpp"

namespace exrange {

/// Second spectral moment of the Matérn correlation with smoothness nu and range ell:
/// rho(h) = 1 - alpha/2 |h|^2 + o(|h|^2) with alpha = nu / (ell^2 (nu - 1)).
inline double matern_alpha(double nu, double ell) {
  if (!(nu > 1.0)) throw ValidationError("Matérn smoothness must exceed 1 for a finite second spectral moment");
  if (!(ell > 0.0)) throw ValidationError("Matérn range must be positive");
  return nu / (ell * ell * (nu - 1.0));
}

/// Matérn correlation 2^(1-nu)/Gamma(nu) z^nu K_nu(z), z = sqrt(2 nu) h / ell.
inline double matern_correlation(double h, double nu, double ell) {
  if (h <= 0.0) return 1.0;
  const double z = std::sqrt(2.0 * nu) * h / ell;
  if (z > 700.0) return 0.0;
  return std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(z, nu) * std::cyl_bessel_k(nu, z);
}

struct GaussianSimConfig {
  std::size_t nx = 128;
  std::size_t ny = 128;
  double dx = 1.0;
  double nu = 2.0;
  double ell = 20.0;
  std::uint64_t seed = 0;
  std::size_t n_slices = 100;

  double alpha() const { return matern_alpha(nu, ell); }
  void validate() const {
    if (nx == 0 || ny == 0) throw ValidationError("simulation grid must be non-empty");
    if (!(dx > 0.0)) throw ValidationError("dx must be positive");
    if (n_slices == 0) throw ValidationError("n_slices must be >= 1");
    (void)matern_alpha(nu, ell);
  }
};

/// Scale mixture X = W G with W ~ Pareto(a_mix) per slice; a_mix = +inf gives W = 1.
struct AdSimConfig {
  GaussianSimConfig base;
  double a_mix = 1.0;

  void validate() const {
    base.validate();
    if (!(a_mix > 0.0)) throw ValidationError("mixture tail index must be positive");
  }
};

/// SplitMix64 finaliser; turns (seed, counter) into independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t counter) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (counter + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(fftw_complex* p) const { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

inline FftwBuffer fftw_buffer(std::size_t n) {
  auto* p = fftw_alloc_complex(n);
  if (!p) throw std::bad_alloc();
  return FftwBuffer(p);
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t m = 1;
  while (m < n) m <<= 1;
  return m;
}

}  // namespace detail

/// Exact stationary Gaussian sampler on an nx x ny grid by circulant embedding
/// of the Matérn correlation on a periodic (mx x my) torus.
class CirculantSampler {
 public:
  static constexpr std::size_t kMaxEnlargement = 8;

  explicit CirculantSampler(const GaussianSimConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t base_x = detail::next_pow2(std::max<std::size_t>(2 * cfg.nx, 2));
    const std::size_t base_y = detail::next_pow2(std::max<std::size_t>(2 * cfg.ny, 2));
    for (std::size_t factor = 1; factor <= kMaxEnlargement; factor *= 2) {
      if (try_embed(base_x * factor, base_y * factor)) return;
    }
    throw NumericError("circulant embedding not positive definite after enlargement factor 8");
  }

  CirculantSampler(const CirculantSampler&) = delete;
  CirculantSampler& operator=(const CirculantSampler&) = delete;

  ~CirculantSampler() {
    if (plan_) {
      std::lock_guard lock(detail::fftw_planner_mutex());
      fftw_destroy_plan(plan_);
    }
  }

  std::size_t embed_nx() const { return mx_; }
  std::size_t embed_ny() const { return my_; }

  /// One unit-variance slice, written row-major into `out` (nx * ny values).
  void sample(std::uint64_t stream_seed, std::span<float> out) const {
    const std::size_t m = mx_ * my_;
    auto in = detail::fftw_buffer(m);
    auto res = detail::fftw_buffer(m);
    std::mt19937_64 rng(stream_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t k = 0; k < m; ++k) {
      in[k][0] = sqrt_eig_[k] * normal(rng);
      in[k][1] = sqrt_eig_[k] * normal(rng);
    }
    fftw_execute_dft(plan_, in.get(), res.get());
    for (std::size_t y = 0; y < cfg_.ny; ++y)
      for (std::size_t x = 0; x < cfg_.nx; ++x) out[y * cfg_.nx + x] = static_cast<float>(res[y * mx_ + x][0]);
  }

 private:
  bool try_embed(std::size_t mx, std::size_t my) {
    const std::size_t m = mx * my;
    auto cov = detail::fftw_buffer(m);
    auto eig = detail::fftw_buffer(m);
    for (std::size_t j = 0; j < my; ++j) {
      const double hy = static_cast<double>(std::min(j, my - j)) * cfg_.dx;
      for (std::size_t i = 0; i < mx; ++i) {
        const double hx = static_cast<double>(std::min(i, mx - i)) * cfg_.dx;
        cov[j * mx + i][0] = matern_correlation(std::hypot(hx, hy), cfg_.nu, cfg_.ell);
        cov[j * mx + i][1] = 0.0;
      }
    }
    fftw_plan plan;
    {
      std::lock_guard lock(detail::fftw_planner_mutex());
      plan = fftw_plan_dft_2d(static_cast<int>(my), static_cast<int>(mx), cov.get(), eig.get(), FFTW_FORWARD,
                              FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    double lmax = 0.0, lmin = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m; ++k) {
      lmax = std::max(lmax, eig[k][0]);
      lmin = std::min(lmin, eig[k][0]);
    }
    // Round-off leaves tiny negative eigenvalues even for valid embeddings.
    if (lmin < -1e-9 * lmax) {
      std::lock_guard lock(detail::fftw_planner_mutex());
      fftw_destroy_plan(plan);
      return false;
    }
    sqrt_eig_.resize(m);
    for (std::size_t k = 0; k < m; ++k) sqrt_eig_[k] = std::sqrt(std::max(eig[k][0], 0.0) / static_cast<double>(m));
    mx_ = mx;
    my_ = my;
    // The planning arrays go away; sampling uses new-array execution on equally aligned buffers.
    plan_ = plan;
    return true;
  }

  GaussianSimConfig cfg_;
  std::size_t mx_ = 0, my_ = 0;
  std::vector<double> sqrt_eig_;
  fftw_plan plan_ = nullptr;
};

/// n_slices independent Matérn Gaussian slices; slice t uses stream mix_seed(seed, t).
inline RasterStack simulate_gaussian(const GaussianSimConfig& cfg) {
  const CirculantSampler sampler(cfg);
  const std::size_t px = cfg.nx * cfg.ny;
  std::vector<float> values(px * cfg.n_slices);
  parallel_for(cfg.n_slices, [&](std::size_t t) {
    sampler.sample(mix_seed(cfg.seed, t), std::span<float>(values).subspan(t * px, px));
  });
  return RasterStack(cfg.nx, cfg.ny, cfg.n_slices, cfg.dx, std::move(values), kDefaultNodata, "");
}

/// Per-slice Pareto multipliers, independent of the Gaussian streams.
inline std::vector<double> mixture_weights(const AdSimConfig& cfg) {
  std::vector<double> w(cfg.base.n_slices, 1.0);
  if (std::isinf(cfg.a_mix)) return w;
  for (std::size_t t = 0; t < w.size(); ++t) {
    std::mt19937_64 rng(mix_seed(cfg.base.seed ^ 0xA5A5A5A5A5A5A5A5ull, t));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double v = 1.0 - unif(rng);  // (0, 1]
    w[t] = std::pow(v, -1.0 / cfg.a_mix);
  }
  return w;
}

/// Asymptotically dependent field: every slice of a Gaussian stack scaled by its own heavy-tailed factor.
inline RasterStack simulate_ad_field(const AdSimConfig& cfg) {
  cfg.validate();
  const CirculantSampler sampler(cfg.base);
  const auto weights = mixture_weights(cfg);
  const std::size_t px = cfg.base.nx * cfg.base.ny;
  std::vector<float> values(px * cfg.base.n_slices);
  parallel_for(cfg.base.n_slices, [&](std::size_t t) {
    auto out = std::span<float>(values).subspan(t * px, px);
    sampler.sample(mix_seed(cfg.base.seed, t), out);
    if (weights[t] != 1.0)
      for (auto& v : out) v = static_cast<float>(weights[t] * static_cast<double>(v));
  });
  return RasterStack(cfg.base.nx, cfg.base.ny, cfg.base.n_slices, cfg.base.dx, std::move(values), kDefaultNodata, "");
}

}  // namespace exrange
