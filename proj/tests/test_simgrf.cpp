#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "exrange/extremal_range.hpp"
#include "exrange/pipeline.hpp"
#include "exrange/simgrf.hpp"

using namespace exrange;

namespace {

GaussianSimConfig small_config(std::size_t n, std::size_t slices, double ell, std::uint64_t seed) {
  GaussianSimConfig c;
  c.nx = c.ny = n;
  c.n_slices = slices;
  c.ell = ell;
  c.seed = seed;
  return c;
}

std::vector<double> pixel_series(const RasterStack& s, std::size_t x, std::size_t y) {
  std::vector<double> v(s.nt());
  for (std::size_t t = 0; t < s.nt(); ++t) v[t] = s.at(t, x, y);
  return v;
}

double sample_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(Matern, AlphaExamples) {
  EXPECT_DOUBLE_EQ(matern_alpha(2.0, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(matern_alpha(2.0, 2.0), 0.5);
  EXPECT_THROW(matern_alpha(1.0, 1.0), ValidationError);
  EXPECT_THROW(matern_alpha(2.0, 0.0), ValidationError);
}

TEST(Matern, CorrelationShape) {
  EXPECT_EQ(matern_correlation(0.0, 2.0, 10.0), 1.0);
  EXPECT_NEAR(matern_correlation(3.0, 0.5, 2.0), std::exp(-1.5), 1e-12);
  double prev = 1.0;
  for (double h = 0.5; h < 60.0; h += 0.5) {
    const double r = matern_correlation(h, 2.0, 10.0);
    EXPECT_LT(r, prev);
    EXPECT_GT(r, 0.0);
    prev = r;
  }
}

TEST(Matern, CurvatureAtOriginIsAlpha) {
  const double nu = 2.5, ell = 7.0, h = 1e-3;
  const double curv = 2.0 * (1.0 - matern_correlation(h, nu, ell)) / (h * h);
  EXPECT_NEAR(curv, matern_alpha(nu, ell), 1e-3 * matern_alpha(nu, ell));
}

TEST(Simulate, UnitVariance) {
  const auto s = simulate_gaussian(small_config(16, 1000, 4.0, 1));
  for (auto [x, y] : {std::pair<std::size_t, std::size_t>{0, 0}, {8, 8}, {15, 3}}) {
    const auto v = pixel_series(s, x, y);
    double m = 0, q = 0;
    for (double a : v) m += a / v.size();
    for (double a : v) q += (a - m) * (a - m) / (v.size() - 1);
    EXPECT_NEAR(q, 1.0, 3.0 * std::sqrt(2.0 / 1000.0));
    EXPECT_NEAR(m, 0.0, 3.0 / std::sqrt(1000.0));
  }
}

TEST(Simulate, CorrelationAtRange) {
  const double ell = 5.0;
  const auto s = simulate_gaussian(small_config(32, 1000, ell, 2));
  const double rho = matern_correlation(ell, 2.0, ell);
  const double se = (1.0 - rho * rho) / std::sqrt(1000.0);
  EXPECT_NEAR(sample_correlation(pixel_series(s, 10, 10), pixel_series(s, 15, 10)), rho, 3.0 * se);
  EXPECT_NEAR(sample_correlation(pixel_series(s, 20, 4), pixel_series(s, 20, 9)), rho, 3.0 * se);
}

TEST(Simulate, SpacingEntersThroughPhysicalLag) {
  auto c = small_config(32, 1000, 10.0, 3);
  c.dx = 2.0;
  const auto s = simulate_gaussian(c);
  const double rho = matern_correlation(10.0, 2.0, 10.0);
  EXPECT_NEAR(sample_correlation(pixel_series(s, 10, 10), pixel_series(s, 15, 10)), rho,
              3.0 * (1.0 - rho * rho) / std::sqrt(1000.0));
  EXPECT_EQ(s.dx(), 2.0);
}

TEST(Simulate, Deterministic) {
  const auto a = simulate_gaussian(small_config(24, 6, 5.0, 42));
  const auto b = simulate_gaussian(small_config(24, 6, 5.0, 42));
  const auto c = simulate_gaussian(small_config(24, 6, 5.0, 43));
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  EXPECT_FALSE(std::equal(a.values().begin(), a.values().end(), c.values().begin()));
}

TEST(Simulate, IndependentOfThreadCountAndSliceCount) {
  const std::size_t before = threads();
  set_threads(1);
  const auto a = simulate_gaussian(small_config(20, 8, 5.0, 9));
  set_threads(4);
  const auto b = simulate_gaussian(small_config(20, 8, 5.0, 9));
  set_threads(before);
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  const auto c = simulate_gaussian(small_config(20, 3, 5.0, 9));
  EXPECT_TRUE(std::equal(c.values().begin(), c.values().end(), a.values().begin()));
}

TEST(Simulate, MarginalIsStandardNormal) {
  const std::size_t n = 10000;
  const auto s = simulate_gaussian(small_config(4, n, 3.0, 5));
  auto v = pixel_series(s, 1, 2);
  std::sort(v.begin(), v.end());
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double F = 0.5 * std::erfc(-v[i] / std::sqrt(2.0));
    d = std::max({d, std::abs(F - double(i) / n), std::abs(F - double(i + 1) / n)});
  }
  EXPECT_LT(d, 1.63 / std::sqrt(double(n)));  // 1% critical value
}

TEST(Simulate, RejectsBadConfig) {
  auto c = small_config(8, 2, 3.0, 0);
  c.nu = 1.0;
  EXPECT_THROW(simulate_gaussian(c), ValidationError);
  c = small_config(8, 0, 3.0, 0);
  EXPECT_THROW(simulate_gaussian(c), ValidationError);
  AdSimConfig ad{small_config(8, 2, 3.0, 0), 0.0};
  EXPECT_THROW(simulate_ad_field(ad), ValidationError);
}

TEST(ScaleMixture, InfiniteTailIndexIsGaussian) {
  AdSimConfig ad{small_config(16, 5, 4.0, 77), INFINITY};
  const auto a = simulate_ad_field(ad);
  const auto g = simulate_gaussian(ad.base);
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), g.values().begin()));
}

TEST(ScaleMixture, ParetoWeights) {
  AdSimConfig ad{small_config(2, 20000, 1.0 + 1.0, 4), 2.0};
  const auto w = mixture_weights(ad);
  std::size_t over = 0;
  for (double v : w) {
    EXPECT_GE(v, 1.0);
    over += v > 3.0 ? 1 : 0;
  }
  const double expected = 1.0 / 9.0;
  EXPECT_NEAR(double(over) / w.size(), expected, 4.0 * std::sqrt(expected * (1 - expected) / w.size()));
}

TEST(ScaleMixture, TailDependencePersists) {
  AdSimConfig ad{small_config(32, 400, 4.0, 6), 1.0};
  const auto mix = simulate_ad_field(ad);
  const auto gauss = simulate_gaussian(ad.base);
  const PixelOffset lag{8, 0};
  const double chi_mix = tail_dependence(mix, pooled_quantile_field(mix, 0.99), lag).chi;
  const double chi_gauss = tail_dependence(gauss, pooled_quantile_field(gauss, 0.99), lag).chi;
  EXPECT_GT(chi_mix, 0.3);
  EXPECT_GT(chi_mix, 2.0 * chi_gauss);
}

TEST(ScaleMixture, MedianRangeDoesNotCollapse) {
  AdSimConfig ad{small_config(48, 300, 6.0, 10), 1.0};
  const auto s = simulate_ad_field(ad);
  const auto d = s.domain();
  const double m90 =
      pooled_median_range(range_fields(s, pooled_quantile_field(s, 0.9), BoundaryPolicy::Erode, EdgeFallback::None), d);
  const double m99 = pooled_median_range(
      range_fields(s, pooled_quantile_field(s, 0.99), BoundaryPolicy::Erode, EdgeFallback::None), d);
  EXPECT_GE(m99, 0.7 * m90);
}
