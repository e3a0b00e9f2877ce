#include <gtest/gtest.h>

#include <random>

#include "exrange/thresholds.hpp"

using namespace exrange;

namespace {

RasterStack series(std::vector<float> v) {
  const std::size_t nt = v.size();
  return RasterStack(1, 1, nt, 1.0, std::move(v));
}

// Brute force: smallest observed value r with #(x <= r) / n >= p.
double inf_quantile(std::vector<float> v, double p) {
  std::sort(v.begin(), v.end());
  for (float r : v) {
    std::size_t c = 0;
    for (float x : v) c += x <= r ? 1 : 0;
    if (static_cast<double>(c) / static_cast<double>(v.size()) >= p - 1e-12) return r;
  }
  return v.back();
}

}  // namespace

TEST(Quantile, OddCountMedian) { EXPECT_EQ(quantile_field(series({5, 1, 4, 2, 3}), 0.5).u[0], 3.0); }

TEST(Quantile, EvenCountUsesInfimumConvention) {
  EXPECT_EQ(quantile_field(series({4, 1, 3, 2}), 0.5).u[0], 2.0);
  EXPECT_EQ(inf_quantile({4, 1, 3, 2}, 0.5), 2.0);
}

TEST(Quantile, ConstantSeries) {
  for (double p : {0.01, 0.5, 0.85, 0.99}) EXPECT_EQ(quantile_field(series({7, 7, 7, 7, 7}), p).u[0], 7.0);
}

TEST(Quantile, MatchesBruteForceInfimum) {
  std::mt19937 rng(5);
  std::normal_distribution<float> n;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> v(2 + rng() % 120);
    for (auto& x : v) x = n(rng);
    for (double p : {0.1, 0.5, 0.85, 0.86, 0.9, 0.95, 0.98, 0.99})
      ASSERT_EQ(quantile_field(series(v), p).u[0], inf_quantile(v, p)) << "p=" << p << " n=" << v.size();
  }
}

TEST(Quantile, LevelGridValuesDoNotRoundUp) {
  // 0.85 * 100 is 85.00000000000001 in binary; the rank must still be 85
  EXPECT_EQ(quantile_rank(0.85, 100), 85u);
  EXPECT_EQ(quantile_rank(0.98, 100), 98u);
  EXPECT_EQ(quantile_rank(0.5, 5), 3u);
}

TEST(Quantile, Errors) {
  EXPECT_THROW(quantile_field(series({1, 2}), 0.0), ValidationError);
  EXPECT_THROW(quantile_field(series({1, 2}), 1.0), ValidationError);
  EXPECT_THROW(quantile_field(series({1}), 0.5), ValidationError);
}

TEST(Quantile, MonotoneInLevel) {
  std::mt19937 rng(9);
  std::normal_distribution<float> n;
  std::vector<float> v(6 * 5 * 40);
  for (auto& x : v) x = n(rng);
  const RasterStack s(6, 5, 40, 1.0, v);
  const std::vector<double> levels{0.1, 0.3, 0.5, 0.85, 0.9, 0.95, 0.99};
  const auto f = quantile_fields(s, levels);
  for (std::size_t l = 1; l < levels.size(); ++l)
    for (std::size_t i = 0; i < 30; ++i) EXPECT_LE(f[l - 1].u[i], f[l].u[i]);
}

TEST(Quantile, NodataPixelsGetNoThreshold) {
  std::vector<float> v(2 * 1 * 3, 1.0f);
  v[1] = v[3] = v[5] = static_cast<float>(kDefaultNodata);
  const auto f = quantile_field(RasterStack(2, 1, 3, 1.0, v), 0.5);
  EXPECT_EQ(f.u[0], 1.0);
  EXPECT_TRUE(std::isnan(f.u[1]));
}

TEST(Excursion, EqualToThresholdIsEmpty) {
  const RasterStack s(3, 3, 1, 1.0, std::vector<float>(9, 2.0f));
  const auto m = excursion_mask(s, 0, constant_threshold(s, 2.0), BoundaryPolicy::Erode);
  EXPECT_EQ(count_true(m.exceed), 0u);
}

TEST(Excursion, SinglePixel) {
  const RasterStack s(2, 2, 1, 1.0, std::vector<float>{5, 1, 1, 1});
  const auto m = excursion_mask(s, 0, constant_threshold(s, 2.0), BoundaryPolicy::Erode);
  EXPECT_EQ(count_true(m.exceed), 1u);
  EXPECT_EQ(m.exceed(0, 0), 1);
}

TEST(Excursion, NodataPixelFollowsPolicy) {
  std::vector<float> v(9, 0.0f);
  v[4] = static_cast<float>(kDefaultNodata);
  const RasterStack s(3, 3, 1, 1.0, v);
  const auto thr = constant_threshold(s, 1.0);
  EXPECT_EQ(excursion_mask(s, 0, thr, BoundaryPolicy::FillExceed).exceed(1, 1), 1);
  EXPECT_EQ(excursion_mask(s, 0, thr, BoundaryPolicy::Erode).exceed(1, 1), 0);
}

TEST(Excursion, DimensionMismatch) {
  const RasterStack s(3, 3, 1, 1.0, std::vector<float>(9, 0.0f));
  ThresholdField thr{0.5, RealGrid(2, 2, 0.0)};
  EXPECT_THROW(excursion_mask(s, 0, thr, BoundaryPolicy::Erode), ValidationError);
}

TEST(Excursion, ExceedanceFractionNearOneMinusP) {
  std::mt19937 rng(21);
  std::normal_distribution<float> n;
  const std::size_t nt = 50;
  std::vector<float> v(10 * 10 * nt);
  for (auto& x : v) x = n(rng);
  const RasterStack s(10, 10, nt, 1.0, v);
  for (double p : {0.8, 0.9, 0.95}) {
    const auto thr = quantile_field(s, p);
    std::size_t hits = 0;
    std::vector<std::size_t> per_pixel(100, 0);
    for (std::size_t t = 0; t < nt; ++t) {
      const auto m = excursion_mask(s, t, thr, BoundaryPolicy::Erode);
      for (std::size_t i = 0; i < 100; ++i) {
        hits += m.exceed[i];
        per_pixel[i] += m.exceed[i];
      }
    }
    const double frac = static_cast<double>(hits) / static_cast<double>(100 * nt);
    EXPECT_LE(std::abs(frac - (1.0 - p)), 1.0 / nt + 1e-12);
    for (auto c : per_pixel) EXPECT_LE(static_cast<double>(c), nt * (1.0 - p) + 1.0);
  }
}
