#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "exrange/grid.hpp"
#include "exrange/parallel.hpp"

namespace exrange {

using SquaredDistanceGrid = Grid<std::int64_t>;

/// Marks pixels with no feature pixel anywhere (empty feature set).
inline constexpr std::int64_t kNoFeature = std::numeric_limits<std::int64_t>::max();

/// Whether virtual pixels just outside the grid act as non-members of the set.
enum class EdgeFallback { None, GridEdge };

namespace detail {

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace detail

/// Exact squared Euclidean distance, in pixel units, from every pixel centre to
/// the nearest pixel whose value is 0. Separable lower-envelope transform
/// (Meijster et al.) carried out entirely in 64-bit integers.
/// With `outside_is_feature`, pixels outside the grid also count as zeros.
inline SquaredDistanceGrid squared_edt(const BinaryGrid& mask, bool outside_is_feature = false) {
  const auto nx = static_cast<std::int64_t>(mask.nx());
  const auto ny = static_cast<std::int64_t>(mask.ny());
  const std::int64_t inf = nx + ny + 1;

  // Column pass: vertical distance to the nearest zero in the same column.
  Grid<std::int64_t> g(mask.nx(), mask.ny());
  parallel_for(mask.nx(), [&](std::size_t xs) {
    const auto x = static_cast<std::int64_t>(xs);
    auto at = [&](std::int64_t y) -> std::int64_t& { return g(static_cast<std::size_t>(x), static_cast<std::size_t>(y)); };
    at(0) = mask(xs, 0) ? inf : 0;
    for (std::int64_t y = 1; y < ny; ++y) at(y) = mask(xs, static_cast<std::size_t>(y)) ? std::min(inf, at(y - 1) + 1) : 0;
    for (std::int64_t y = ny - 2; y >= 0; --y)
      if (at(y + 1) < at(y)) at(y) = at(y + 1) + 1;
  });

  SquaredDistanceGrid out(mask.nx(), mask.ny());
  parallel_for(mask.ny(), [&](std::size_t ys) {
    std::vector<std::int64_t> s(static_cast<std::size_t>(nx)), t(static_cast<std::size_t>(nx));
    auto gv = [&](std::int64_t i) { return g(static_cast<std::size_t>(i), ys); };
    auto f = [&](std::int64_t x, std::int64_t i) { return (x - i) * (x - i) + gv(i) * gv(i); };
    auto sep = [&](std::int64_t i, std::int64_t u) {
      return detail::floor_div(u * u - i * i + gv(u) * gv(u) - gv(i) * gv(i), 2 * (u - i));
    };
    std::int64_t q = 0;
    s[0] = 0;
    t[0] = 0;
    for (std::int64_t u = 1; u < nx; ++u) {
      while (q >= 0 && f(t[q], s[q]) > f(t[q], u)) --q;
      if (q < 0) {
        q = 0;
        s[0] = u;
      } else {
        std::int64_t w = 1 + sep(s[q], u);
        if (w < nx) {
          ++q;
          s[q] = u;
          t[q] = w;
        }
      }
    }
    for (std::int64_t u = nx - 1; u >= 0; --u) {
      std::int64_t d = gv(s[q]) >= inf ? kNoFeature : f(u, s[q]);
      if (outside_is_feature) {
        const std::int64_t e = std::min({u + 1, nx - u, static_cast<std::int64_t>(ys) + 1, ny - static_cast<std::int64_t>(ys)});
        d = std::min(d, e * e);
      }
      out(static_cast<std::size_t>(u), ys) = d;
      if (u == t[q]) --q;
    }
  });
  return out;
}

/// Physical distance from a squared pixel distance. Every radius comparison in
/// the library goes through this one expression so that thresholds agree bit-for-bit.
inline double physical_distance(std::int64_t d2, double dx) {
  return d2 == kNoFeature ? std::numeric_limits<double>::infinity() : std::sqrt(static_cast<double>(d2)) * dx;
}

/// Distance from each pixel centre to the nearest false pixel centre, times dx.
/// An all-true mask is rejected unless the grid-edge fallback is requested.
inline RealGrid distance_transform(const BinaryGrid& mask, double dx, EdgeFallback fallback = EdgeFallback::None) {
  if (!(dx > 0.0)) throw ValidationError("dx must be positive");
  const bool edge = fallback == EdgeFallback::GridEdge;
  if (!edge && count_true(mask) == mask.size())
    throw NumericError("distance transform undefined: mask has no false pixel (enable the grid-edge fallback)");
  const auto d2 = squared_edt(mask, edge);
  RealGrid r(mask.nx(), mask.ny());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = physical_distance(d2[i], dx);
  return r;
}

/// Erosion by a closed disk: a pixel survives iff every pixel centre within
/// `radius` is set. `outside_value` is the set membership of the area beyond the grid.
inline BinaryGrid erode(const BinaryGrid& mask, double radius, double dx, bool outside_value = false) {
  if (radius < 0.0) throw ValidationError("erosion radius must be non-negative");
  if (!(dx > 0.0)) throw ValidationError("dx must be positive");
  const auto d2 = squared_edt(mask, !outside_value);
  BinaryGrid out(mask.nx(), mask.ny());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (mask[i] && physical_distance(d2[i], dx) > radius) ? 1 : 0;
  return out;
}

/// Dilation by a closed disk: a pixel is set iff some set pixel centre lies within `radius`.
inline BinaryGrid dilate(const BinaryGrid& mask, double radius, double dx, bool outside_value = false) {
  if (radius < 0.0) throw ValidationError("dilation radius must be non-negative");
  if (!(dx > 0.0)) throw ValidationError("dx must be positive");
  // distance to the nearest set pixel = EDT of the complement
  const auto d2 = squared_edt(complement(mask), outside_value);
  BinaryGrid out(mask.nx(), mask.ny());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = physical_distance(d2[i], dx) <= radius ? 1 : 0;
  return out;
}

}  // namespace exrange
