#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "exrange/parallel.hpp"
#include "exrange/raster.hpp"
#include "exrange/thresholds.hpp"

namespace exrange {

/// Per-unit-area Euler characteristic (c0), half perimeter (c1) and area
/// fraction (c2) of excursion sets, averaged over slices.
struct IntrinsicDensities {
  double c0 = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double domain_area = 0.0;
  std::size_t n_slices = 0;
};

/// Mean fraction of domain pixels that exceed.
inline double area_density(std::span<const ExcursionMask> masks, const DomainMask& domain) {
  if (masks.empty()) throw ValidationError("area density needs at least one mask");
  const std::size_t area = domain.area_pixels();
  if (area == 0) throw ValidationError("empty domain");
  double sum = 0.0;
  for (const auto& m : masks) {
    if (!m.exceed.same_shape(domain.inside)) throw ValidationError("mask/domain dimension mismatch");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < m.exceed.size(); ++i) hits += (m.exceed[i] && domain.inside[i]) ? 1 : 0;
    sum += static_cast<double>(hits) / static_cast<double>(area);
  }
  return sum / static_cast<double>(masks.size());
}

/// Number of unit cells (2x2 pixel-centre blocks) lying wholly in the domain;
/// the region over which level-curve length is measured.
inline std::size_t interior_cells(const DomainMask& domain) {
  std::size_t n = 0;
  for (std::size_t y = 0; y + 1 < domain.ny(); ++y)
    for (std::size_t x = 0; x + 1 < domain.nx(); ++x)
      n += (domain.contains(x, y) && domain.contains(x + 1, y) && domain.contains(x + 1, y + 1) &&
            domain.contains(x, y + 1))
               ? 1
               : 0;
  return n;
}

/// Total length of the level curve {f = 0} by marching squares over the
/// values f(x, y) = value(x, y) - u(x, y), with linear interpolation along
/// cell edges. Only cells whose four corners are in the domain contribute, so
/// the domain boundary itself is never counted. Saddle cells are split using
/// the mean of the four corners as the cell-centre value. Returns physical length.
inline double level_curve_length(std::span<const float> values, const RealGrid& u, const DomainMask& domain, double dx) {
  const std::size_t nx = domain.nx(), ny = domain.ny();
  if (!u.same_shape(nx, ny) || values.size() != nx * ny) throw ValidationError("threshold/domain dimension mismatch");
  auto f = [&](std::size_t x, std::size_t y) { return static_cast<double>(values[y * nx + x]) - u(x, y); };

  std::vector<double> row_len(ny, 0.0);
  parallel_for(ny > 0 ? ny - 1 : 0, [&](std::size_t y) {
    double len = 0.0;
    for (std::size_t x = 0; x + 1 < nx; ++x) {
      if (!(domain.contains(x, y) && domain.contains(x + 1, y) && domain.contains(x + 1, y + 1) &&
            domain.contains(x, y + 1)))
        continue;
      // corners counter-clockwise from (x, y)
      const std::array<double, 4> v{f(x, y), f(x + 1, y), f(x + 1, y + 1), f(x, y + 1)};
      const std::array<std::array<double, 2>, 4> pos{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
      std::array<bool, 4> in{};
      int n_in = 0;
      for (int k = 0; k < 4; ++k) {
        in[k] = v[k] > 0.0;
        n_in += in[k] ? 1 : 0;
      }
      if (n_in == 0 || n_in == 4) continue;
      // crossing point on edge k (between corner k and k+1)
      auto cross = [&](int k) {
        const int a = k, b = (k + 1) % 4;
        const double t = v[a] / (v[a] - v[b]);
        return std::array<double, 2>{pos[a][0] + t * (pos[b][0] - pos[a][0]), pos[a][1] + t * (pos[b][1] - pos[a][1])};
      };
      auto seg = [&](int e1, int e2) {
        auto p = cross(e1), q = cross(e2);
        return std::hypot(p[0] - q[0], p[1] - q[1]);
      };
      const bool saddle = n_in == 2 && in[0] == in[2];
      if (saddle) {
        const bool centre_in = (v[0] + v[1] + v[2] + v[3]) / 4.0 > 0.0;
        // cut off the two corners whose state differs from the centre
        for (int k = 0; k < 4; ++k)
          if (in[k] != centre_in) len += seg((k + 3) % 4, k);
      } else {
        int e[2], m = 0;
        for (int k = 0; k < 4; ++k)
          if (in[k] != in[(k + 1) % 4]) e[m++] = k;
        len += seg(e[0], e[1]);
      }
    }
    row_len[y] = len;
  });
  double total = 0.0;
  for (double l : row_len) total += l;
  return total * dx;
}

/// Half the level-curve length per unit of measured area.
inline double perimeter_density(std::span<const float> values, const ThresholdField& thr, const DomainMask& domain,
                                double dx) {
  const std::size_t cells = interior_cells(domain);
  if (cells == 0) throw ValidationError("domain has no interior cell");
  return level_curve_length(values, thr.u, domain, dx) / (2.0 * static_cast<double>(cells) * dx * dx);
}

/// Euler characteristic V - E + F of the union of closed unit squares centred
/// on the set pixels. Closed squares touching at a corner are connected, so the
/// foreground is 8-connected and holes are 4-connected background components.
inline long euler_characteristic(const BinaryGrid& mask) {
  const std::size_t nx = mask.nx(), ny = mask.ny();
  auto set = [&](long x, long y) {
    return x >= 0 && y >= 0 && x < static_cast<long>(nx) && y < static_cast<long>(ny) &&
           mask(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
  };
  long faces = 0, edges = 0, vertices = 0;
  for (long y = 0; y <= static_cast<long>(ny); ++y) {
    for (long x = 0; x <= static_cast<long>(nx); ++x) {
      // vertex at pixel-corner (x, y) touches pixels (x-1..x, y-1..y)
      if (set(x - 1, y - 1) || set(x, y - 1) || set(x - 1, y) || set(x, y)) ++vertices;
      // horizontal edge from (x, y) to (x+1, y)
      if (set(x, y - 1) || set(x, y)) ++edges;
      // vertical edge from (x, y) to (x, y+1)
      if (set(x - 1, y) || set(x, y)) ++edges;
      if (set(x, y)) ++faces;
    }
  }
  return vertices - edges + faces;
}

inline double euler_density(const BinaryGrid& mask, const DomainMask& domain, double dx) {
  const std::size_t area = domain.area_pixels();
  if (area == 0) throw ValidationError("empty domain");
  return static_cast<double>(euler_characteristic(logical_and(mask, domain.inside))) /
         (static_cast<double>(area) * dx * dx);
}

/// Predicted small-r slope of P(R <= r): 2 c1 / c2.
inline double cdf_slope(double c1, double c2) {
  if (!(c2 > 0.0)) throw NumericError("cdf slope undefined for zero area density");
  return 2.0 * c1 / c2;
}

/// Closed form of 2C1/C2 for a unit-variance smooth Gaussian field at level u,
/// alpha being minus the second derivative of the correlation at 0.
inline double gaussian_slope(double alpha, double u) {
  const double tail = 0.5 * std::erfc(u / std::numbers::sqrt2);
  return std::sqrt(alpha) * std::exp(-u * u / 2.0) / (2.0 * tail);
}

/// Densities averaged over all slices of a stack at one threshold.
inline IntrinsicDensities estimate_densities(const RasterStack& stack, const ThresholdField& thr) {
  const auto domain = stack.domain();
  const double dx = stack.dx();
  const std::size_t area = domain.area_pixels();
  if (area == 0) throw ValidationError("empty domain");
  std::vector<double> c0(stack.nt()), c1(stack.nt()), c2(stack.nt());
  parallel_for(stack.nt(), [&](std::size_t t) {
    const auto m = excursion_mask(stack, t, thr, BoundaryPolicy::Erode);
    c0[t] = euler_density(m.exceed, domain, dx);
    c1[t] = perimeter_density(stack.slice(t), thr, domain, dx);
    c2[t] = static_cast<double>(count_true(logical_and(m.exceed, domain.inside))) / static_cast<double>(area);
  });
  IntrinsicDensities d;
  for (std::size_t t = 0; t < stack.nt(); ++t) {
    d.c0 += c0[t];
    d.c1 += c1[t];
    d.c2 += c2[t];
  }
  const double n = static_cast<double>(stack.nt());
  d.c0 /= n;
  d.c1 /= n;
  d.c2 /= n;
  d.domain_area = static_cast<double>(area) * dx * dx;
  d.n_slices = stack.nt();
  return d;
}

}  // namespace exrange
