#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "exrange/error.hpp"

namespace exrange {

/// Dense row-major 2-D array; element (x, y) lives at y * nx + x.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t nx, std::size_t ny, T fill = T{}) : nx_(nx), ny_(ny), data_(nx * ny, fill) {}
  Grid(std::size_t nx, std::size_t ny, std::vector<T> data) : nx_(nx), ny_(ny), data_(std::move(data)) {
    if (data_.size() != nx_ * ny_) throw ValidationError("grid data size does not match dimensions");
  }

  std::size_t nx() const noexcept { return nx_; }
  std::size_t ny() const noexcept { return ny_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(std::size_t x, std::size_t y) { return data_[y * nx_ + x]; }
  const T& operator()(std::size_t x, std::size_t y) const { return data_[y * nx_ + x]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  bool same_shape(std::size_t nx, std::size_t ny) const noexcept { return nx_ == nx && ny_ == ny; }
  template <typename U>
  bool same_shape(const Grid<U>& other) const noexcept {
    return nx_ == other.nx() && ny_ == other.ny();
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.nx_ == b.nx_ && a.ny_ == b.ny_ && a.data_ == b.data_;
  }

 private:
  std::size_t nx_ = 0;
  std::size_t ny_ = 0;
  std::vector<T> data_;
};

/// Binary grids store 0/1 bytes; vector<bool> is avoided for span access.
using BinaryGrid = Grid<std::uint8_t>;
using RealGrid = Grid<double>;

inline BinaryGrid complement(const BinaryGrid& g) {
  BinaryGrid out(g.nx(), g.ny());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] ? 0 : 1;
  return out;
}

inline BinaryGrid logical_and(const BinaryGrid& a, const BinaryGrid& b) {
  if (!a.same_shape(b)) throw ValidationError("binary grid dimension mismatch");
  BinaryGrid out(a.nx(), a.ny());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] && b[i]) ? 1 : 0;
  return out;
}

inline std::size_t count_true(const BinaryGrid& g) {
  std::size_t n = 0;
  for (auto v : g.values()) n += v ? 1 : 0;
  return n;
}

/// True when every set pixel of `a` is also set in `b`.
inline bool is_subset(const BinaryGrid& a, const BinaryGrid& b) {
  if (!a.same_shape(b)) throw ValidationError("binary grid dimension mismatch");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] && !b[i]) return false;
  return true;
}

}  // namespace exrange
