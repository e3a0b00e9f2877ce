#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "exrange/error.hpp"
#include "exrange/grid.hpp"
#include "exrange/io.hpp"

namespace exrange {

inline constexpr double kDefaultNodata = -9999.0;

/// Set of pixel centres belonging to the observation domain T.
struct DomainMask {
  BinaryGrid inside;

  std::size_t nx() const { return inside.nx(); }
  std::size_t ny() const { return inside.ny(); }
  std::size_t area_pixels() const { return count_true(inside); }
  bool contains(std::size_t x, std::size_t y) const { return inside(x, y) != 0; }

  static DomainMask full(std::size_t nx, std::size_t ny) { return {BinaryGrid(nx, ny, 1)}; }
};

/// nt slices of an ny x nx field, stored slice-major then row-major as float32.
class RasterStack {
 public:
  RasterStack() = default;
  RasterStack(std::size_t nx, std::size_t ny, std::size_t nt, double dx, std::vector<float> values,
              double nodata = kDefaultNodata, std::string unit = "")
      : nx_(nx), ny_(ny), nt_(nt), dx_(dx), nodata_(nodata), unit_(std::move(unit)), values_(std::move(values)) {
    if (nx_ == 0 || ny_ == 0 || nt_ == 0) throw ValidationError("stack dimensions must be >= 1");
    if (!(dx_ > 0.0) || !std::isfinite(dx_)) throw ValidationError("grid spacing dx must be positive");
    if (values_.size() != nx_ * ny_ * nt_) throw ValidationError("stack value count does not match nx*ny*nt");
    validate();
  }

  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  std::size_t nt() const { return nt_; }
  std::size_t pixels() const { return nx_ * ny_; }
  double dx() const { return dx_; }
  double nodata() const { return nodata_; }
  const std::string& unit() const { return unit_; }
  std::span<const float> values() const { return values_; }

  std::span<const float> slice(std::size_t t) const {
    if (t >= nt_) throw ValidationError("slice index out of range");
    return std::span<const float>(values_).subspan(t * pixels(), pixels());
  }
  float at(std::size_t t, std::size_t x, std::size_t y) const { return values_[t * pixels() + y * nx_ + x]; }
  bool is_nodata(float v) const { return static_cast<double>(v) == nodata_; }

  /// Non-nodata pixels; identical for every slice by construction.
  DomainMask domain() const {
    BinaryGrid inside(nx_, ny_);
    auto s0 = slice(0);
    for (std::size_t i = 0; i < pixels(); ++i) inside[i] = is_nodata(s0[i]) ? 0 : 1;
    return {std::move(inside)};
  }

  /// Stack restricted to the given slices, in the given order.
  RasterStack select(std::span<const std::size_t> slices) const {
    std::vector<float> v;
    v.reserve(slices.size() * pixels());
    for (auto t : slices) {
      auto s = slice(t);
      v.insert(v.end(), s.begin(), s.end());
    }
    return RasterStack(nx_, ny_, slices.size(), dx_, std::move(v), nodata_, unit_);
  }

 private:
  void validate() const {
    for (float v : values_)
      if (std::isnan(v)) throw FormatError("NaN values are not allowed; use the nodata sentinel");
    auto s0 = std::span<const float>(values_).subspan(0, pixels());
    for (std::size_t t = 1; t < nt_; ++t) {
      auto s = std::span<const float>(values_).subspan(t * pixels(), pixels());
      for (std::size_t i = 0; i < pixels(); ++i) {
        if (is_nodata(s0[i]) != is_nodata(s[i])) {
          throw FormatError("inconsistent nodata: pixel (" + std::to_string(i % nx_) + "," +
                            std::to_string(i / nx_) + ") differs between slice 0 and slice " + std::to_string(t));
        }
      }
    }
  }

  std::size_t nx_ = 0, ny_ = 0, nt_ = 0;
  double dx_ = 1.0;
  double nodata_ = kDefaultNodata;
  std::string unit_;
  std::vector<float> values_;
};

/// Metadata carried alongside a single derived map.
struct MapMeta {
  double dx = 1.0;
  double nodata = kDefaultNodata;
  std::string unit;
};

/// Sidecar path for a data file: same stem, ".json" extension.
inline std::filesystem::path sidecar_path(const std::filesystem::path& data) {
  auto p = data;
  p.replace_extension(".json");
  if (p == data) p += ".json";
  return p;
}

namespace detail {

inline std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
  return v;
}

inline std::string encode_f32(std::span<const float> values) {
  std::string bytes(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t w = to_little(std::bit_cast<std::uint32_t>(values[i]));
    std::memcpy(bytes.data() + 4 * i, &w, 4);
  }
  return bytes;
}

inline std::vector<float> decode_f32(std::string_view bytes) {
  std::vector<float> v(bytes.size() / 4);
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint32_t w;
    std::memcpy(&w, bytes.data() + 4 * i, 4);
    v[i] = std::bit_cast<float>(to_little(w));
  }
  return v;
}

inline std::string sidecar_json(std::size_t nx, std::size_t ny, std::size_t nt, double dx, double nodata,
                                const std::string& unit) {
  nlohmann::ordered_json j;
  j["nx"] = nx;
  j["ny"] = ny;
  j["nt"] = nt;
  j["dx"] = dx;
  j["nodata"] = nodata;
  j["unit"] = unit;
  return j.dump() + "\n";
}

}  // namespace detail

inline void save_stack(const std::filesystem::path& path, const RasterStack& stack) {
  write_file_atomic(path, detail::encode_f32(stack.values()));
  write_file_atomic(sidecar_path(path),
                    detail::sidecar_json(stack.nx(), stack.ny(), stack.nt(), stack.dx(), stack.nodata(), stack.unit()));
}

inline RasterStack load_stack(const std::filesystem::path& path) {
  const auto side = sidecar_path(path);
  if (!std::filesystem::exists(path)) throw IoError("missing data file: " + path.string());
  if (!std::filesystem::exists(side)) throw FormatError("missing sidecar: " + side.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(side));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed sidecar " + side.string() + ": " + e.what());
  }
  std::size_t nx, ny, nt;
  double dx, nodata;
  std::string unit;
  try {
    nx = j.at("nx").get<std::size_t>();
    ny = j.at("ny").get<std::size_t>();
    nt = j.at("nt").get<std::size_t>();
    dx = j.at("dx").get<double>();
    nodata = j.value("nodata", kDefaultNodata);
    unit = j.value("unit", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("sidecar " + side.string() + " lacks a required field: " + e.what());
  }
  const std::string bytes = read_file(path);
  const std::size_t expected = nx * ny * nt * 4;
  if (bytes.size() != expected) {
    throw FormatError("byte count mismatch: sidecar implies " + std::to_string(expected) + " bytes, file has " +
                      std::to_string(bytes.size()));
  }
  try {
    return RasterStack(nx, ny, nt, dx, detail::decode_f32(bytes), nodata, std::move(unit));
  } catch (const ValidationError& e) {
    throw FormatError(e.what());
  }
}

/// Writes a single ny x nx map as an nt = 1 stack; values are narrowed to float32.
inline void save_map(const std::filesystem::path& path, const RealGrid& grid, const MapMeta& meta) {
  std::vector<float> v(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (std::isnan(grid[i])) throw ValidationError("map contains NaN; use the nodata sentinel");
    v[i] = static_cast<float>(grid[i]);
  }
  write_file_atomic(path, detail::encode_f32(v));
  write_file_atomic(sidecar_path(path), detail::sidecar_json(grid.nx(), grid.ny(), 1, meta.dx, meta.nodata, meta.unit));
}

/// Replaces NaN and out-of-domain pixels with the nodata sentinel.
inline RealGrid with_nodata(const RealGrid& grid, const DomainMask& domain, double nodata) {
  RealGrid out = grid;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!domain.inside[i] || !std::isfinite(out[i])) out[i] = nodata;
  return out;
}

/// CSV export: one row per domain pixel, header x_index,y_index,value.
inline std::string map_csv(const RealGrid& grid, const DomainMask& domain) {
  if (!grid.same_shape(domain.inside)) throw ValidationError("map/domain dimension mismatch");
  CsvWriter csv("x_index", "y_index", "value");
  for (std::size_t y = 0; y < grid.ny(); ++y)
    for (std::size_t x = 0; x < grid.nx(); ++x)
      if (domain.contains(x, y)) csv.row(x, y, grid(x, y));
  return csv.str();
}

}  // namespace exrange
