#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "warpreg/errors.hpp"
#include "warpreg/image.hpp"
#include "warpreg/io_util.hpp"

namespace warpreg {

/// Dense per-pixel displacement field, backward convention everywhere:
/// a warped image pulls intensities from src at (i - phi_i, j - phi_j).
struct WarpField {
  int height = 0;
  int width = 0;
  std::vector<float> phi_i;  // row displacement, pixels
  std::vector<float> phi_j;  // column displacement, pixels

  WarpField() = default;
  WarpField(int h, int w)
      : height(h),
        width(w),
        phi_i(static_cast<size_t>(h) * static_cast<size_t>(w), 0.0f),
        phi_j(static_cast<size_t>(h) * static_cast<size_t>(w), 0.0f) {}

  size_t size() const { return phi_i.size(); }
  bool same_shape(const WarpField& o) const { return height == o.height && width == o.width; }
  bool same_shape(const Image& o) const { return height == o.height && width == o.width; }

  float max_abs_displacement() const {
    float m = 0.0f;
    for (float v : phi_i) m = std::max(m, std::abs(v));
    for (float v : phi_j) m = std::max(m, std::abs(v));
    return m;
  }
};

inline void require_same_shape(const WarpField& a, const WarpField& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": field shape mismatch (" + std::to_string(a.height) +
                         "x" + std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                         std::to_string(b.width) + ")");
  }
}

/// Backward warp: out(i,j) = src(i - phi_i(i,j), j - phi_j(i,j)), bilinear,
/// edge-clamped. A zero field reproduces src exactly.
inline Image apply(const WarpField& field, const Image& src) {
  if (!field.same_shape(src)) {
    throw DimensionError("apply: field " + std::to_string(field.height) + "x" +
                         std::to_string(field.width) + " vs image " + std::to_string(src.height) +
                         "x" + std::to_string(src.width));
  }
  Image out(src.height, src.width);
  const int h = src.height, w = src.width;
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const size_t k = static_cast<size_t>(i) * w + j;
      out.data[k] = detail::bilinear_grid(src.data.data(), h, w,
                                          static_cast<double>(i) - field.phi_i[k],
                                          static_cast<double>(j) - field.phi_j[k]);
    }
  }
  return out;
}

namespace detail {

inline void sample_field(const WarpField& f, double y, double x, double& di, double& dj) {
  di = bilinear_grid(f.phi_i.data(), f.height, f.width, y, x);
  dj = bilinear_grid(f.phi_j.data(), f.height, f.width, y, x);
}

}  // namespace detail

/// Composition: the field equivalent to warping with g first, then f, i.e.
/// apply(compose(f, g), x) ~= apply(f, apply(g, x)).
/// Pointwise h(p) = f(p) + g(p - f(p)) with bilinear field sampling.
inline WarpField compose(const WarpField& f, const WarpField& g) {
  require_same_shape(f, g, "compose");
  WarpField h(f.height, f.width);
  for (int i = 0; i < f.height; ++i) {
    for (int j = 0; j < f.width; ++j) {
      const size_t k = static_cast<size_t>(i) * f.width + j;
      const double fi = f.phi_i[k];
      const double fj = f.phi_j[k];
      double gi, gj;
      detail::sample_field(g, static_cast<double>(i) - fi, static_cast<double>(j) - fj, gi, gj);
      h.phi_i[k] = static_cast<float>(fi + gi);
      h.phi_j[k] = static_cast<float>(fj + gj);
    }
  }
  return h;
}

/// Approximate inverse by fixed-point iteration v <- -field(p - v(p)).
/// Converges for smooth fields (max displacement gradient < 1).
inline WarpField invert(const WarpField& field, int iterations = 20) {
  if (iterations < 1) throw ConfigError("invert: iterations must be >= 1");
  WarpField v(field.height, field.width);
  WarpField next(field.height, field.width);
  for (int it = 0; it < iterations; ++it) {
    for (int i = 0; i < field.height; ++i) {
      for (int j = 0; j < field.width; ++j) {
        const size_t k = static_cast<size_t>(i) * field.width + j;
        double fi, fj;
        detail::sample_field(field, static_cast<double>(i) - v.phi_i[k],
                             static_cast<double>(j) - v.phi_j[k], fi, fj);
        next.phi_i[k] = static_cast<float>(-fi);
        next.phi_j[k] = static_cast<float>(-fj);
      }
    }
    std::swap(v, next);
  }
  return v;
}

// Warp file format (little-endian): magic "WRP1"; u32 height; u32 width;
// height*width f32 phi_i row-major; height*width f32 phi_j row-major.

inline void save_field(const WarpField& field, const std::filesystem::path& path) {
  ByteWriter w;
  w.text("WRP1");
  w.u32(static_cast<std::uint32_t>(field.height));
  w.u32(static_cast<std::uint32_t>(field.width));
  for (float v : field.phi_i) w.f32(v);
  for (float v : field.phi_j) w.f32(v);
  atomic_write_file(path, w.bytes());
}

inline WarpField load_field(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  ByteReader r(buf, path.string());
  const std::string magic = r.str(4);
  if (magic != "WRP1") throw FormatError(path.string() + ": bad magic '" + magic + "' (want WRP1)");
  const std::uint32_t h = r.u32();
  const std::uint32_t w = r.u32();
  if (h == 0 || w == 0 || static_cast<std::uint64_t>(h) * w > (1u << 28)) {
    throw FormatError(path.string() + ": implausible dimensions " + std::to_string(h) + "x" +
                      std::to_string(w));
  }
  const size_t n = static_cast<size_t>(h) * w;
  if (r.remaining() != n * 2 * 4) {
    throw FormatError(path.string() + ": payload length " + std::to_string(r.remaining()) +
                      " bytes, expected " + std::to_string(n * 8));
  }
  WarpField field(static_cast<int>(h), static_cast<int>(w));
  for (size_t k = 0; k < n; ++k) field.phi_i[k] = r.f32();
  for (size_t k = 0; k < n; ++k) field.phi_j[k] = r.f32();
  return field;
}

}  // namespace warpreg
