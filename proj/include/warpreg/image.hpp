#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "warpreg/errors.hpp"
#include "warpreg/io_util.hpp"

namespace warpreg {

/// Grayscale 2D image, row-major, intensities nominally in [0,1].
/// Index convention throughout the library: i = row, j = column.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), data(checked_size(h, w), fill) {}

  float& at(int i, int j) { return data[static_cast<size_t>(i) * width + j]; }
  float at(int i, int j) const { return data[static_cast<size_t>(i) * width + j]; }
  size_t size() const { return data.size(); }
  bool same_shape(const Image& o) const { return height == o.height && width == o.width; }

 private:
  static size_t checked_size(int h, int w) {
    if (h <= 0 || w <= 0) {
      throw DimensionError("image: dimensions must be positive, got " + std::to_string(h) + "x" +
                           std::to_string(w));
    }
    return static_cast<size_t>(h) * static_cast<size_t>(w);
  }
};

inline void require_same_shape(const Image& a, const Image& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch (" + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                         std::to_string(b.width) + ")");
  }
}

/// Min-max rescale to [0,1]; a constant image maps to all zeros.
inline Image normalize(const Image& img) {
  if (img.data.empty()) throw DimensionError("normalize: empty image");
  const auto [mn_it, mx_it] = std::minmax_element(img.data.begin(), img.data.end());
  const float mn = *mn_it, mx = *mx_it;
  Image out(img.height, img.width);
  if (mx == mn) return out;
  const float range = mx - mn;
  for (size_t k = 0; k < img.data.size(); ++k) out.data[k] = (img.data[k] - mn) / range;
  return out;
}

namespace detail {

/// Bilinear sample of a row-major grid with edge clamping. Exact at integer
/// coordinates (zero-weight corners contribute exactly zero).
template <class Real>
inline Real bilinear_grid(const Real* grid, int h, int w, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  int y0 = static_cast<int>(y);
  int x0 = static_cast<int>(x);
  if (y0 > h - 2) y0 = h - 2 < 0 ? 0 : h - 2;
  if (x0 > w - 2) x0 = w - 2 < 0 ? 0 : w - 2;
  const int y1 = std::min(y0 + 1, h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const double wy = y - y0;
  const double wx = x - x0;
  const double v00 = grid[static_cast<size_t>(y0) * w + x0];
  const double v01 = grid[static_cast<size_t>(y0) * w + x1];
  const double v10 = grid[static_cast<size_t>(y1) * w + x0];
  const double v11 = grid[static_cast<size_t>(y1) * w + x1];
  return static_cast<Real>((1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) +
                           wy * ((1.0 - wx) * v10 + wx * v11));
}

}  // namespace detail

/// Bilinear interpolation at real coordinates (y=row, x=col), edge-clamped.
inline float sample_bilinear(const Image& img, double y, double x) {
  if (img.data.empty()) throw DimensionError("sample_bilinear: empty image");
  return detail::bilinear_grid(img.data.data(), img.height, img.width, y, x);
}

// ---------------------------------------------------------------------------
// Netpbm I/O. PGM (P5) is the interchange format; PPM (P6) holds overlays.
// ---------------------------------------------------------------------------

namespace detail {

struct PnmHeaderParser {
  const std::string& buf;
  size_t pos = 0;

  void skip_space_and_comments() {
    while (pos < buf.size()) {
      const char c = buf[pos];
      if (c == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos;
      } else {
        break;
      }
    }
  }

  int next_int(const char* field) {
    skip_space_and_comments();
    if (pos >= buf.size() || !std::isdigit(static_cast<unsigned char>(buf[pos]))) {
      throw FormatError(std::string("PGM parse error: expected ") + field + " at byte " +
                        std::to_string(pos));
    }
    long v = 0;
    while (pos < buf.size() && std::isdigit(static_cast<unsigned char>(buf[pos]))) {
      v = v * 10 + (buf[pos] - '0');
      if (v > 1000000000L) throw FormatError(std::string("PGM parse error: ") + field +
                                             " out of range at byte " + std::to_string(pos));
      ++pos;
    }
    return static_cast<int>(v);
  }
};

}  // namespace detail

/// Reads a binary PGM (P5), 8- or 16-bit, scaling intensities into [0,1].
inline Image load_pgm(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  if (buf.size() < 2 || buf[0] != 'P') {
    throw FormatError("not a PNM file (missing 'P' magic at byte 0): " + path.string());
  }
  if (buf[1] != '5') {
    throw FormatError(std::string("unsupported PNM magic 'P") + buf[1] +
                      "' (only binary P5 is supported): " + path.string());
  }
  detail::PnmHeaderParser p{buf, 2};
  const int w = p.next_int("width");
  const int h = p.next_int("height");
  const int maxval = p.next_int("maxval");
  if (w <= 0 || h <= 0) {
    throw FormatError("PGM parse error: non-positive dimensions at byte " + std::to_string(p.pos));
  }
  if (maxval <= 0 || maxval > 65535) {
    throw FormatError("PGM parse error: maxval out of range at byte " + std::to_string(p.pos));
  }
  // Exactly one whitespace byte separates the header from the payload.
  if (p.pos >= buf.size() || !(buf[p.pos] == ' ' || buf[p.pos] == '\n' || buf[p.pos] == '\t' ||
                               buf[p.pos] == '\r')) {
    throw FormatError("PGM parse error: expected whitespace before payload at byte " +
                      std::to_string(p.pos));
  }
  ++p.pos;

  const size_t n = static_cast<size_t>(w) * static_cast<size_t>(h);
  const int bytes_per = maxval > 255 ? 2 : 1;
  if (buf.size() - p.pos < n * bytes_per) {
    throw FormatError("PGM payload truncated at byte " + std::to_string(buf.size()) +
                      " (expected " + std::to_string(p.pos + n * bytes_per) + " bytes)");
  }
  Image img(h, w);
  const float scale = 1.0f / static_cast<float>(maxval);
  const unsigned char* d = reinterpret_cast<const unsigned char*>(buf.data()) + p.pos;
  if (bytes_per == 1) {
    for (size_t k = 0; k < n; ++k) img.data[k] = static_cast<float>(d[k]) * scale;
  } else {
    for (size_t k = 0; k < n; ++k) {
      // 16-bit PGM samples are big-endian per Netpbm.
      img.data[k] = static_cast<float>((d[2 * k] << 8) | d[2 * k + 1]) * scale;
    }
  }
  return img;
}

/// Writes a binary PGM (P5), maxval 255. Values are clamped to [0,1] and
/// rounded half-up, so a save/load round trip moves a pixel by at most 1/510.
inline void save_pgm(const Image& img, const std::filesystem::path& path) {
  if (img.data.empty()) throw DimensionError("save_pgm: empty image");
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.size());
  for (float v : img.data) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::floor(c * 255.0f + 0.5f))));
  }
  atomic_write_file(path, out);
}

/// False-colour comparison: w in green, t in magenta, grey where they agree.
inline void write_overlay(const Image& w, const Image& t, const std::filesystem::path& path) {
  require_same_shape(w, t, "write_overlay");
  std::string out =
      "P6\n" + std::to_string(w.width) + " " + std::to_string(w.height) + "\n255\n";
  out.reserve(out.size() + w.size() * 3);
  auto to_byte = [](float v) {
    return static_cast<char>(
        static_cast<unsigned char>(std::floor(std::clamp(v, 0.0f, 1.0f) * 255.0f + 0.5f)));
  };
  for (size_t k = 0; k < w.size(); ++k) {
    const char green = to_byte(w.data[k]);
    const char magenta = to_byte(t.data[k]);
    out.push_back(magenta);  // R
    out.push_back(green);    // G
    out.push_back(magenta);  // B
  }
  atomic_write_file(path, out);
}

}  // namespace warpreg
