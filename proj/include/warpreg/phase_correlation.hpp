#pragma once

#include <cmath>
#include <vector>

#include "warpreg/errors.hpp"
#include "warpreg/fft.hpp"
#include "warpreg/image.hpp"

namespace warpreg {

/// Integer translation estimate from the phase correlation surface.
struct Shift {
  int di = 0;
  int dj = 0;
  double peak_response = 0.0;
};

namespace detail {

inline bool is_constant(const Image& img) {
  float lo = img.data[0], hi = img.data[0];
  for (float v : img.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return hi == lo;
}

inline std::vector<Complex> to_complex(const Image& img, bool hann) {
  const int h = img.height, w = img.width;
  std::vector<Complex> out(static_cast<size_t>(h) * w);
  std::vector<double> wy(static_cast<size_t>(h), 1.0), wx(static_cast<size_t>(w), 1.0);
  if (hann) {
    for (int i = 0; i < h; ++i)
      wy[static_cast<size_t>(i)] =
          h > 1 ? 0.5 * (1.0 - std::cos(2.0 * kPi * i / (h - 1))) : 1.0;
    for (int j = 0; j < w; ++j)
      wx[static_cast<size_t>(j)] =
          w > 1 ? 0.5 * (1.0 - std::cos(2.0 * kPi * j / (w - 1))) : 1.0;
  }
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      out[static_cast<size_t>(i) * w + j] =
          Complex(img.at(i, j) * wy[static_cast<size_t>(i)] * wx[static_cast<size_t>(j)], 0.0);
  return out;
}

}  // namespace detail

/// Estimates the integer translation taking `t` onto `s`: the peak of
/// F^{-1}{ F(s) conj(F(t)) / (|F(s) conj(F(t))| + eps) }, with indices past
/// the midpoint wrapped to negative shifts. Constant inputs have no phase
/// content and are rejected.
inline Shift phase_correlate(const Image& s, const Image& t, double epsilon = 1e-12,
                             bool hann_window = false) {
  require_same_shape(s, t, "phase_correlate");
  if (detail::is_constant(s) || detail::is_constant(t)) {
    throw DegenerateInputError("phase_correlate: constant image has no phase structure");
  }
  const int h = s.height, w = s.width;

  std::vector<Complex> fs = fft2(detail::to_complex(s, hann_window), h, w);
  std::vector<Complex> ft = fft2(detail::to_complex(t, hann_window), h, w);

  std::vector<Complex> cross(fs.size());
  for (size_t k = 0; k < fs.size(); ++k) {
    const Complex c = fs[k] * std::conj(ft[k]);
    cross[k] = c / (std::abs(c) + epsilon);
  }
  std::vector<Complex> surface = ifft2(std::move(cross), h, w);

  size_t best = 0;
  double best_val = surface[0].real();
  for (size_t k = 1; k < surface.size(); ++k) {
    const double v = surface[k].real();
    if (v > best_val) {
      best_val = v;
      best = k;
    }
  }

  Shift out;
  out.di = static_cast<int>(best) / w;
  out.dj = static_cast<int>(best) % w;
  if (out.di > h / 2) out.di -= h;
  if (out.dj > w / 2) out.dj -= w;
  out.peak_response = best_val;
  return out;
}

/// Applies an integer translation with circular wrap: out(p) = img(p - shift).
inline Image apply_circular_shift(const Image& img, int di, int dj) {
  Image out(img.height, img.width);
  const int h = img.height, w = img.width;
  for (int i = 0; i < h; ++i) {
    const int si = ((i - di) % h + h) % h;
    for (int j = 0; j < w; ++j) {
      const int sj = ((j - dj) % w + w) % w;
      out.at(i, j) = img.at(si, sj);
    }
  }
  return out;
}

}  // namespace warpreg
