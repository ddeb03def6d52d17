#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "warpreg/errors.hpp"

namespace warpreg {

using Complex = std::complex<double>;

namespace detail {

constexpr double kPi = 3.14159265358979323846264338327950288;

inline bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// Iterative radix-2 Cooley-Tukey, in place. n must be a power of two.
inline void fft_pow2(std::vector<Complex>& a, bool inverse) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
    const Complex wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      Complex w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const Complex u = a[i + k];
        const Complex v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

/// Bluestein chirp-z transform: DFT of arbitrary length via a power-of-two
/// convolution. Handles the non-power-of-two image sizes registration meets.
inline void fft_bluestein(std::vector<Complex>& a, bool inverse) {
  const size_t n = a.size();
  const long long two_n = 2LL * static_cast<long long>(n);
  const double sign = inverse ? 1.0 : -1.0;

  std::vector<Complex> chirp(n);
  for (size_t k = 0; k < n; ++k) {
    const long long sq = (static_cast<long long>(k) * static_cast<long long>(k)) % two_n;
    const double ang = sign * kPi * static_cast<double>(sq) / static_cast<double>(n);
    chirp[k] = Complex(std::cos(ang), std::sin(ang));
  }

  size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;

  std::vector<Complex> fa(m, Complex(0, 0)), fb(m, Complex(0, 0));
  for (size_t k = 0; k < n; ++k) fa[k] = a[k] * chirp[k];
  fb[0] = std::conj(chirp[0]);
  for (size_t k = 1; k < n; ++k) fb[k] = fb[m - k] = std::conj(chirp[k]);

  fft_pow2(fa, false);
  fft_pow2(fb, false);
  for (size_t k = 0; k < m; ++k) fa[k] *= fb[k];
  fft_pow2(fa, true);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (size_t k = 0; k < n; ++k) a[k] = fa[k] * inv_m * chirp[k];
}

/// Unnormalized forward DFT (inverse=false) or unnormalized inverse kernel
/// with e^{+2pi i} sign (inverse=true); caller applies any 1/n scaling.
inline void dft_1d(std::vector<Complex>& a, bool inverse) {
  if (a.size() <= 1) return;
  if (is_pow2(a.size())) {
    fft_pow2(a, inverse);
  } else {
    fft_bluestein(a, inverse);
  }
}

inline void fft2_inplace(std::vector<Complex>& grid, int h, int w, bool inverse) {
  if (h <= 0 || w <= 0 || grid.size() != static_cast<size_t>(h) * static_cast<size_t>(w)) {
    throw DimensionError("fft2: grid size does not match dimensions");
  }
  std::vector<Complex> line;
  line.reserve(static_cast<size_t>(std::max(h, w)));
  for (int i = 0; i < h; ++i) {
    line.assign(grid.begin() + static_cast<size_t>(i) * w,
                grid.begin() + static_cast<size_t>(i + 1) * w);
    dft_1d(line, inverse);
    std::copy(line.begin(), line.end(), grid.begin() + static_cast<size_t>(i) * w);
  }
  for (int j = 0; j < w; ++j) {
    line.resize(static_cast<size_t>(h));
    for (int i = 0; i < h; ++i) line[static_cast<size_t>(i)] = grid[static_cast<size_t>(i) * w + j];
    dft_1d(line, inverse);
    for (int i = 0; i < h; ++i) grid[static_cast<size_t>(i) * w + j] = line[static_cast<size_t>(i)];
  }
}

}  // namespace detail

/// 2D forward DFT (unnormalized, e^{-2pi i} kernel). Radix-agnostic.
inline std::vector<Complex> fft2(std::vector<Complex> grid, int h, int w) {
  if (grid.empty()) throw DimensionError("fft2: empty grid");
  detail::fft2_inplace(grid, h, w, false);
  return grid;
}

/// 2D inverse DFT including the 1/(h*w) normalization: ifft2(fft2(x)) == x.
inline std::vector<Complex> ifft2(std::vector<Complex> grid, int h, int w) {
  if (grid.empty()) throw DimensionError("ifft2: empty grid");
  detail::fft2_inplace(grid, h, w, true);
  const double scale = 1.0 / (static_cast<double>(h) * static_cast<double>(w));
  for (auto& v : grid) v *= scale;
  return grid;
}

}  // namespace warpreg
