#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "warpreg/errors.hpp"
#include "warpreg/image.hpp"

namespace warpreg {

/// Windowed-SSIM parameters. Defaults are the common convention for images
/// with unit dynamic range: 11x11 Gaussian window, sigma 1.5, k1 0.01, k2 0.03.
struct SsimParams {
  int window_size = 11;
  double gaussian_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }

  void validate(int h, int w) const {
    if (window_size < 3 || window_size % 2 == 0) {
      throw ConfigError("ssim: window_size must be odd and >= 3, got " +
                        std::to_string(window_size));
    }
    if (window_size > std::min(h, w)) {
      throw ConfigError("ssim: window " + std::to_string(window_size) + " exceeds image " +
                        std::to_string(h) + "x" + std::to_string(w));
    }
    if (c1() <= 0.0 || c2() <= 0.0) throw ConfigError("ssim: c1 and c2 must be positive");
  }
};

/// Weights of the combined loss alpha*MSE - beta*(SSIM - 1).
struct LossWeights {
  double alpha = 10.0;
  double beta = 1.0;

  void validate() const {
    if (alpha < 0.0 || beta < 0.0 || (alpha == 0.0 && beta == 0.0)) {
      throw ConfigError("loss weights must be nonnegative and not both zero");
    }
  }
};

/// Mean squared error over all pixels, accumulated in double precision.
inline double mse(const Image& w, const Image& t) {
  require_same_shape(w, t, "mse");
  double acc = 0.0;
  for (size_t k = 0; k < w.size(); ++k) {
    const double d = static_cast<double>(w.data[k]) - static_cast<double>(t.data[k]);
    acc += d * d;
  }
  return acc / static_cast<double>(w.size());
}

namespace detail {

inline std::vector<double> gaussian_window_1d(int n, double sigma) {
  std::vector<double> k(static_cast<size_t>(n));
  const int r = n / 2;
  double sum = 0.0;
  for (int t = 0; t < n; ++t) {
    const double d = t - r;
    k[t] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    sum += k[t];
  }
  for (auto& v : k) v /= sum;
  return k;
}

/// Local weighted window statistics of an image pair, valid-mode: one entry
/// per window fully inside the image. All sums in double.
struct WindowStats {
  int vh = 0, vw = 0;  // valid map size: (H - 2r) x (W - 2r)
  int radius = 0;
  std::vector<double> mu_x, mu_y, sx2, sy2, sxy;  // sigma entries are central moments

  size_t count() const { return static_cast<size_t>(vh) * vw; }
};

/// Computes the five Gaussian-windowed statistics with separable passes.
/// `x`/`y` may be any float-like contiguous buffers of shape h*w.
template <class Fx, class Fy>
WindowStats window_stats(Fx&& x, Fy&& y, int h, int w, const SsimParams& p) {
  const int n = p.window_size;
  const int r = n / 2;
  const std::vector<double> k = gaussian_window_1d(n, p.gaussian_sigma);

  WindowStats st;
  st.vh = h - 2 * r;
  st.vw = w - 2 * r;
  st.radius = r;
  const size_t vn = st.count();

  // Horizontal pass: weighted sums of (x, y, x^2, y^2, xy) at valid columns.
  const size_t hw = static_cast<size_t>(h) * st.vw;
  std::vector<double> hx(hw), hy(hw), hx2(hw), hy2(hw), hxy(hw);
  for (int i = 0; i < h; ++i) {
    for (int jc = 0; jc < st.vw; ++jc) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxyv = 0;
      for (int t = 0; t < n; ++t) {
        const double xv = x(i, jc + t);
        const double yv = y(i, jc + t);
        const double wt = k[static_cast<size_t>(t)];
        sx += wt * xv;
        sy += wt * yv;
        sxx += wt * xv * xv;
        syy += wt * yv * yv;
        sxyv += wt * xv * yv;
      }
      const size_t o = static_cast<size_t>(i) * st.vw + jc;
      hx[o] = sx;
      hy[o] = sy;
      hx2[o] = sxx;
      hy2[o] = syy;
      hxy[o] = sxyv;
    }
  }

  // Vertical pass and conversion to central moments.
  st.mu_x.resize(vn);
  st.mu_y.resize(vn);
  st.sx2.resize(vn);
  st.sy2.resize(vn);
  st.sxy.resize(vn);
  for (int ic = 0; ic < st.vh; ++ic) {
    for (int jc = 0; jc < st.vw; ++jc) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxyv = 0;
      for (int t = 0; t < n; ++t) {
        const size_t o = static_cast<size_t>(ic + t) * st.vw + jc;
        const double wt = k[static_cast<size_t>(t)];
        sx += wt * hx[o];
        sy += wt * hy[o];
        sxx += wt * hx2[o];
        syy += wt * hy2[o];
        sxyv += wt * hxy[o];
      }
      const size_t o = static_cast<size_t>(ic) * st.vw + jc;
      st.mu_x[o] = sx;
      st.mu_y[o] = sy;
      st.sx2[o] = sxx - sx * sx;
      st.sy2[o] = syy - sy * sy;
      st.sxy[o] = sxyv - sx * sy;
    }
  }
  return st;
}

inline double ssim_from_stats(const WindowStats& st, const SsimParams& p, size_t o) {
  const double c1 = p.c1(), c2 = p.c2();
  const double a1 = 2.0 * st.mu_x[o] * st.mu_y[o] + c1;
  const double a2 = 2.0 * st.sxy[o] + c2;
  const double b1 = st.mu_x[o] * st.mu_x[o] + st.mu_y[o] * st.mu_y[o] + c1;
  const double b2 = st.sx2[o] + st.sy2[o] + c2;
  return (a1 * a2) / (b1 * b2);
}

}  // namespace detail

/// Mean Gaussian-windowed SSIM over all fully-inside windows. Symmetric in
/// its arguments; 1.0 for identical images.
inline double ssim(const Image& w, const Image& t, const SsimParams& p = {}) {
  require_same_shape(w, t, "ssim");
  p.validate(w.height, w.width);
  const auto st = detail::window_stats(
      [&](int i, int j) { return static_cast<double>(w.at(i, j)); },
      [&](int i, int j) { return static_cast<double>(t.at(i, j)); }, w.height, w.width, p);
  double acc = 0.0;
  for (size_t o = 0; o < st.count(); ++o) acc += detail::ssim_from_stats(st, p, o);
  return acc / static_cast<double>(st.count());
}

/// Per-window SSIM laid out at window centers; border pixels replicate the
/// nearest valid value. Mean over the valid region equals ssim(w, t).
inline Image ssim_map(const Image& w, const Image& t, const SsimParams& p = {}) {
  require_same_shape(w, t, "ssim_map");
  p.validate(w.height, w.width);
  const auto st = detail::window_stats(
      [&](int i, int j) { return static_cast<double>(w.at(i, j)); },
      [&](int i, int j) { return static_cast<double>(t.at(i, j)); }, w.height, w.width, p);
  Image out(w.height, w.width);
  const int r = st.radius;
  for (int i = 0; i < w.height; ++i) {
    const int ic = std::clamp(i - r, 0, st.vh - 1);
    for (int j = 0; j < w.width; ++j) {
      const int jc = std::clamp(j - r, 0, st.vw - 1);
      out.at(i, j) =
          static_cast<float>(detail::ssim_from_stats(st, p, static_cast<size_t>(ic) * st.vw + jc));
    }
  }
  return out;
}

/// Combined registration loss: alpha*MSE - beta*(SSIM - 1). Zero for
/// identical images; nonnegative whenever SSIM <= 1.
inline double msessim_loss(const Image& w, const Image& t, const LossWeights& lw = {},
                           const SsimParams& p = {}) {
  lw.validate();
  return lw.alpha * mse(w, t) - lw.beta * (ssim(w, t, p) - 1.0);
}

}  // namespace warpreg
