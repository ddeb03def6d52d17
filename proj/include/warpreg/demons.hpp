#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "warpreg/errors.hpp"
#include "warpreg/image.hpp"
#include "warpreg/metrics.hpp"
#include "warpreg/warp_field.hpp"

namespace warpreg {

struct DemonsConfig {
  int levels = 3;
  int iterations = 30;
  double smoothing_sigma = 1.0;  ///< field regularization after each composition
  double update_sigma = 1.0;     ///< smoothing of the raw update before exponentiation
  double max_step = 2.0;         ///< per-iteration displacement magnitude clamp, pixels
  bool record_trace = true;      ///< collect per-iteration metrics (costs one extra warp per iteration)

  void validate(int h, int w) const {
    if (levels < 1) throw ConfigError("demons: levels must be >= 1");
    if (iterations < 1) throw ConfigError("demons: iterations must be >= 1");
    if (max_step <= 0.0) throw ConfigError("demons: max_step must be positive");
    if (smoothing_sigma < 0.0 || update_sigma < 0.0) {
      throw ConfigError("demons: sigmas must be non-negative");
    }
    const int coarse = std::min(h, w) >> (levels - 1);
    if (coarse < 8) {
      throw ConfigError("demons: coarsest level smaller than 8 pixels, reduce levels");
    }
  }
};

struct DemonsIterationStats {
  int level = 0;
  int iteration = 0;
  double mse_value = 0.0;
  double ssim_value = 0.0;
};

struct DemonsResult {
  WarpField field;
  Image warped;
  std::vector<DemonsIterationStats> trace;
};

namespace detail {

/// Separable Gaussian blur with replicated edges, radius ceil(3*sigma).
inline void gaussian_smooth_grid(std::vector<float>& grid, int h, int w, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const double v = std::exp(-0.5 * (k * k) / (sigma * sigma));
    kernel[static_cast<size_t>(k + radius)] = v;
    total += v;
  }
  for (auto& v : kernel) v /= total;

  std::vector<float> tmp(grid.size());
  for (int i = 0; i < h; ++i) {
    const float* row = grid.data() + static_cast<size_t>(i) * w;
    for (int j = 0; j < w; ++j) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int jj = std::clamp(j + k, 0, w - 1);
        acc += kernel[static_cast<size_t>(k + radius)] * row[jj];
      }
      tmp[static_cast<size_t>(i) * w + j] = static_cast<float>(acc);
    }
  }
  for (int j = 0; j < w; ++j) {
    for (int i = 0; i < h; ++i) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int ii = std::clamp(i + k, 0, h - 1);
        acc += kernel[static_cast<size_t>(k + radius)] * tmp[static_cast<size_t>(ii) * w + j];
      }
      grid[static_cast<size_t>(i) * w + j] = static_cast<float>(acc);
    }
  }
}

inline SsimParams clamped_ssim_params(int h, int w) {
  SsimParams p;
  int win = std::min(p.window_size, std::min(h, w));
  if (win % 2 == 0) --win;
  p.window_size = std::max(win, 1);
  return p;
}

}  // namespace detail

inline void gaussian_smooth(Image& img, double sigma) {
  detail::gaussian_smooth_grid(img.data, img.height, img.width, sigma);
}

inline void gaussian_smooth(WarpField& field, double sigma) {
  detail::gaussian_smooth_grid(field.phi_i, field.height, field.width, sigma);
  detail::gaussian_smooth_grid(field.phi_j, field.height, field.width, sigma);
}

/// One Thirion update: u = (w - f) grad(f) / (|grad f|^2 + (w - f)^2), with
/// the fixed-image gradient from clamped central differences. Pixels whose
/// denominator vanishes get no update; step length is clamped to max_step.
inline WarpField demons_step(const Image& fixed, const Image& warped, double max_step,
                             double update_sigma) {
  require_same_shape(fixed, warped, "demons_step");
  const int h = fixed.height, w = fixed.width;
  WarpField u(h, w);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const double gi = 0.5 * (fixed.at(std::min(i + 1, h - 1), j) -
                               fixed.at(std::max(i - 1, 0), j));
      const double gj = 0.5 * (fixed.at(i, std::min(j + 1, w - 1)) -
                               fixed.at(i, std::max(j - 1, 0)));
      const double diff = warped.at(i, j) - fixed.at(i, j);
      const double denom = gi * gi + gj * gj + diff * diff;
      if (denom < 1e-9) continue;
      double ui = diff * gi / denom;
      double uj = diff * gj / denom;
      const double mag = std::sqrt(ui * ui + uj * uj);
      if (mag > max_step) {
        ui *= max_step / mag;
        uj *= max_step / mag;
      }
      u.phi_i[static_cast<size_t>(i) * w + j] = static_cast<float>(ui);
      u.phi_j[static_cast<size_t>(i) * w + j] = static_cast<float>(uj);
    }
  }
  gaussian_smooth(u, update_sigma);
  return u;
}

/// Exponential of a stationary velocity field by scaling and squaring: halve
/// until the largest displacement is below half a pixel, then square back up.
inline WarpField exp_field(const WarpField& velocity) {
  double max_mag = 0.0;
  for (size_t k = 0; k < velocity.phi_i.size(); ++k) {
    const double vi = velocity.phi_i[k], vj = velocity.phi_j[k];
    max_mag = std::max(max_mag, std::sqrt(vi * vi + vj * vj));
  }
  int squarings = 0;
  while (max_mag / static_cast<double>(1u << squarings) >= 0.5 && squarings < 30) ++squarings;

  WarpField result = velocity;
  const float scale = 1.0f / static_cast<float>(1u << squarings);
  for (auto& v : result.phi_i) v *= scale;
  for (auto& v : result.phi_j) v *= scale;
  for (int s = 0; s < squarings; ++s) result = compose(result, result);
  return result;
}

namespace detail {

/// 2x2 block mean with ceil semantics; odd trailing rows/cols average the
/// pixels that exist.
inline Image downsample_half(const Image& img) {
  const int oh = (img.height + 1) / 2, ow = (img.width + 1) / 2;
  Image out(oh, ow);
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      double acc = 0.0;
      int count = 0;
      for (int di = 0; di < 2; ++di) {
        for (int dj = 0; dj < 2; ++dj) {
          const int si = 2 * i + di, sj = 2 * j + dj;
          if (si < img.height && sj < img.width) {
            acc += img.at(si, sj);
            ++count;
          }
        }
      }
      out.at(i, j) = static_cast<float>(acc / count);
    }
  }
  return out;
}

/// Bilinear field resize with displacements rescaled by the size ratio, so a
/// coarse-level solution seeds the next finer level.
inline WarpField upsample_field(const WarpField& field, int oh, int ow) {
  WarpField out(oh, ow);
  const double scale_i = static_cast<double>(oh) / field.height;
  const double scale_j = static_cast<double>(ow) / field.width;
  const double yr = oh > 1 ? static_cast<double>(field.height - 1) / (oh - 1) : 0.0;
  const double xr = ow > 1 ? static_cast<double>(field.width - 1) / (ow - 1) : 0.0;
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      const double y = i * yr, x = j * xr;
      out.phi_i[static_cast<size_t>(i) * ow + j] = static_cast<float>(
          scale_i * bilinear_grid<float>(field.phi_i.data(), field.height, field.width, y, x));
      out.phi_j[static_cast<size_t>(i) * ow + j] = static_cast<float>(
          scale_j * bilinear_grid<float>(field.phi_j.data(), field.height, field.width, y, x));
    }
  }
  return out;
}

}  // namespace detail

/// Multi-resolution diffeomorphic registration of `moving` onto `fixed`.
/// Each level runs: warp, Thirion step, field exponential, composition onto
/// the running field, Gaussian regularization.
inline DemonsResult register_demons(const Image& fixed, const Image& moving,
                                    const DemonsConfig& config = {}) {
  require_same_shape(fixed, moving, "register_demons");
  config.validate(fixed.height, fixed.width);

  std::vector<Image> fixed_pyr{fixed}, moving_pyr{moving};
  for (int l = 1; l < config.levels; ++l) {
    fixed_pyr.push_back(detail::downsample_half(fixed_pyr.back()));
    moving_pyr.push_back(detail::downsample_half(moving_pyr.back()));
  }

  DemonsResult result;
  WarpField field(fixed_pyr.back().height, fixed_pyr.back().width);

  for (int l = config.levels - 1; l >= 0; --l) {
    const Image& f = fixed_pyr[static_cast<size_t>(l)];
    const Image& m = moving_pyr[static_cast<size_t>(l)];
    if (field.height != f.height || field.width != f.width) {
      field = detail::upsample_field(field, f.height, f.width);
    }
    const SsimParams sp = detail::clamped_ssim_params(f.height, f.width);
    for (int it = 0; it < config.iterations; ++it) {
      Image warped = apply(field, m);
      WarpField update = demons_step(f, warped, config.max_step, config.update_sigma);
      field = compose(exp_field(update), field);
      gaussian_smooth(field, config.smoothing_sigma);

      if (config.record_trace) {
        Image check = apply(field, m);
        DemonsIterationStats stats;
        stats.level = l;
        stats.iteration = it;
        stats.mse_value = mse(f, check);
        stats.ssim_value = ssim(f, check, sp);
        result.trace.push_back(stats);
      }
    }
  }

  result.warped = apply(field, moving);
  result.field = std::move(field);
  return result;
}

}  // namespace warpreg
