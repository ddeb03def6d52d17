#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "warpreg/errors.hpp"
#include "warpreg/image.hpp"
#include "warpreg/io_util.hpp"
#include "warpreg/rng.hpp"
#include "warpreg/warp_field.hpp"

namespace warpreg {

// ---------------------------------------------------------------------------
// Phantom images
// ---------------------------------------------------------------------------

namespace detail {

/// Signed normalized distance of (i,j) from an ellipse boundary: < 1 inside.
inline double ellipse_dist(double i, double j, double ci, double cj, double ri, double rj,
                           double angle) {
  const double di = i - ci, dj = j - cj;
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double u = (di * ca + dj * sa) / ri;
  const double v = (-di * sa + dj * ca) / rj;
  return std::sqrt(u * u + v * v);
}

/// Smooth step from 1 inside to 0 outside across `soft` units of distance.
inline double soft_inside(double dist, double soft) {
  return 1.0 / (1.0 + std::exp((dist - 1.0) / soft));
}

}  // namespace detail

/// Synthetic slice phantom: a bright rim, an inner tissue mass, a dark
/// ventricle pair, a handful of random blobs, and smooth low-amplitude
/// texture. Deterministic per seed; min-max normalized.
inline Image gen_phantom(int size, uint64_t seed) {
  if (size < 16) throw ConfigError("gen_phantom: size must be >= 16");
  RngStream rng(substream(seed, "phantom"));
  const double s = static_cast<double>(size);
  const double ci = s * 0.5 + rng.uniform(-0.04, 0.04) * s;
  const double cj = s * 0.5 + rng.uniform(-0.04, 0.04) * s;
  const double rim_ri = s * rng.uniform(0.36, 0.44);
  const double rim_rj = s * rng.uniform(0.30, 0.40);
  const double rim_angle = rng.uniform(-0.5, 0.5);
  const double rim_level = rng.uniform(0.85, 1.0);
  const double tissue_level = rng.uniform(0.35, 0.55);
  const double soft = 0.02 + rng.uniform(0.0, 0.02);

  struct Blob {
    double ci, cj, ri, rj, angle, level;
  };
  std::vector<Blob> blobs;
  const int n_blobs = rng.uniform_int(3, 6);
  for (int b = 0; b < n_blobs; ++b) {
    Blob bl;
    bl.ci = ci + rng.uniform(-0.22, 0.22) * s;
    bl.cj = cj + rng.uniform(-0.18, 0.18) * s;
    bl.ri = s * rng.uniform(0.04, 0.12);
    bl.rj = s * rng.uniform(0.04, 0.12);
    bl.angle = rng.uniform(-1.5, 1.5);
    bl.level = rng.uniform(0.2, 0.9);
    blobs.push_back(bl);
  }
  struct Vent {
    double ci, cj, ri, rj, angle;
  };
  Vent vents[2];
  const double vent_gap = s * rng.uniform(0.05, 0.09);
  for (int v = 0; v < 2; ++v) {
    vents[v].ci = ci + rng.uniform(-0.03, 0.03) * s;
    vents[v].cj = cj + (v == 0 ? -vent_gap : vent_gap);
    vents[v].ri = s * rng.uniform(0.08, 0.14);
    vents[v].rj = s * rng.uniform(0.025, 0.05);
    vents[v].angle = rng.uniform(-0.3, 0.3);
  }

  // Smooth texture as a small sum of random-direction sinusoids.
  struct Wave {
    double fi, fj, phase, amp;
  };
  std::vector<Wave> waves;
  for (int t = 0; t < 10; ++t) {
    Wave wv;
    wv.fi = rng.uniform(2.0, 10.0);
    wv.fj = rng.uniform(2.0, 10.0);
    wv.phase = rng.uniform(0.0, 6.283185307179586);
    wv.amp = rng.uniform(0.04, 0.10);
    waves.push_back(wv);
  }

  Image img(size, size);
  const double two_pi = 6.283185307179586;
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      const double rim_d =
          detail::ellipse_dist(i, j, ci, cj, rim_ri, rim_rj, rim_angle);
      const double rim_in = detail::soft_inside(rim_d, soft);
      const double core_in = detail::soft_inside(rim_d / 0.92, soft);
      double v = 0.02;
      v += rim_level * (rim_in - core_in);  // bright rim band
      v += tissue_level * core_in;
      for (const auto& bl : blobs) {
        const double d = detail::ellipse_dist(i, j, bl.ci, bl.cj, bl.ri, bl.rj, bl.angle);
        v += (bl.level - tissue_level) * detail::soft_inside(d, 0.08) * core_in;
      }
      for (const auto& vt : vents) {
        const double d = detail::ellipse_dist(i, j, vt.ci, vt.cj, vt.ri, vt.rj, vt.angle);
        v -= 0.85 * tissue_level * detail::soft_inside(d, 0.07) * core_in;
      }
      double tex = 0.0;
      for (const auto& wv : waves) {
        tex += wv.amp * std::sin(two_pi * (wv.fi * i + wv.fj * j) / s + wv.phase);
      }
      v += tex * core_in;
      img.at(i, j) = static_cast<float>(v);
    }
  }
  return normalize(img);
}

// ---------------------------------------------------------------------------
// Parametric warp fields
// ---------------------------------------------------------------------------

enum class WarpKind { linear, spherical, sinusoidal, mixed };

inline const char* warp_kind_name(WarpKind k) {
  switch (k) {
    case WarpKind::linear: return "linear";
    case WarpKind::spherical: return "spherical";
    case WarpKind::sinusoidal: return "sinusoidal";
    case WarpKind::mixed: return "mixed";
  }
  return "?";
}

inline WarpKind parse_warp_kind(const std::string& s) {
  if (s == "linear") return WarpKind::linear;
  if (s == "spherical") return WarpKind::spherical;
  if (s == "sinusoidal") return WarpKind::sinusoidal;
  if (s == "mixed") return WarpKind::mixed;
  throw ConfigError("unknown warp kind: " + s);
}

/// Peak displacement cap: 5 px at 64x64, scaled linearly with size.
inline double max_warp_amplitude(int size) { return 5.0 * static_cast<double>(size) / 64.0; }

/// Parametric random warp description. Kind-specific parameters are drawn
/// deterministically from the seed inside gen_field; amplitude is the peak
/// displacement magnitude in pixels.
struct WarpSpec {
  WarpKind kind = WarpKind::mixed;
  double amplitude = 3.0;
  uint64_t seed = 0;
};

namespace detail {

inline void field_extrema(const WarpField& f, double& max_mag, double& max_grad) {
  max_mag = 0.0;
  max_grad = 0.0;
  const int h = f.height, w = f.width;
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const size_t k = static_cast<size_t>(i) * w + j;
      const double vi = f.phi_i[k], vj = f.phi_j[k];
      max_mag = std::max(max_mag, std::sqrt(vi * vi + vj * vj));
      if (i + 1 < h) {
        max_grad = std::max(
            max_grad, static_cast<double>(std::abs(f.phi_i[k + static_cast<size_t>(w)] - f.phi_i[k])));
        max_grad = std::max(
            max_grad, static_cast<double>(std::abs(f.phi_j[k + static_cast<size_t>(w)] - f.phi_j[k])));
      }
      if (j + 1 < w) {
        max_grad = std::max(max_grad, static_cast<double>(std::abs(f.phi_i[k + 1] - f.phi_i[k])));
        max_grad = std::max(max_grad, static_cast<double>(std::abs(f.phi_j[k + 1] - f.phi_j[k])));
      }
    }
  }
}

inline void add_linear_field(WarpField& f, RngStream& rng, double amplitude) {
  const int h = f.height, w = f.width;
  const double s = static_cast<double>(std::max(h, w));
  const double ci = (h - 1) * 0.5, cj = (w - 1) * 0.5;
  // Offset plus constant-gradient terms, scaled so the corner displacement
  // stays near the requested amplitude.
  double bi = rng.uniform(-0.5, 0.5), bj = rng.uniform(-0.5, 0.5);
  double gii = rng.uniform(-1.0, 1.0), gij = rng.uniform(-1.0, 1.0);
  double gji = rng.uniform(-1.0, 1.0), gjj = rng.uniform(-1.0, 1.0);
  const double gscale = 1.0 / s;
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const size_t k = static_cast<size_t>(i) * w + j;
      const double di = i - ci, dj = j - cj;
      f.phi_i[k] += static_cast<float>(amplitude * (bi + gscale * (gii * di + gij * dj)));
      f.phi_j[k] += static_cast<float>(amplitude * (bj + gscale * (gji * di + gjj * dj)));
    }
  }
}

inline void add_spherical_field(WarpField& f, RngStream& rng, double amplitude) {
  const int h = f.height, w = f.width;
  const double s = static_cast<double>(std::max(h, w));
  const double ci = rng.uniform(0.3, 0.7) * (h - 1);
  const double cj = rng.uniform(0.3, 0.7) * (w - 1);
  const double radius = rng.uniform(0.25, 0.45) * s;
  const double strength = (rng.bernoulli(0.5) ? 1.0 : -1.0) * amplitude;
  // Radial bump u(1-u^2)^2 peaks at u = 1/sqrt(5) with value ~0.358.
  const double peak = (1.0 / std::sqrt(5.0)) * std::pow(1.0 - 0.2, 2.0);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const double di = i - ci, dj = j - cj;
      const double r = std::sqrt(di * di + dj * dj);
      if (r >= radius || r < 1e-12) continue;
      const double u = r / radius;
      const double g = u * (1.0 - u * u) * (1.0 - u * u) / peak;
      const size_t k = static_cast<size_t>(i) * w + j;
      f.phi_i[k] += static_cast<float>(strength * g * di / r);
      f.phi_j[k] += static_cast<float>(strength * g * dj / r);
    }
  }
}

inline void add_sinusoidal_field(WarpField& f, RngStream& rng, double amplitude) {
  const int h = f.height, w = f.width;
  const double two_pi = 6.283185307179586;
  const int fi = rng.uniform_int(1, 2);
  const int fj = rng.uniform_int(1, 2);
  const double pi_phase = rng.uniform(0.0, two_pi);
  const double pj_phase = rng.uniform(0.0, two_pi);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const size_t k = static_cast<size_t>(i) * w + j;
      f.phi_i[k] += static_cast<float>(amplitude * std::sin(two_pi * fi * i / h + pi_phase));
      f.phi_j[k] += static_cast<float>(amplitude * std::sin(two_pi * fj * j / w + pj_phase));
    }
  }
}

}  // namespace detail

/// Generates the parametric field for a spec. The result always satisfies
/// max |phi| <= amplitude and the invertibility bound max |grad phi| < 0.5
/// (fields violating it after parameter draws are rescaled down).
inline WarpField gen_field(const WarpSpec& spec, int size) {
  if (size < 8) throw ConfigError("gen_field: size must be >= 8");
  if (spec.amplitude < 0.0) throw ConfigError("gen_field: amplitude must be non-negative");
  if (spec.amplitude > max_warp_amplitude(size)) {
    throw ConfigError("gen_field: amplitude exceeds the invertibility cap for this size");
  }
  WarpField f(size, size);
  if (spec.amplitude == 0.0) return f;

  RngStream rng(substream(spec.seed, "warp"));
  switch (spec.kind) {
    case WarpKind::linear: detail::add_linear_field(f, rng, spec.amplitude); break;
    case WarpKind::spherical: detail::add_spherical_field(f, rng, spec.amplitude); break;
    case WarpKind::sinusoidal: detail::add_sinusoidal_field(f, rng, spec.amplitude); break;
    case WarpKind::mixed: {
      detail::add_linear_field(f, rng, spec.amplitude / 3.0);
      detail::add_spherical_field(f, rng, spec.amplitude / 3.0);
      detail::add_sinusoidal_field(f, rng, spec.amplitude / 3.0);
      break;
    }
  }

  double max_mag = 0.0, max_grad = 0.0;
  detail::field_extrema(f, max_mag, max_grad);
  double scale = 1.0;
  if (max_mag > 0.0 && (spec.kind == WarpKind::mixed || max_mag > spec.amplitude)) {
    scale = spec.amplitude / max_mag;  // mixed is renormalized to the exact amplitude
  }
  if (max_grad * scale >= 0.45) scale = 0.45 / max_grad;
  if (scale != 1.0) {
    for (auto& v : f.phi_i) v = static_cast<float>(v * scale);
    for (auto& v : f.phi_j) v = static_cast<float>(v * scale);
  }
  return f;
}

// ---------------------------------------------------------------------------
// Pair generation and the on-disk dataset
// ---------------------------------------------------------------------------

/// One training example: the template is the untouched base image, the
/// subject is the template pushed through a random field, and the round-trip
/// truth is the subject pulled back by the inverted field.
struct SamplePair {
  std::string pair_id;
  bool is_validation = false;
  Image subject;
  Image template_image;
  WarpField applied_field;
  Image roundtrip_truth;
};

inline SamplePair make_pair(const Image& base, const WarpSpec& spec, const std::string& pair_id) {
  SamplePair p;
  p.pair_id = pair_id;
  p.template_image = base;
  p.applied_field = gen_field(spec, base.height);
  p.subject = apply(p.applied_field, base);
  p.roundtrip_truth = apply(invert(p.applied_field), p.subject);
  return p;
}

struct TrainingSet {
  std::vector<SamplePair> train;
  std::vector<SamplePair> validation;
};

namespace detail {

inline WarpKind cycle_kind(int index) {
  switch (index % 4) {
    case 0: return WarpKind::linear;
    case 1: return WarpKind::spherical;
    case 2: return WarpKind::sinusoidal;
    default: return WarpKind::mixed;
  }
}

inline std::string pair_file(const std::string& pair_id, const char* suffix) {
  return pair_id + "_" + suffix;
}

}  // namespace detail

/// Generates the full synthetic dataset in memory: `n_images` base phantoms,
/// `warps_per_image` random warps each, cycling the warp kinds. The split is
/// by base image so warped variants of one image never straddle it.
inline TrainingSet generate_training_set(int n_images, int warps_per_image, int size,
                                         uint64_t seed,
                                         const std::vector<Image>* source_images = nullptr) {
  if (n_images < 2) throw ConfigError("dataset: need at least 2 base images for a split");
  if (warps_per_image < 1) throw ConfigError("dataset: warps_per_image must be >= 1");
  if (source_images && static_cast<int>(source_images->size()) < n_images) {
    throw ConfigError("dataset: fewer source images than n_images");
  }

  std::vector<int> base_order(static_cast<size_t>(n_images));
  for (int b = 0; b < n_images; ++b) base_order[static_cast<size_t>(b)] = b;
  RngStream split_rng(substream(seed, "split"));
  for (int b = n_images - 1; b > 0; --b) {
    const int r = static_cast<int>(split_rng.uniform_int(0, b));
    std::swap(base_order[static_cast<size_t>(b)], base_order[static_cast<size_t>(r)]);
  }
  int n_train = static_cast<int>(std::lround(0.8 * n_images));
  n_train = std::clamp(n_train, 1, n_images - 1);
  std::vector<bool> is_val(static_cast<size_t>(n_images), false);
  for (int r = n_train; r < n_images; ++r) is_val[static_cast<size_t>(base_order[r])] = true;

  TrainingSet set;
  const double amplitude_cap = max_warp_amplitude(size);
  for (int b = 0; b < n_images; ++b) {
    Image base =
        source_images
            ? normalize((*source_images)[static_cast<size_t>(b)])
            : gen_phantom(size, derive_seed(seed, "phantom-base", static_cast<uint64_t>(b)));
    if (base.height != size || base.width != size) {
      throw DimensionError("dataset: source image size mismatch");
    }
    RngStream amp_rng(substream(seed, "amplitude", static_cast<uint64_t>(b)));
    for (int wpi = 0; wpi < warps_per_image; ++wpi) {
      WarpSpec spec;
      spec.kind = detail::cycle_kind(wpi);
      spec.amplitude = amp_rng.uniform(0.7 * amplitude_cap, amplitude_cap);
      spec.seed = derive_seed(seed, "warp-seed",
                              static_cast<uint64_t>(b) * 1000 + static_cast<uint64_t>(wpi));
      std::ostringstream id;
      id << "b" << std::setw(4) << std::setfill('0') << b << "w" << wpi;
      SamplePair p = make_pair(base, spec, id.str());
      p.is_validation = is_val[static_cast<size_t>(b)];
      (p.is_validation ? set.validation : set.train).push_back(std::move(p));
    }
  }
  return set;
}

/// Writes a training set under `out_dir`: per-pair subject/field/truth files,
/// one shared template per base image, and an ASCII manifest named
/// `manifest.txt` with one line per pair:
/// `pair_id split subject.pgm template.pgm field.wrp1 truth.pgm`.
inline std::filesystem::path write_dataset(const TrainingSet& set,
                                           const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::ostringstream manifest;
  auto emit = [&](const SamplePair& p) {
    const std::string subject = detail::pair_file(p.pair_id, "subject.pgm");
    const std::string templ = detail::pair_file(p.pair_id, "template.pgm");
    const std::string field = detail::pair_file(p.pair_id, "field.wrp1");
    const std::string truth = detail::pair_file(p.pair_id, "truth.pgm");
    save_pgm(p.subject, (out_dir / subject).string());
    save_pgm(p.template_image, (out_dir / templ).string());
    save_field(p.applied_field, (out_dir / field).string());
    save_pgm(p.roundtrip_truth, (out_dir / truth).string());
    manifest << p.pair_id << " " << (p.is_validation ? "val" : "train") << " " << subject << " "
             << templ << " " << field << " " << truth << "\n";
  };
  for (const auto& p : set.train) emit(p);
  for (const auto& p : set.validation) emit(p);
  const fs::path manifest_path = out_dir / "manifest.txt";
  atomic_write_file(manifest_path, manifest.str());
  return manifest_path;
}

/// Convenience wrapper: generate then write; returns the manifest path.
inline std::filesystem::path make_dataset(int n_images, int warps_per_image, int size,
                                          uint64_t seed, const std::filesystem::path& out_dir) {
  return write_dataset(generate_training_set(n_images, warps_per_image, size, seed), out_dir);
}

/// Loads a dataset back from its manifest. Paths are relative to the
/// manifest's directory.
inline TrainingSet load_dataset(const std::filesystem::path& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest: " + manifest_path.string());
  const fs::path dir = manifest_path.parent_path();
  TrainingSet set;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string pair_id, split, subject, templ, field, truth;
    if (!(ls >> pair_id >> split >> subject >> templ >> field >> truth)) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": expected 6 fields");
    }
    if (split != "train" && split != "val") {
      throw FormatError("manifest line " + std::to_string(line_no) + ": bad split '" + split +
                        "'");
    }
    SamplePair p;
    p.pair_id = pair_id;
    p.is_validation = split == "val";
    p.subject = load_pgm((dir / subject).string());
    p.template_image = load_pgm((dir / templ).string());
    p.applied_field = load_field((dir / field).string());
    p.roundtrip_truth = load_pgm((dir / truth).string());
    (p.is_validation ? set.validation : set.train).push_back(std::move(p));
  }
  if (set.train.empty() && set.validation.empty()) {
    throw FormatError("manifest is empty: " + manifest_path.string());
  }
  return set;
}

/// Loads every .pgm in a directory (sorted by filename) as base images, so
/// real slices can stand in for phantoms.
inline std::vector<Image> load_image_dir(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<Image> images;
  images.reserve(paths.size());
  for (const auto& p : paths) images.push_back(load_pgm(p.string()));
  if (images.empty()) throw IoError("no .pgm files in " + dir.string());
  return images;
}

}  // namespace warpreg
