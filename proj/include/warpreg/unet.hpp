#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "warpreg/autodiff.hpp"
#include "warpreg/dataset.hpp"
#include "warpreg/errors.hpp"
#include "warpreg/image.hpp"
#include "warpreg/io_util.hpp"
#include "warpreg/metrics.hpp"
#include "warpreg/rng.hpp"
#include "warpreg/warp_field.hpp"

namespace warpreg {

/// Architecture scale. Widths double per level; the bottleneck sits at
/// base_width * 2^depth channels.
struct UNetConfig {
  int input_size = 64;
  int depth = 3;
  int base_width = 8;

  static UNetConfig paper() { return {128, 4, 64}; }
  static UNetConfig desk() { return {64, 3, 8}; }

  int level_width(int level) const { return base_width << level; }  // level 0-based
  int bottleneck_width() const { return base_width << depth; }

  void validate() const {
    if (depth < 1) throw ConfigError("unet: depth must be >= 1");
    if (base_width < 2) throw ConfigError("unet: base_width must be >= 2");
    if (input_size < (1 << depth)) throw ConfigError("unet: input_size too small for depth");
    if (input_size % (1 << depth) != 0) {
      throw ConfigError("unet: input_size must be divisible by 2^depth");
    }
  }
};

enum class LossMode { msessim, ssim_only, mse_only };

inline const char* loss_mode_name(LossMode m) {
  switch (m) {
    case LossMode::msessim: return "msessim";
    case LossMode::ssim_only: return "ssim_only";
    case LossMode::mse_only: return "mse_only";
  }
  return "?";
}

inline LossMode parse_loss_mode(const std::string& s) {
  if (s == "msessim") return LossMode::msessim;
  if (s == "ssim_only") return LossMode::ssim_only;
  if (s == "mse_only") return LossMode::mse_only;
  throw ConfigError("unknown loss mode: " + s);
}

struct EpochStats {
  int epoch = 0;  ///< 1-based
  double train_loss = 0.0;
  double train_mse = 0.0;
  double train_ssim = 0.0;
  double val_mse = 0.0;
  double val_ssim = 0.0;
};

struct TrainConfig {
  double lr = 1e-4;
  int epochs = 30;
  LossMode loss_mode = LossMode::msessim;
  double alpha = 10.0;
  double beta = 1.0;
  uint64_t seed = 0;
  double validation_fraction = 0.2;     ///< used only when the set has no explicit split
  std::vector<int> checkpoint_epochs;   ///< epochs after which a checkpoint is written
  std::filesystem::path checkpoint_dir;
  std::function<void(const EpochStats&)> on_epoch;  ///< optional progress hook

  void validate() const {
    if (lr <= 0.0) throw ConfigError("train: lr must be positive");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (validation_fraction <= 0.0 || validation_fraction >= 1.0) {
      throw ConfigError("train: validation_fraction must be in (0, 1)");
    }
    if (alpha < 0.0 || beta < 0.0) throw ConfigError("train: loss weights must be non-negative");
  }
};

/// Model = config plus named parameter tensors in fixed creation order (the
/// order defines checkpoint layout and initialization-draw order).
template <typename Real>
struct UNetModel {
  UNetConfig config;
  std::vector<std::string> names;
  std::vector<ad::TensorPtr<Real>> tensors;

  ad::TensorPtr<Real> find(const std::string& name) const {
    for (size_t k = 0; k < names.size(); ++k) {
      if (names[k] == name) return tensors[k];
    }
    throw ConfigError("unet: no parameter named " + name);
  }

  size_t parameter_count() const { return ad::parameter_count(tensors); }
};

namespace detail {

template <typename Real>
ad::TensorPtr<Real> add_param(UNetModel<Real>& model, const std::string& name,
                              std::vector<int> shape) {
  auto t = ad::make_parameter<Real>(std::move(shape));
  model.names.push_back(name);
  model.tensors.push_back(t);
  return t;
}

template <typename Real>
void init_conv(ad::Tensor<Real>& kernel, RngStream& rng) {
  const int k = kernel.dim(0);
  const int fan_in = k * k * kernel.dim(2);
  const int fan_out = k * k * kernel.dim(3);
  ad::glorot_fill(kernel, fan_in, fan_out, rng);
}

}  // namespace detail

/// Builds the encoder-decoder described by the config: per encoder level two
/// 3x3 tanh convs, dropout, 2x2 maxpool; two bottleneck convs; per decoder
/// level a 2x2 stride-2 transposed conv (linear), concatenation with the
/// matching pre-dropout encoder output, and two 3x3 tanh convs; then a 1x1
/// linear head emitting the two displacement channels.
template <typename Real>
UNetModel<Real> build_unet(const UNetConfig& cfg, uint64_t seed) {
  cfg.validate();
  UNetModel<Real> model;
  model.config = cfg;
  RngStream rng(substream(seed, "init"));

  auto conv_layer = [&](const std::string& name, int k, int cin, int cout) {
    auto kernel = detail::add_param(model, name + "_kernel", {k, k, cin, cout});
    detail::init_conv(*kernel, rng);
    detail::add_param(model, name + "_bias", {cout});
  };

  for (int e = 0; e < cfg.depth; ++e) {
    const int cin = e == 0 ? 2 : cfg.level_width(e - 1);
    const int cw = cfg.level_width(e);
    const std::string base = "enc" + std::to_string(e + 1);
    conv_layer(base + "_conv1", 3, cin, cw);
    conv_layer(base + "_conv2", 3, cw, cw);
  }
  conv_layer("bot_conv1", 3, cfg.level_width(cfg.depth - 1), cfg.bottleneck_width());
  conv_layer("bot_conv2", 3, cfg.bottleneck_width(), cfg.bottleneck_width());
  for (int d = cfg.depth - 1; d >= 0; --d) {
    const int up_in = d == cfg.depth - 1 ? cfg.bottleneck_width() : cfg.level_width(d + 1);
    const int cw = cfg.level_width(d);
    const std::string base = "dec" + std::to_string(d + 1);
    conv_layer(base + "_up", 2, up_in, cw);
    conv_layer(base + "_conv1", 3, 2 * cw, cw);
    conv_layer(base + "_conv2", 3, cw, cw);
  }
  conv_layer("head", 1, cfg.level_width(0), 2);
  return model;
}

/// Forward products: the emitted flow, the warped source, and the per-level
/// feature maps kept for activation dumps (encoder conv2 outputs, bottleneck
/// output, decoder conv2 outputs in forward order).
template <typename Real>
struct UNetActivations {
  ad::TensorPtr<Real> flow;
  ad::TensorPtr<Real> warped;
  std::vector<ad::TensorPtr<Real>> level_outputs;
};

template <typename Real>
UNetActivations<Real> unet_forward(const UNetModel<Real>& model,
                                   const ad::TensorPtr<Real>& source,
                                   const ad::TensorPtr<Real>& templ, bool training,
                                   RngStream* dropout_rng) {
  const UNetConfig& cfg = model.config;
  const int n = cfg.input_size;
  if (source->rank() != 3 || source->dim(0) != n || source->dim(1) != n || source->dim(2) != 1 ||
      templ->rank() != 3 || templ->dim(0) != n || templ->dim(1) != n || templ->dim(2) != 1) {
    throw DimensionError("unet_forward: inputs must be [input_size, input_size, 1]");
  }
  if (training && dropout_rng == nullptr) {
    throw ConfigError("unet_forward: training mode needs a dropout rng");
  }

  UNetActivations<Real> acts;
  auto conv_tanh = [&](const ad::TensorPtr<Real>& x, const std::string& name) {
    return ad::tanh_act(ad::conv2d(x, model.find(name + "_kernel"), model.find(name + "_bias")));
  };

  ad::TensorPtr<Real> x = ad::concat_channels(source, templ);
  std::vector<ad::TensorPtr<Real>> skips;
  for (int e = 0; e < cfg.depth; ++e) {
    const std::string base = "enc" + std::to_string(e + 1);
    x = conv_tanh(x, base + "_conv1");
    x = conv_tanh(x, base + "_conv2");
    skips.push_back(x);
    acts.level_outputs.push_back(x);
    if (training) x = ad::dropout(x, 0.5, *dropout_rng, true);
    x = ad::maxpool2(x);
  }
  x = conv_tanh(x, "bot_conv1");
  x = conv_tanh(x, "bot_conv2");
  acts.level_outputs.push_back(x);
  for (int d = cfg.depth - 1; d >= 0; --d) {
    const std::string base = "dec" + std::to_string(d + 1);
    auto up = ad::linear_act(
        ad::conv2d_transpose(x, model.find(base + "_up_kernel"), model.find(base + "_up_bias")));
    x = ad::concat_channels(up, skips[static_cast<size_t>(d)]);
    x = conv_tanh(x, base + "_conv1");
    x = conv_tanh(x, base + "_conv2");
    acts.level_outputs.push_back(x);
  }
  acts.flow = ad::conv2d(x, model.find("head_kernel"), model.find("head_bias"));
  acts.warped = ad::dense_warp(source, acts.flow);
  return acts;
}

// ---------------------------------------------------------------------------
// Image/tensor bridging
// ---------------------------------------------------------------------------

template <typename Real>
ad::TensorPtr<Real> image_tensor(const Image& img) {
  auto t = ad::make_tensor<Real>({img.height, img.width, 1});
  for (size_t k = 0; k < img.data.size(); ++k) t->values[k] = static_cast<Real>(img.data[k]);
  return t;
}

template <typename Real>
Image tensor_image(const ad::Tensor<Real>& t, int channel) {
  if (t.rank() != 3 || channel < 0 || channel >= t.dim(2)) {
    throw DimensionError("tensor_image: bad channel");
  }
  Image img(t.dim(0), t.dim(1));
  const int c = t.dim(2);
  for (int i = 0; i < img.height; ++i) {
    for (int j = 0; j < img.width; ++j) {
      img.at(i, j) = static_cast<float>(t.values[(static_cast<size_t>(i) * img.width + j) * c +
                                                 channel]);
    }
  }
  return img;
}

/// Flow tensor [H,W,2] to a warp field: channel 0 is the row displacement,
/// channel 1 the column displacement.
template <typename Real>
WarpField flow_to_field(const ad::Tensor<Real>& flow) {
  if (flow.rank() != 3 || flow.dim(2) != 2) throw DimensionError("flow_to_field: need [H,W,2]");
  WarpField f(flow.dim(0), flow.dim(1));
  for (size_t k = 0; k < f.phi_i.size(); ++k) {
    f.phi_i[k] = static_cast<float>(flow.values[k * 2 + 0]);
    f.phi_j[k] = static_cast<float>(flow.values[k * 2 + 1]);
  }
  return f;
}

struct RegistrationOutput {
  WarpField field;
  Image warped;
};

/// Runs the net on a normalized pair and returns the emitted field plus the
/// warped subject. Training mode keeps dropout active (pass an rng).
template <typename Real>
RegistrationOutput forward_register(const UNetModel<Real>& model, const Image& subject,
                                    const Image& templ, bool training = false,
                                    RngStream* dropout_rng = nullptr) {
  const int n = model.config.input_size;
  if (subject.height != n || subject.width != n || templ.height != n || templ.width != n) {
    throw DimensionError("forward_register: images must match the model input size");
  }
  auto s = image_tensor<Real>(subject);
  auto t = image_tensor<Real>(templ);
  auto acts = unet_forward(model, s, t, training, dropout_rng);
  RegistrationOutput out;
  out.field = flow_to_field(*acts.flow);
  out.warped = tensor_image(*acts.warped, 0);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O (format: magic "UNT1", little-endian)
// ---------------------------------------------------------------------------

struct ModelHeader {
  uint32_t version = 1;
  UNetConfig config;
  uint8_t channel_tag = 0;  ///< 0: flow channel 0 = row displacement
  uint32_t tensor_count = 0;
};

template <typename Real>
void save_model(const UNetModel<Real>& model, const std::string& path) {
  ByteWriter wr;
  wr.text("UNT1");
  wr.u32(1);
  wr.u32(static_cast<uint32_t>(model.config.input_size));
  wr.u32(static_cast<uint32_t>(model.config.depth));
  wr.u32(static_cast<uint32_t>(model.config.base_width));
  wr.u8(0);
  wr.u32(static_cast<uint32_t>(model.tensors.size()));
  for (size_t k = 0; k < model.tensors.size(); ++k) {
    const std::string& name = model.names[k];
    const ad::Tensor<Real>& t = *model.tensors[k];
    wr.u16(static_cast<uint16_t>(name.size()));
    wr.text(name);
    wr.u8(static_cast<uint8_t>(t.rank()));
    for (int d = 0; d < t.rank(); ++d) wr.u32(static_cast<uint32_t>(t.dim(d)));
    for (const Real v : t.values) wr.f32(static_cast<float>(v));
  }
  atomic_write_file(path, wr.bytes());
}

namespace detail {

inline ModelHeader parse_model_header(ByteReader& rd) {
  const std::string magic = rd.str(4);
  if (magic != "UNT1") throw FormatError("checkpoint: bad magic");
  ModelHeader h;
  h.version = rd.u32();
  if (h.version != 1) throw FormatError("checkpoint: unsupported version");
  h.config.input_size = static_cast<int>(rd.u32());
  h.config.depth = static_cast<int>(rd.u32());
  h.config.base_width = static_cast<int>(rd.u32());
  h.channel_tag = rd.u8();
  if (h.channel_tag != 0) throw FormatError("checkpoint: unknown channel convention");
  h.tensor_count = rd.u32();
  h.config.validate();
  return h;
}

}  // namespace detail

/// Reads only the fixed-size header (config, conventions, tensor count).
inline ModelHeader read_model_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string buf(26, '\0');
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  buf.resize(static_cast<size_t>(in.gcount()));
  ByteReader rd(buf, path);
  return detail::parse_model_header(rd);
}

template <typename Real>
UNetModel<Real> load_model(const std::string& path) {
  const std::string buf = read_file(path);
  ByteReader rd(buf, path);
  const ModelHeader header = detail::parse_model_header(rd);

  UNetModel<Real> model = build_unet<Real>(header.config, 0);
  if (header.tensor_count != model.tensors.size()) {
    throw FormatError("checkpoint: tensor count does not match the architecture");
  }
  std::vector<bool> seen(model.tensors.size(), false);
  for (uint32_t k = 0; k < header.tensor_count; ++k) {
    const uint16_t name_len = rd.u16();
    const std::string name = rd.str(name_len);
    size_t idx = model.tensors.size();
    for (size_t q = 0; q < model.names.size(); ++q) {
      if (model.names[q] == name) {
        idx = q;
        break;
      }
    }
    if (idx == model.tensors.size()) throw FormatError("checkpoint: unexpected tensor " + name);
    if (seen[idx]) throw FormatError("checkpoint: duplicate tensor " + name);
    seen[idx] = true;
    ad::Tensor<Real>& t = *model.tensors[idx];
    const uint8_t rank = rd.u8();
    if (rank != t.rank()) throw FormatError("checkpoint: rank mismatch for " + name);
    for (int d = 0; d < t.rank(); ++d) {
      if (rd.u32() != static_cast<uint32_t>(t.dim(d))) {
        throw FormatError("checkpoint: shape mismatch for " + name);
      }
    }
    for (auto& v : t.values) v = static_cast<Real>(rd.f32());
  }
  if (rd.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
  return model;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace detail {

template <typename Real>
ad::TensorPtr<Real> loss_node(const ad::TensorPtr<Real>& warped, const ad::TensorPtr<Real>& templ,
                              const TrainConfig& tc, const SsimParams& sp, double* mse_out,
                              double* ssim_out) {
  auto mse_n = ad::mse_node(warped, templ);
  *mse_out = static_cast<double>(mse_n->values[0]);
  if (tc.loss_mode == LossMode::mse_only) {
    *ssim_out = std::numeric_limits<double>::quiet_NaN();
    return mse_n;
  }
  auto ssim_n = ad::mean_ssim_node(warped, templ, sp);
  *ssim_out = static_cast<double>(ssim_n->values[0]);
  if (tc.loss_mode == LossMode::ssim_only) {
    return ad::scalar_affine(ssim_n, -1.0, 1.0);
  }
  return ad::scalar_add(ad::scalar_affine(mse_n, tc.alpha, 0.0),
                        ad::scalar_affine(ssim_n, -tc.beta, tc.beta));
}

inline std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int epoch) {
  return dir / ("checkpoint_epoch_" + std::to_string(epoch) + ".unt1");
}

}  // namespace detail

/// Trains in place: per epoch, a shuffled pass over the training pairs with
/// batch size 1 and an Adam update per pair, then a dropout-off evaluation
/// over the validation pairs. Train-side stats are averaged over the
/// training-step forwards themselves. All randomness (shuffle order, dropout
/// masks) derives from tc.seed, so runs are bit-reproducible.
template <typename Real>
std::vector<EpochStats> train(UNetModel<Real>& model, const TrainingSet& data,
                              const TrainConfig& tc) {
  tc.validate();
  const int n = model.config.input_size;

  std::vector<const SamplePair*> train_pairs, val_pairs;
  for (const auto& p : data.train) train_pairs.push_back(&p);
  for (const auto& p : data.validation) val_pairs.push_back(&p);
  if (val_pairs.empty() && train_pairs.size() >= 2) {
    // No explicit split: carve validation_fraction off the provided pairs.
    std::vector<size_t> order(train_pairs.size());
    for (size_t k = 0; k < order.size(); ++k) order[k] = k;
    RngStream split_rng(substream(tc.seed, "split"));
    for (size_t k = order.size() - 1; k > 0; --k) {
      const size_t r = static_cast<size_t>(split_rng.uniform_int(0, static_cast<int64_t>(k)));
      std::swap(order[k], order[r]);
    }
    size_t n_val = static_cast<size_t>(
        std::lround(tc.validation_fraction * static_cast<double>(order.size())));
    n_val = std::clamp<size_t>(n_val, 1, order.size() - 1);
    std::vector<const SamplePair*> reordered;
    for (size_t k : order) reordered.push_back(train_pairs[k]);
    val_pairs.assign(reordered.end() - static_cast<std::ptrdiff_t>(n_val), reordered.end());
    reordered.resize(reordered.size() - n_val);
    train_pairs = std::move(reordered);
  }
  if (train_pairs.empty()) throw ConfigError("train: empty training set");
  for (const auto* p : train_pairs) {
    if (p->subject.height != n || p->subject.width != n) {
      throw DimensionError("train: pair size does not match model input size");
    }
  }

  SsimParams sp;
  sp.validate(n, n);
  RngStream dropout_rng(substream(tc.seed, "dropout"));
  ad::AdamState<Real> adam;
  adam.lr = tc.lr;

  std::vector<EpochStats> history;
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::vector<size_t> order(train_pairs.size());
    for (size_t k = 0; k < order.size(); ++k) order[k] = k;
    RngStream shuffle_rng(substream(tc.seed, "data", static_cast<uint64_t>(epoch)));
    for (size_t k = order.size() - 1; k > 0; --k) {
      const size_t r = static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<int64_t>(k)));
      std::swap(order[k], order[r]);
    }

    EpochStats stats;
    stats.epoch = epoch;
    double ssim_sum = 0.0;
    size_t ssim_count = 0;
    for (const size_t idx : order) {
      const SamplePair& pair = *train_pairs[idx];
      auto src = image_tensor<Real>(pair.subject);
      auto tmpl = image_tensor<Real>(pair.template_image);
      auto acts = unet_forward(model, src, tmpl, true, &dropout_rng);
      double step_mse = 0.0, step_ssim = 0.0;
      auto loss = detail::loss_node(acts.warped, tmpl, tc, sp, &step_mse, &step_ssim);
      ad::backward(loss);
      adam.step(model.tensors);
      ad::zero_grad(model.tensors);
      stats.train_loss += static_cast<double>(loss->values[0]);
      stats.train_mse += step_mse;
      if (!std::isnan(step_ssim)) {
        ssim_sum += step_ssim;
        ++ssim_count;
      } else {
        Image warped_img = tensor_image(*acts.warped, 0);
        ssim_sum += ssim(warped_img, pair.template_image, sp);
        ++ssim_count;
      }
    }
    const double n_steps = static_cast<double>(order.size());
    stats.train_loss /= n_steps;
    stats.train_mse /= n_steps;
    stats.train_ssim = ssim_sum / static_cast<double>(ssim_count);

    if (!val_pairs.empty()) {
      for (const auto* p : val_pairs) {
        auto out = forward_register(model, p->subject, p->template_image, false, nullptr);
        stats.val_mse += mse(out.warped, p->template_image);
        stats.val_ssim += ssim(out.warped, p->template_image, sp);
      }
      stats.val_mse /= static_cast<double>(val_pairs.size());
      stats.val_ssim /= static_cast<double>(val_pairs.size());
    }
    history.push_back(stats);
    if (tc.on_epoch) tc.on_epoch(stats);

    if (!tc.checkpoint_dir.empty() &&
        std::find(tc.checkpoint_epochs.begin(), tc.checkpoint_epochs.end(), epoch) !=
            tc.checkpoint_epochs.end()) {
      std::filesystem::create_directories(tc.checkpoint_dir);
      save_model(model, detail::checkpoint_path(tc.checkpoint_dir, epoch).string());
    }
  }
  return history;
}

// ---------------------------------------------------------------------------
// Activation dumps
// ---------------------------------------------------------------------------

/// Writes every recorded level's channels as normalized PGM tiles named
/// level_{n}_chan_{c}.pgm (n 1-based in forward order, c 0-based). Returns
/// the file count: sum of channel counts across dumped levels.
template <typename Real>
size_t dump_activations(const UNetModel<Real>& model, const Image& subject, const Image& templ,
                        const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto s = image_tensor<Real>(subject);
  auto t = image_tensor<Real>(templ);
  auto acts = unet_forward(model, s, t, false, nullptr);
  size_t count = 0;
  for (size_t lvl = 0; lvl < acts.level_outputs.size(); ++lvl) {
    const ad::Tensor<Real>& feat = *acts.level_outputs[lvl];
    for (int c = 0; c < feat.dim(2); ++c) {
      Image chan = normalize(tensor_image(feat, c));
      const std::string name =
          "level_" + std::to_string(lvl + 1) + "_chan_" + std::to_string(c) + ".pgm";
      save_pgm(chan, (out_dir / name).string());
      ++count;
    }
  }
  return count;
}

/// Channel total the dump produces for a config: encoder levels, bottleneck,
/// decoder levels.
inline size_t expected_activation_count(const UNetConfig& cfg) {
  size_t total = 0;
  for (int e = 0; e < cfg.depth; ++e) total += static_cast<size_t>(cfg.level_width(e));
  total += static_cast<size_t>(cfg.bottleneck_width());
  for (int d = cfg.depth - 1; d >= 0; --d) total += static_cast<size_t>(cfg.level_width(d));
  return total;
}

}  // namespace warpreg
