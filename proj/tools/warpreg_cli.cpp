// Command-line front end for the registration toolkit. Every pipeline is
// reachable from here; all outputs are written atomically.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "warpreg/warpreg.hpp"

namespace fs = std::filesystem;
using namespace warpreg;

namespace {

struct CommonFlags {
  uint64_t seed = 0;
  int threads = 1;
};

// Registration pipelines run single-threaded; --threads is an upper cap kept
// for interface stability.
void add_common(CLI::App* cmd, CommonFlags* common) {
  cmd->add_option("--seed", common->seed, "root RNG seed; all randomness derives from it");
  cmd->add_option("--threads", common->threads, "cap on internal parallelism")
      ->check(CLI::PositiveNumber);
  cmd->set_config("--config", "", "key=value file with defaults; explicit flags win");
}

std::string trim_copy(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// CLI11 only processes a config option attached to the root app, so the
// per-subcommand --config file is expanded into ordinary flags before parsing.
// Keys already present on the command line are skipped: explicit flags win.
std::vector<std::string> expand_config_args(std::vector<std::string> args) {
  const auto has_flag = [&args](const std::string& flag) {
    return std::any_of(args.begin(), args.end(), [&flag](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
  };
  size_t i = 0;
  while (i < args.size()) {
    std::string file;
    if (args[i] == "--config" && i + 1 < args.size()) {
      file = args[i + 1];
      args.erase(args.begin() + i, args.begin() + i + 2);
    } else if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
      args.erase(args.begin() + i);
    } else {
      ++i;
      continue;
    }
    std::ifstream in(file);
    if (!in) throw CLI::FileError::Missing(file);
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
      line = trim_copy(line);
      if (line.empty() || line[0] == '#' || line[0] == ';') continue;
      const auto eq = line.find('=');
      const std::string key = eq == std::string::npos ? "" : trim_copy(line.substr(0, eq));
      if (key.empty()) {
        throw CLI::ConfigError(file + ":" + std::to_string(lineno) +
                               ": expected key=value, got \"" + line + "\"");
      }
      std::string value = trim_copy(line.substr(eq + 1));
      if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') &&
          value.back() == value.front()) {
        value = value.substr(1, value.size() - 2);
      }
      const std::string flag = "--" + key;
      if (!has_flag(flag)) args.push_back(flag + "=" + value);
    }
  }
  return args;
}

std::string metrics_line(const Image& before, const Image& after, const Image& target) {
  std::ostringstream out;
  out << "ssim " << ssim(before, target) << " -> " << ssim(after, target) << "  mse "
      << mse(before, target) << " -> " << mse(after, target);
  return out.str();
}

std::string epoch_line(const EpochStats& e) {
  std::ostringstream out;
  out << "epoch " << e.epoch << "  train_loss " << e.train_loss << "  train_mse " << e.train_mse
      << "  train_ssim " << e.train_ssim << "  val_mse " << e.val_mse << "  val_ssim "
      << e.val_ssim;
  return out.str();
}

std::vector<SamplePair> select_split(const TrainingSet& set, const std::string& split) {
  if (split == "train") return set.train;
  if (split == "val") return set.validation;
  if (split == "all") {
    std::vector<SamplePair> pairs = set.train;
    pairs.insert(pairs.end(), set.validation.begin(), set.validation.end());
    return pairs;
  }
  throw ConfigError("unknown split: " + split + " (expected train, val, or all)");
}

struct TrainFlags {
  CommonFlags common;
  std::string data;
  std::string out_dir;
  std::string preset = "desk";
  std::string loss = "msessim";
  int input_size = 0;
  int depth = 0;
  int width = 0;
  int epochs = 0;
  double lr = 0.0;
  double alpha = -1.0;
  double beta = -1.0;
  double validation_fraction = 0.0;
  std::vector<int> checkpoint_epochs;
  bool quiet = false;
};

// Preset expands first; any explicitly passed flag overrides it.
UNetConfig net_config_from(const TrainFlags& f) {
  UNetConfig cfg = f.preset == "paper" ? UNetConfig::paper() : UNetConfig::desk();
  if (f.input_size > 0) cfg.input_size = f.input_size;
  if (f.depth > 0) cfg.depth = f.depth;
  if (f.width > 0) cfg.base_width = f.width;
  cfg.validate();
  return cfg;
}

TrainConfig train_config_from(const TrainFlags& f) {
  TrainConfig tc;
  tc.epochs = f.preset == "paper" ? 100 : 30;
  if (f.epochs > 0) tc.epochs = f.epochs;
  if (f.lr > 0.0) tc.lr = f.lr;
  if (f.alpha >= 0.0) tc.alpha = f.alpha;
  if (f.beta >= 0.0) tc.beta = f.beta;
  if (f.validation_fraction > 0.0) tc.validation_fraction = f.validation_fraction;
  tc.loss_mode = parse_loss_mode(f.loss);
  tc.seed = f.common.seed;
  tc.checkpoint_epochs = f.checkpoint_epochs;
  tc.validate();
  return tc;
}

void add_net_flags(CLI::App* cmd, TrainFlags* f) {
  cmd->add_option("--preset", f->preset, "configuration bundle: desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--input-size", f->input_size, "square input edge length")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--depth", f->depth, "encoder levels")->check(CLI::PositiveNumber);
  cmd->add_option("--width", f->width, "channels at the first level")
      ->check(CLI::PositiveNumber);
}

void add_train_flags(CLI::App* cmd, TrainFlags* f) {
  add_net_flags(cmd, f);
  cmd->add_option("--epochs", f->epochs, "training epochs")->check(CLI::PositiveNumber);
  cmd->add_option("--lr", f->lr, "Adam learning rate")->check(CLI::PositiveNumber);
  cmd->add_option("--loss", f->loss, "loss mode")
      ->check(CLI::IsMember({"msessim", "ssim_only", "mse_only"}));
  cmd->add_option("--alpha", f->alpha, "MSE weight in the combined loss")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--beta", f->beta, "SSIM weight in the combined loss")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--validation-fraction", f->validation_fraction,
                  "held-out fraction when the manifest has no val rows")
      ->check(CLI::Range(1e-6, 0.999));
}

int run(int argc, char** argv) {
  CLI::App app{"2D image registration toolkit: learned dense warps plus classical baselines"};
  app.require_subcommand(1);
  app.footer("Run any subcommand with --help for its flags.");

  // ---- make-dataset ----
  struct {
    CommonFlags common;
    std::string out;
    std::string source_dir;
    int images = 40;
    int warps = 5;
    int size = 64;
  } md;
  CLI::App* make_ds = app.add_subcommand(
      "make-dataset", "generate phantom pairs with known warps and write a manifest");
  make_ds->add_option("--out", md.out, "output directory")->required();
  make_ds->add_option("--images", md.images, "number of base images")->check(CLI::Range(2, 100000));
  make_ds->add_option("--warps", md.warps, "warps per base image")->check(CLI::PositiveNumber);
  make_ds->add_option("--size", md.size, "square image edge length")->check(CLI::Range(16, 8192));
  make_ds->add_option("--source-dir", md.source_dir,
                      "directory of PGM images to warp instead of generated phantoms")
      ->check(CLI::ExistingDirectory);
  add_common(make_ds, &md.common);
  make_ds->callback([&]() {
    fs::path manifest;
    if (!md.source_dir.empty()) {
      const std::vector<Image> sources = load_image_dir(md.source_dir);
      TrainingSet set = generate_training_set(static_cast<int>(sources.size()), md.warps, md.size,
                                              md.common.seed, &sources);
      manifest = write_dataset(set, md.out);
    } else {
      manifest = make_dataset(md.images, md.warps, md.size, md.common.seed, md.out);
    }
    std::cout << manifest.string() << '\n';
  });

  // ---- warp ----
  CLI::App* warp_cmd = app.add_subcommand("warp", "create, apply, and invert warp fields");
  warp_cmd->require_subcommand(1);

  struct {
    CommonFlags common;
    std::string input, field, out;
  } wa;
  CLI::App* warp_apply = warp_cmd->add_subcommand("apply", "warp an image with a stored field");
  warp_apply->add_option("--input", wa.input, "source PGM")->required()->check(CLI::ExistingFile);
  warp_apply->add_option("--field", wa.field, "warp field file")
      ->required()
      ->check(CLI::ExistingFile);
  warp_apply->add_option("--out", wa.out, "output PGM")->required();
  add_common(warp_apply, &wa.common);
  warp_apply->callback([&]() {
    const Image img = load_pgm(wa.input);
    const WarpField field = load_field(wa.field);
    save_pgm(apply(field, img), wa.out);
  });

  struct {
    CommonFlags common;
    std::string out;
    std::string kind = "mixed";
    int size = 64;
    double amplitude = 3.0;
  } wr;
  CLI::App* warp_random = warp_cmd->add_subcommand("random", "sample a random smooth warp field");
  warp_random->add_option("--out", wr.out, "output field file")->required();
  warp_random->add_option("--size", wr.size, "square field edge length")
      ->check(CLI::Range(8, 8192));
  warp_random->add_option("--amplitude", wr.amplitude, "peak displacement in pixels")
      ->check(CLI::PositiveNumber);
  warp_random->add_option("--kind", wr.kind, "field family")
      ->check(CLI::IsMember({"linear", "spherical", "sinusoidal", "mixed"}));
  add_common(warp_random, &wr.common);
  warp_random->callback([&]() {
    WarpSpec spec;
    spec.kind = parse_warp_kind(wr.kind);
    spec.amplitude = wr.amplitude;
    spec.seed = wr.common.seed;
    save_field(gen_field(spec, wr.size), wr.out);
  });

  struct {
    CommonFlags common;
    std::string field, out;
    int iterations = 20;
  } wi;
  CLI::App* warp_invert = warp_cmd->add_subcommand("invert", "numerically invert a warp field");
  warp_invert->add_option("--field", wi.field, "input field file")
      ->required()
      ->check(CLI::ExistingFile);
  warp_invert->add_option("--out", wi.out, "output field file")->required();
  warp_invert->add_option("--iterations", wi.iterations, "fixed-point iterations")
      ->check(CLI::PositiveNumber);
  add_common(warp_invert, &wi.common);
  warp_invert->callback(
      [&]() { save_field(invert(load_field(wi.field), wi.iterations), wi.out); });

  // ---- register ----
  CLI::App* reg_cmd = app.add_subcommand("register", "classical registration baselines");
  reg_cmd->require_subcommand(1);

  struct {
    CommonFlags common;
    std::string subject, templ, out_shifted;
    bool hann = false;
  } rp;
  CLI::App* reg_phase =
      reg_cmd->add_subcommand("phase", "estimate integer translation by phase correlation");
  reg_phase->add_option("--subject", rp.subject, "image to align")
      ->required()
      ->check(CLI::ExistingFile);
  reg_phase->add_option("--template", rp.templ, "reference image")
      ->required()
      ->check(CLI::ExistingFile);
  reg_phase->add_flag("--hann", rp.hann, "apply a Hann window before the transform");
  reg_phase->add_option("--out-shifted", rp.out_shifted,
                        "write the template circularly shifted by the estimate");
  add_common(reg_phase, &rp.common);
  reg_phase->callback([&]() {
    const Image subject = load_pgm(rp.subject);
    const Image templ = load_pgm(rp.templ);
    const Shift shift = phase_correlate(subject, templ, 1e-12, rp.hann);
    std::cout << shift.di << ' ' << shift.dj << ' ' << shift.peak_response << '\n';
    if (!rp.out_shifted.empty()) {
      save_pgm(apply_circular_shift(templ, shift.di, shift.dj), rp.out_shifted);
    }
  });

  struct {
    CommonFlags common;
    std::string subject, templ, out_warped, out_field, overlay, trace;
    DemonsConfig config;
  } rd;
  CLI::App* reg_demons =
      reg_cmd->add_subcommand("demons", "multi-resolution diffeomorphic demons");
  reg_demons->add_option("--subject", rd.subject, "image to align (moving)")
      ->required()
      ->check(CLI::ExistingFile);
  reg_demons->add_option("--template", rd.templ, "reference image (fixed)")
      ->required()
      ->check(CLI::ExistingFile);
  reg_demons->add_option("--iterations", rd.config.iterations, "iterations per pyramid level")
      ->check(CLI::PositiveNumber);
  reg_demons->add_option("--levels", rd.config.levels, "pyramid levels")
      ->check(CLI::PositiveNumber);
  reg_demons->add_option("--smoothing-sigma", rd.config.smoothing_sigma,
                         "field regularization strength");
  reg_demons->add_option("--update-sigma", rd.config.update_sigma, "update smoothing strength");
  reg_demons->add_option("--max-step", rd.config.max_step, "per-iteration displacement cap")
      ->check(CLI::PositiveNumber);
  reg_demons->add_option("--out-warped", rd.out_warped, "write the aligned subject PGM");
  reg_demons->add_option("--out-field", rd.out_field, "write the recovered warp field");
  reg_demons->add_option("--overlay", rd.overlay, "write a warped/template overlay PPM");
  reg_demons->add_option("--trace", rd.trace, "write per-iteration metrics CSV");
  add_common(reg_demons, &rd.common);
  reg_demons->callback([&]() {
    const Image subject = load_pgm(rd.subject);
    const Image templ = load_pgm(rd.templ);
    rd.config.record_trace = !rd.trace.empty();
    const DemonsResult res = register_demons(templ, subject, rd.config);
    if (!rd.out_warped.empty()) save_pgm(res.warped, rd.out_warped);
    if (!rd.out_field.empty()) save_field(res.field, rd.out_field);
    if (!rd.overlay.empty()) write_overlay(res.warped, templ, rd.overlay);
    if (!rd.trace.empty()) {
      std::ostringstream csv;
      csv << "level,iteration,mse,ssim\n";
      for (const DemonsIterationStats& s : res.trace) {
        csv << s.level << ',' << s.iteration << ',' << s.mse_value << ',' << s.ssim_value << '\n';
      }
      atomic_write_file(rd.trace, csv.str());
    }
    std::cout << metrics_line(subject, res.warped, templ) << '\n';
  });

  // ---- train ----
  TrainFlags tf;
  CLI::App* train_cmd = app.add_subcommand("train", "fit the registration network on a dataset");
  train_cmd->add_option("--data", tf.data, "dataset manifest")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--out-dir", tf.out_dir, "directory for model, history, checkpoints")
      ->required();
  train_cmd
      ->add_option("--checkpoint-epochs", tf.checkpoint_epochs,
                   "comma-separated epochs to snapshot")
      ->delimiter(',');
  train_cmd->add_flag("--quiet", tf.quiet, "suppress per-epoch progress lines");
  add_train_flags(train_cmd, &tf);
  add_common(train_cmd, &tf.common);
  train_cmd->callback([&]() {
    const TrainingSet data = load_dataset(tf.data);
    const UNetConfig net_cfg = net_config_from(tf);
    TrainConfig tc = train_config_from(tf);
    tc.checkpoint_dir = tf.out_dir;
    if (!tf.quiet) {
      tc.on_epoch = [](const EpochStats& e) { std::cout << epoch_line(e) << std::endl; };
    }
    UNetModel<float> model = build_unet<float>(net_cfg, tc.seed);
    const std::vector<EpochStats> history = train(model, data, tc);
    fs::create_directories(tf.out_dir);
    const fs::path model_path = fs::path(tf.out_dir) / "model.unt1";
    save_model(model, model_path.string());
    atomic_write_file(fs::path(tf.out_dir) / "history.csv", history_csv(history));
    std::cout << model_path.string() << '\n';
  });

  // ---- infer ----
  struct {
    CommonFlags common;
    std::string model, subject, templ, out_warped, out_field, overlay;
  } inf;
  CLI::App* infer_cmd =
      app.add_subcommand("infer", "register one pair with a trained model");
  infer_cmd->add_option("--model", inf.model, "model file")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--subject", inf.subject, "image to align")
      ->required()
      ->check(CLI::ExistingFile);
  infer_cmd->add_option("--template", inf.templ, "reference image")
      ->required()
      ->check(CLI::ExistingFile);
  infer_cmd->add_option("--out-warped", inf.out_warped, "write the aligned subject PGM");
  infer_cmd->add_option("--out-field", inf.out_field, "write the predicted warp field");
  infer_cmd->add_option("--overlay", inf.overlay, "write a warped/template overlay PPM");
  add_common(infer_cmd, &inf.common);
  infer_cmd->callback([&]() {
    const UNetModel<float> model = load_model<float>(inf.model);
    const Image subject = load_pgm(inf.subject);
    const Image templ = load_pgm(inf.templ);
    const RegistrationOutput out = forward_register(model, subject, templ);
    if (!inf.out_warped.empty()) save_pgm(out.warped, inf.out_warped);
    if (!inf.out_field.empty()) save_field(out.field, inf.out_field);
    if (!inf.overlay.empty()) write_overlay(out.warped, templ, inf.overlay);
    std::cout << metrics_line(subject, out.warped, templ) << '\n';
  });

  // ---- inspect ----
  struct {
    CommonFlags common;
    std::string model, subject, templ, out_dir;
  } insp;
  CLI::App* inspect_cmd =
      app.add_subcommand("inspect", "dump every intermediate activation channel as a PGM");
  inspect_cmd->add_option("--model", insp.model, "model file")
      ->required()
      ->check(CLI::ExistingFile);
  inspect_cmd->add_option("--subject", insp.subject, "image to align")
      ->required()
      ->check(CLI::ExistingFile);
  inspect_cmd->add_option("--template", insp.templ, "reference image")
      ->required()
      ->check(CLI::ExistingFile);
  inspect_cmd->add_option("--out-dir", insp.out_dir, "directory for channel images")->required();
  add_common(inspect_cmd, &insp.common);
  inspect_cmd->callback([&]() {
    const UNetModel<float> model = load_model<float>(insp.model);
    const Image subject = load_pgm(insp.subject);
    const Image templ = load_pgm(insp.templ);
    const size_t n = dump_activations(model, subject, templ, insp.out_dir);
    std::cout << n << " channel images written to " << insp.out_dir << '\n';
  });

  // ---- bench ----
  CLI::App* bench_cmd = app.add_subcommand("bench", "timing and quality experiments");
  bench_cmd->require_subcommand(1);

  struct {
    CommonFlags common;
    std::string model, data, out;
    std::string split = "val";
    int repeats = 10;
  } bi;
  CLI::App* bench_inf =
      bench_cmd->add_subcommand("inference", "time trained-model registration over a pair set");
  bench_inf->add_option("--model", bi.model, "model file")->required()->check(CLI::ExistingFile);
  bench_inf->add_option("--data", bi.data, "dataset manifest")
      ->required()
      ->check(CLI::ExistingFile);
  bench_inf->add_option("--out", bi.out, "records CSV path")->required();
  bench_inf->add_option("--split", bi.split, "pair subset: train, val, or all")
      ->check(CLI::IsMember({"train", "val", "all"}));
  bench_inf->add_option("--repeats", bi.repeats, "timed runs per pair")
      ->check(CLI::PositiveNumber);
  add_common(bench_inf, &bi.common);
  bench_inf->callback([&]() {
    const UNetModel<float> model = load_model<float>(bi.model);
    const std::vector<SamplePair> pairs = select_split(load_dataset(bi.data), bi.split);
    const std::vector<BenchRecord> records = bench_inference(model, pairs, bi.repeats);
    write_bench_csv(records, bi.out);
    std::cout << bench_summary_text(records);
  });

  struct {
    CommonFlags common;
    std::string data, out;
    std::string split = "val";
    std::vector<int> iters{10, 20, 40, 80};
    std::vector<int> levels{1, 2, 3};
    DemonsConfig config;
  } bd;
  CLI::App* bench_demons_cmd =
      bench_cmd->add_subcommand("demons", "sweep demons settings over a pair set");
  bench_demons_cmd->add_option("--data", bd.data, "dataset manifest")
      ->required()
      ->check(CLI::ExistingFile);
  bench_demons_cmd->add_option("--out", bd.out, "records CSV path")->required();
  bench_demons_cmd->add_option("--split", bd.split, "pair subset: train, val, or all")
      ->check(CLI::IsMember({"train", "val", "all"}));
  bench_demons_cmd->add_option("--iters", bd.iters, "comma-separated iteration grid")
      ->delimiter(',');
  bench_demons_cmd->add_option("--levels", bd.levels, "comma-separated level grid")
      ->delimiter(',');
  bench_demons_cmd->add_option("--smoothing-sigma", bd.config.smoothing_sigma,
                               "field regularization strength");
  bench_demons_cmd->add_option("--update-sigma", bd.config.update_sigma,
                               "update smoothing strength");
  bench_demons_cmd->add_option("--max-step", bd.config.max_step,
                               "per-iteration displacement cap")
      ->check(CLI::PositiveNumber);
  add_common(bench_demons_cmd, &bd.common);
  bench_demons_cmd->callback([&]() {
    const std::vector<SamplePair> pairs = select_split(load_dataset(bd.data), bd.split);
    const std::vector<BenchRecord> records =
        bench_demons_sweep(pairs, bd.iters, bd.levels, bd.config);
    write_bench_csv(records, bd.out);
    std::cout << bench_summary_text(records);
    const BenchSummaryRow best = best_demons_row(records);
    std::cout << "best " << best.params << " mean_ssim_after=" << best.mean_ssim_after
              << " mean_time_ms=" << best.mean_ms << '\n';
  });

  TrainFlags af;
  CLI::App* bench_ablation = bench_cmd->add_subcommand(
      "ablation", "train one model per loss mode from a shared initialization");
  bench_ablation->add_option("--data", af.data, "dataset manifest")
      ->required()
      ->check(CLI::ExistingFile);
  bench_ablation->add_option("--out-dir", af.out_dir, "directory for per-mode history CSVs")
      ->required();
  add_train_flags(bench_ablation, &af);
  add_common(bench_ablation, &af.common);
  bench_ablation->callback([&]() {
    const TrainingSet data = load_dataset(af.data);
    const std::vector<AblationResult> results =
        run_loss_ablation<float>(data, net_config_from(af), train_config_from(af), af.out_dir);
    for (const AblationResult& r : results) {
      const EpochStats& last = r.history.back();
      std::cout << loss_mode_name(r.mode) << "  final val_ssim " << last.val_ssim
                << "  final val_mse " << last.val_mse << '\n';
    }
  });

  struct {
    CommonFlags common;
    std::vector<std::string> checkpoints;
    std::string data, out_dir;
    std::string split = "val";
  } bp;
  CLI::App* bench_prog = bench_cmd->add_subcommand(
      "progression", "compare checkpoints of one training run on a pair set");
  bench_prog->add_option("--checkpoints", bp.checkpoints, "comma-separated model files")
      ->required()
      ->delimiter(',');
  bench_prog->add_option("--data", bp.data, "dataset manifest")
      ->required()
      ->check(CLI::ExistingFile);
  bench_prog->add_option("--out-dir", bp.out_dir, "directory for snapshots and metrics")
      ->required();
  bench_prog->add_option("--split", bp.split, "pair subset: train, val, or all")
      ->check(CLI::IsMember({"train", "val", "all"}));
  add_common(bench_prog, &bp.common);
  bench_prog->callback([&]() {
    std::vector<fs::path> paths(bp.checkpoints.begin(), bp.checkpoints.end());
    const std::vector<SamplePair> pairs = select_split(load_dataset(bp.data), bp.split);
    for (const ProgressionSnapshot& s : snapshot_progression<float>(paths, pairs, bp.out_dir)) {
      std::cout << s.checkpoint << "  mean_ssim " << s.mean_ssim << "  mean_mse " << s.mean_mse
                << '\n';
    }
  });

  if (argc <= 1) {
    std::cerr << app.help();
    return 1;
  }
  app.name(fs::path(argv[0]).filename().string());
  try {
    std::vector<std::string> args = expand_config_args({argv + 1, argv + argc});
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
