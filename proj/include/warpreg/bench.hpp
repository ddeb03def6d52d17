#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "warpreg/dataset.hpp"
#include "warpreg/demons.hpp"
#include "warpreg/metrics.hpp"
#include "warpreg/unet.hpp"

namespace warpreg {

/// One timed registration run. `params` is a semicolon-joined key=value list
/// so the CSV stays a flat 8-column table.
struct BenchRecord {
  std::string method;
  std::string params;
  std::string pair_id;
  double wall_time_ms = 0.0;
  double ssim_before = 0.0;
  double ssim_after = 0.0;
  double mse_before = 0.0;
  double mse_after = 0.0;
};

namespace detail {

inline double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return std::string(buf);
}

struct RunningStats {
  int n = 0;
  double sum = 0.0;
  double sum_sq = 0.0;

  void add(double v) {
    ++n;
    sum += v;
    sum_sq += v * v;
  }
  double mean() const { return n > 0 ? sum / n : 0.0; }
  double stddev() const {
    if (n < 2) return 0.0;
    const double m = mean();
    const double var = (sum_sq - n * m * m) / (n - 1);
    return var > 0.0 ? std::sqrt(var) : 0.0;
  }
};

}  // namespace detail

inline std::string bench_csv(const std::vector<BenchRecord>& records) {
  std::ostringstream out;
  out << "method,params,pair_id,wall_time_ms,ssim_before,ssim_after,mse_before,mse_after\n";
  for (const BenchRecord& r : records) {
    out << r.method << ',' << r.params << ',' << r.pair_id << ','
        << detail::format_double(r.wall_time_ms) << ','
        << detail::format_double(r.ssim_before) << ','
        << detail::format_double(r.ssim_after) << ','
        << detail::format_double(r.mse_before) << ','
        << detail::format_double(r.mse_after) << '\n';
  }
  return out.str();
}

inline void write_bench_csv(const std::vector<BenchRecord>& records,
                            const std::filesystem::path& path) {
  atomic_write_file(path, bench_csv(records));
}

/// Per (method, params) aggregate, in first-seen order.
struct BenchSummaryRow {
  std::string method;
  std::string params;
  int runs = 0;
  double mean_ms = 0.0;
  double stddev_ms = 0.0;
  double mean_ssim_before = 0.0;
  double mean_ssim_after = 0.0;
  double mean_mse_before = 0.0;
  double mean_mse_after = 0.0;
};

inline std::vector<BenchSummaryRow> summarize_bench(const std::vector<BenchRecord>& records) {
  std::vector<BenchSummaryRow> rows;
  std::map<std::pair<std::string, std::string>, size_t> index;
  struct Acc {
    detail::RunningStats ms, sb, sa, mb, ma;
  };
  std::vector<Acc> accs;
  for (const BenchRecord& r : records) {
    const auto key = std::make_pair(r.method, r.params);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, rows.size()).first;
      rows.push_back(BenchSummaryRow{r.method, r.params, 0, 0, 0, 0, 0, 0, 0});
      accs.emplace_back();
    }
    Acc& a = accs[it->second];
    a.ms.add(r.wall_time_ms);
    a.sb.add(r.ssim_before);
    a.sa.add(r.ssim_after);
    a.mb.add(r.mse_before);
    a.ma.add(r.mse_after);
  }
  for (size_t i = 0; i < rows.size(); ++i) {
    rows[i].runs = accs[i].ms.n;
    rows[i].mean_ms = accs[i].ms.mean();
    rows[i].stddev_ms = accs[i].ms.stddev();
    rows[i].mean_ssim_before = accs[i].sb.mean();
    rows[i].mean_ssim_after = accs[i].sa.mean();
    rows[i].mean_mse_before = accs[i].mb.mean();
    rows[i].mean_mse_after = accs[i].ma.mean();
  }
  return rows;
}

inline std::string bench_summary_text(const std::vector<BenchRecord>& records) {
  std::ostringstream out;
  for (const BenchSummaryRow& row : summarize_bench(records)) {
    char line[512];
    std::snprintf(line, sizeof(line),
                  "%-8s %-24s runs=%-4d time=%.3f+-%.3f ms  ssim %.4f -> %.4f  mse %.6f -> %.6f",
                  row.method.c_str(), row.params.c_str(), row.runs, row.mean_ms, row.stddev_ms,
                  row.mean_ssim_before, row.mean_ssim_after, row.mean_mse_before,
                  row.mean_mse_after);
    out << line << '\n';
  }
  return out.str();
}

/// Times trained-model registration of each pair `repeats` times. One untimed
/// warm-up forward runs first so cold-start page faults do not land in the
/// first sample.
template <typename Real>
std::vector<BenchRecord> bench_inference(const UNetModel<Real>& model,
                                         const std::vector<SamplePair>& pairs, int repeats = 1) {
  if (pairs.empty()) throw ConfigError("bench_inference: no pairs");
  if (repeats < 1) throw ConfigError("bench_inference: repeats must be >= 1");
  std::ostringstream ps;
  ps << "input=" << model.config.input_size << ";depth=" << model.config.depth
     << ";width=" << model.config.base_width;
  const std::string params = ps.str();

  (void)forward_register(model, pairs.front().subject, pairs.front().template_image);

  std::vector<BenchRecord> records;
  records.reserve(pairs.size() * static_cast<size_t>(repeats));
  for (const SamplePair& pair : pairs) {
    BenchRecord base;
    base.method = "dnn";
    base.params = params;
    base.pair_id = pair.pair_id;
    base.ssim_before = ssim(pair.subject, pair.template_image);
    base.mse_before = mse(pair.subject, pair.template_image);
    for (int r = 0; r < repeats; ++r) {
      const double t0 = detail::now_ms();
      RegistrationOutput out = forward_register(model, pair.subject, pair.template_image);
      const double t1 = detail::now_ms();
      BenchRecord rec = base;
      rec.wall_time_ms = t1 - t0;
      rec.ssim_after = ssim(out.warped, pair.template_image);
      rec.mse_after = mse(out.warped, pair.template_image);
      records.push_back(std::move(rec));
    }
  }
  return records;
}

/// Times demons at every (iterations, levels) grid point over each pair.
/// Timed runs disable the per-iteration trace; one untimed warm-up run is
/// discarded first.
inline std::vector<BenchRecord> bench_demons_sweep(const std::vector<SamplePair>& pairs,
                                                   const std::vector<int>& iteration_grid,
                                                   const std::vector<int>& level_grid,
                                                   const DemonsConfig& base_config = {}) {
  if (pairs.empty()) throw ConfigError("bench_demons_sweep: no pairs");
  if (iteration_grid.empty() || level_grid.empty()) {
    throw ConfigError("bench_demons_sweep: empty parameter grid");
  }
  {
    DemonsConfig warm = base_config;
    warm.iterations = iteration_grid.front();
    warm.levels = level_grid.front();
    warm.record_trace = false;
    (void)register_demons(pairs.front().template_image, pairs.front().subject, warm);
  }

  std::vector<BenchRecord> records;
  for (int levels : level_grid) {
    for (int iterations : iteration_grid) {
      DemonsConfig config = base_config;
      config.iterations = iterations;
      config.levels = levels;
      config.record_trace = false;
      std::ostringstream ps;
      ps << "iters=" << iterations << ";levels=" << levels;
      for (const SamplePair& pair : pairs) {
        BenchRecord rec;
        rec.method = "demons";
        rec.params = ps.str();
        rec.pair_id = pair.pair_id;
        rec.ssim_before = ssim(pair.subject, pair.template_image);
        rec.mse_before = mse(pair.subject, pair.template_image);
        const double t0 = detail::now_ms();
        DemonsResult res = register_demons(pair.template_image, pair.subject, config);
        const double t1 = detail::now_ms();
        rec.wall_time_ms = t1 - t0;
        rec.ssim_after = ssim(res.warped, pair.template_image);
        rec.mse_after = mse(res.warped, pair.template_image);
        records.push_back(std::move(rec));
      }
    }
  }
  return records;
}

/// Demons grid point with the highest mean ssim_after among `records`.
inline BenchSummaryRow best_demons_row(const std::vector<BenchRecord>& records) {
  const std::vector<BenchSummaryRow> rows = summarize_bench(records);
  const BenchSummaryRow* best = nullptr;
  for (const BenchSummaryRow& row : rows) {
    if (row.method != "demons") continue;
    if (best == nullptr || row.mean_ssim_after > best->mean_ssim_after) best = &row;
  }
  if (best == nullptr) throw ConfigError("best_demons_row: no demons records");
  return *best;
}

struct SpeedRatio {
  std::string demons_params;
  double demons_mean_ms = 0.0;
  double dnn_mean_ms = 0.0;
  double ratio = 0.0;  ///< demons time / dnn time, larger means faster model
};

/// Compares mean model inference time against the best-quality demons setting.
inline SpeedRatio speed_ratio(const std::vector<BenchRecord>& demons_records,
                              const std::vector<BenchRecord>& dnn_records) {
  const BenchSummaryRow best = best_demons_row(demons_records);
  detail::RunningStats dnn;
  for (const BenchRecord& r : dnn_records) {
    if (r.method == "dnn") dnn.add(r.wall_time_ms);
  }
  if (dnn.n == 0) throw ConfigError("speed_ratio: no dnn records");
  SpeedRatio out;
  out.demons_params = best.params;
  out.demons_mean_ms = best.mean_ms;
  out.dnn_mean_ms = dnn.mean();
  out.ratio = out.dnn_mean_ms > 0.0 ? out.demons_mean_ms / out.dnn_mean_ms : 0.0;
  return out;
}

inline std::string history_csv(const std::vector<EpochStats>& history) {
  std::ostringstream out;
  out << "epoch,train_loss,train_mse,train_ssim,val_mse,val_ssim\n";
  for (const EpochStats& e : history) {
    out << e.epoch << ',' << detail::format_double(e.train_loss) << ','
        << detail::format_double(e.train_mse) << ',' << detail::format_double(e.train_ssim) << ','
        << detail::format_double(e.val_mse) << ',' << detail::format_double(e.val_ssim) << '\n';
  }
  return out.str();
}

struct AblationResult {
  LossMode mode = LossMode::msessim;
  std::vector<EpochStats> history;
};

/// Trains one model per loss mode from a shared initialization seed and writes
/// history_<mode>.csv per mode into out_dir.
template <typename Real>
std::vector<AblationResult> run_loss_ablation(const TrainingSet& data, const UNetConfig& net_config,
                                              const TrainConfig& base_config,
                                              const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const LossMode modes[] = {LossMode::msessim, LossMode::ssim_only, LossMode::mse_only};
  std::vector<AblationResult> results;
  for (LossMode mode : modes) {
    UNetModel<Real> model = build_unet<Real>(net_config, base_config.seed);
    TrainConfig tc = base_config;
    tc.loss_mode = mode;
    tc.checkpoint_epochs.clear();
    AblationResult res;
    res.mode = mode;
    res.history = train(model, data, tc);
    atomic_write_file(out_dir / (std::string("history_") + loss_mode_name(mode) + ".csv"),
                      history_csv(res.history));
    results.push_back(std::move(res));
  }
  return results;
}

struct ProgressionSnapshot {
  std::string checkpoint;
  double mean_ssim = 0.0;
  double mean_mse = 0.0;
};

/// Evaluates each checkpoint over `pairs`, writing the warped first pair and
/// its overlay per checkpoint plus a metrics summary.
template <typename Real = float>
std::vector<ProgressionSnapshot> snapshot_progression(
    const std::vector<std::filesystem::path>& checkpoints, const std::vector<SamplePair>& pairs,
    const std::filesystem::path& out_dir) {
  if (checkpoints.empty()) throw ConfigError("snapshot_progression: no checkpoints");
  if (pairs.empty()) throw ConfigError("snapshot_progression: no pairs");
  std::filesystem::create_directories(out_dir);

  std::vector<ProgressionSnapshot> snaps;
  std::ostringstream report;
  for (size_t c = 0; c < checkpoints.size(); ++c) {
    UNetModel<Real> model = load_model<Real>(checkpoints[c]);
    detail::RunningStats s, m;
    Image first_warped;
    for (size_t i = 0; i < pairs.size(); ++i) {
      RegistrationOutput out = forward_register(model, pairs[i].subject, pairs[i].template_image);
      s.add(ssim(out.warped, pairs[i].template_image));
      m.add(mse(out.warped, pairs[i].template_image));
      if (i == 0) first_warped = std::move(out.warped);
    }
    const std::string tag = "checkpoint_" + std::to_string(c + 1);
    save_pgm(first_warped, out_dir / (tag + "_warped.pgm"));
    write_overlay(first_warped, pairs.front().template_image, out_dir / (tag + "_overlay.ppm"));

    ProgressionSnapshot snap;
    snap.checkpoint = checkpoints[c].filename().string();
    snap.mean_ssim = s.mean();
    snap.mean_mse = m.mean();
    report << snap.checkpoint << " mean_ssim=" << detail::format_double(snap.mean_ssim)
           << " mean_mse=" << detail::format_double(snap.mean_mse) << '\n';
    snaps.push_back(std::move(snap));
  }
  atomic_write_file(out_dir / "progression.txt", report.str());
  return snaps;
}

}  // namespace warpreg
