#pragma once

#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "thermofuse/metrics.hpp"
#include "thermofuse/sequence_io.hpp"
#include "thermofuse/train.hpp"

namespace thermofuse {

namespace detail {

inline std::string csv_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace detail

inline void write_metrics_json(const std::vector<MetricsReport>& reports,
                               const std::filesystem::path& path) {
  ordered_json j = ordered_json::array();
  for (const MetricsReport& r : reports) {
    ordered_json je;
    to_json(je, r);
    j.push_back(std::move(je));
  }
  auto f = detail::open_out(path);
  f << j.dump(2) << '\n';
  detail::finish_write(f, path);
}

inline std::vector<MetricsReport> read_metrics_json(const std::filesystem::path& path) {
  auto f = detail::open_in(path);
  const ordered_json j =
      ordered_json::parse(std::string(std::istreambuf_iterator<char>(f), {}), nullptr, false);
  if (j.is_discarded() || !j.is_array()) throw FormatError("bad metrics file: " + path.string());
  std::vector<MetricsReport> out;
  for (const auto& je : j) out.push_back(metrics_report_from_json(je));
  return out;
}

inline void write_curves_csv(const std::vector<MetricsReport>& reports,
                             const std::filesystem::path& path) {
  auto f = detail::open_out(path);
  f << "variant,epoch,train_loss,val_loss\n";
  for (const MetricsReport& r : reports)
    for (std::size_t e = 0; e < r.train_loss.size(); ++e)
      f << r.variant << ',' << e << ',' << detail::csv_double(r.train_loss[e]) << ','
        << detail::csv_double(e < r.val_loss.size() ? r.val_loss[e] : 0.0) << '\n';
  detail::finish_write(f, path);
}

// One row per variant, mirroring side-by-side model comparison tables.
inline void write_ablation_csv(const std::vector<MetricsReport>& reports,
                               const std::filesystem::path& path) {
  auto f = detail::open_out(path);
  f << "variant,head,miou,recall,precision,iou,mae_mm\n";
  for (const MetricsReport& r : reports) {
    f << r.variant << ',' << r.head << ',';
    if (r.head == "multiclass")
      f << detail::csv_double(r.miou) << ',' << detail::csv_double(r.recall) << ','
        << detail::csv_double(r.precision) << ",,";
    else
      f << ",,," << detail::csv_double(r.iou) << ',' << detail::csv_double(r.mae_mm);
    f << '\n';
  }
  detail::finish_write(f, path);
}

// Predicted masks as 8-bit PGM label images; depth maps as PFM floats (mm).
inline void write_predictions(const EvalResult& ev, const LoadedSplit& split,
                              const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (std::size_t i = 0; i < ev.stems.size(); ++i) {
    const LoadedSample& s = split.samples[i];
    std::vector<std::uint8_t> mask(ev.pred_masks[i].size());
    for (std::size_t px = 0; px < mask.size(); ++px)
      mask[px] = static_cast<std::uint8_t>(ev.pred_masks[i][px]);
    save_pgm(mask, s.gt.n_y, s.gt.n_x, dir / (ev.stems[i] + "_pred_mask.pgm"));
    if (!ev.pred_depths.empty())
      save_pfm(ev.pred_depths[i], s.gt.n_y, s.gt.n_x, dir / (ev.stems[i] + "_pred_depth.pfm"));
  }
}

inline void write_sweep_csv(const std::vector<SweepPoint>& points,
                            const std::filesystem::path& path) {
  auto f = detail::open_out(path);
  f << "lambda,iou,mae_mm\n";
  for (const SweepPoint& p : points)
    f << detail::csv_double(p.lambda) << ',' << detail::csv_double(p.iou) << ','
      << detail::csv_double(p.mae_mm) << '\n';
  detail::finish_write(f, path);
}

// Train, evaluate the best checkpoint on the test split, and write the full
// artifact set (checkpoint, metrics.json, curves.csv, predictions/) into
// cfg.out_dir. The one-stop entry behind the train CLI command.
inline std::pair<TrainResult, EvalResult> run_experiment(const RunConfig& cfg,
                                                         const LoadedDataset& ds) {
  TrainResult tr = train(cfg, ds);
  const RunCheckpoint best = load_run_checkpoint(tr.checkpoint_path);
  const LoadedSplit& held_out = ds.test.samples.empty() ? ds.val : ds.test;
  EvalResult ev = evaluate(best.model, held_out, cfg);
  // Merge loss curves into the evaluated report so one object carries both.
  ev.report.train_loss = tr.report.train_loss;
  ev.report.val_loss = tr.report.val_loss;
  tr.report = ev.report;

  namespace fs = std::filesystem;
  write_metrics_json({tr.report}, fs::path(cfg.out_dir) / "metrics.json");
  write_curves_csv({tr.report}, fs::path(cfg.out_dir) / "curves.csv");
  write_predictions(ev, held_out, fs::path(cfg.out_dir) / "predictions");
  return {std::move(tr), std::move(ev)};
}

}  // namespace thermofuse
