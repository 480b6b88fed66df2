#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "thermofuse/dataset.hpp"
#include "thermofuse/engine/optim.hpp"
#include "thermofuse/fusion_net.hpp"
#include "thermofuse/metrics.hpp"
#include "thermofuse/parallel.hpp"

namespace thermofuse {

// Full experiment description: where the augmented dataset lives, the model,
// the optimizer settings, and which fusion arm ("variant") to train. The
// variant decides the fusion mode and whether one modality is muted, so
// ablation arms differ from the main model by exactly one switch.
struct RunConfig {
  std::string data_dir;
  std::string out_dir;
  ModelConfig model;
  AugmentationConfig augment;  // train-time spatial draw ranges
  int batch_size = 8;
  int epochs = 100;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  std::vector<double> lambda_grid = {0.1, 0.25, 0.5, 0.75, 1.0};
  std::string variant = "fused";  // fused | concat | pca_only | tsr_only
  bool train_time_augment = true;

  void validate() const {
    if (data_dir.empty()) throw ConfigError("run: data_dir is required");
    if (out_dir.empty()) throw ConfigError("run: out_dir is required");
    if (batch_size < 1) throw ConfigError("run: batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("run: epochs must be >= 1");
    // lr 0 is allowed: a null update is well defined and useful in tests.
    if (!(lr >= 0.0)) throw ConfigError("run: lr must be >= 0");
    if (variant != "fused" && variant != "concat" && variant != "pca_only" &&
        variant != "tsr_only")
      throw ConfigError("run: unknown variant " + variant);
    if (lambda_grid.empty()) throw ConfigError("run: lambda grid must not be empty");
    ModelConfig effective = model;
    effective.fusion = variant == "concat" ? "concat" : "attention";
    effective.validate();
  }

  ModelConfig effective_model() const {
    ModelConfig m = model;
    m.fusion = variant == "concat" ? "concat" : "attention";
    return m;
  }

  bool zero_pca() const { return variant == "tsr_only"; }
  bool zero_tsr() const { return variant == "pca_only"; }
};

inline void to_json(ordered_json& j, const RunConfig& c) {
  j["data_dir"] = c.data_dir;
  j["out_dir"] = c.out_dir;
  j["model"] = ordered_json::object();
  to_json(j["model"], c.model);
  j["augment"] = ordered_json::object();
  to_json(j["augment"], c.augment);
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["lr"] = c.lr;
  j["seed"] = c.seed;
  j["lambda_grid"] = c.lambda_grid;
  j["variant"] = c.variant;
  j["train_time_augment"] = c.train_time_augment;
}

inline RunConfig run_config_from_json(const ordered_json& j) {
  RunConfig c;
  c.data_dir = j.at("data_dir").get<std::string>();
  c.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("model")) c.model = model_config_from_json(j["model"]);
  if (j.contains("augment")) c.augment = augmentation_config_from_json(j["augment"]);
  if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
  if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
  if (j.contains("lr")) c.lr = j["lr"].get<double>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("lambda_grid")) c.lambda_grid = j["lambda_grid"].get<std::vector<double>>();
  if (j.contains("variant")) c.variant = j["variant"].get<std::string>();
  if (j.contains("train_time_augment"))
    c.train_time_augment = j["train_time_augment"].get<bool>();
  c.validate();
  return c;
}

inline std::string config_digest(const RunConfig& cfg) {
  ordered_json j;
  to_json(j, cfg);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

namespace detail {

inline Tensor run_loss(const FusionNet& model, const Batch& batch) {
  const Predictions p = model.forward(batch.pca, batch.tsr);
  if (model.config().head == "multiclass") return loss_multiclass(p, batch.labels);
  return loss_binary_depth(p, batch.binary, batch.depth, model.config().lambda);
}

inline LoadedSample transformed_copy(const LoadedSample& s, const SpatialParams& params) {
  AugmentedSample tmp;
  tmp.pca = s.pca;
  tmp.tsr = s.tsr;
  tmp.gt = s.gt;
  AugmentedSample moved = spatial_transform(tmp, params);
  return LoadedSample{s.stem, std::move(moved.pca), std::move(moved.tsr), std::move(moved.gt)};
}

}  // namespace detail

struct TrainResult {
  RunConfig config;
  MetricsReport report;  // loss curves, seed, digest; metrics filled by evaluate()
  std::filesystem::path checkpoint_path;
  int best_epoch = -1;
};

inline void save_run_checkpoint(const FusionNet& model, const RunConfig& cfg, long step,
                                const std::filesystem::path& path) {
  ordered_json meta;
  meta["model"] = ordered_json::object();
  to_json(meta["model"], model.config());
  meta["run"] = ordered_json::object();
  to_json(meta["run"], cfg);
  save_checkpoint(model.parameters(), step, cfg.seed, path, meta);
}

struct RunCheckpoint {
  FusionNet model;
  RunConfig config;
  long step = 0;
};

inline RunCheckpoint load_run_checkpoint(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  if (!ck.meta.contains("model") || !ck.meta.contains("run"))
    throw FormatError("checkpoint lacks embedded run metadata: " + path.string());
  RunCheckpoint out{FusionNet(model_config_from_json(ck.meta["model"]), ck.seed),
                    run_config_from_json(ck.meta["run"]), ck.step};
  auto params = out.model.parameters();
  apply_checkpoint(ck, params);
  return out;
}

// Seeded, sequential training loop. Shuffling, per-batch spatial draws, and
// parameter updates all derive from (seed, epoch, batch), so a rerun with the
// same config reproduces every artifact byte.
inline TrainResult train(const RunConfig& cfg, const LoadedDataset& ds) {
  cfg.validate();
  if (ds.train.samples.empty()) throw ConfigError("train: no training samples");
  if (ds.pca_channels != cfg.model.pca_channels || ds.tsr_channels != cfg.model.tsr_channels)
    throw ConfigError("train: dataset channels (" + std::to_string(ds.pca_channels) + "/" +
                      std::to_string(ds.tsr_channels) + ") do not match the model config");
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);

  TrainResult result;
  result.config = cfg;
  result.checkpoint_path = fs::path(cfg.out_dir) / "best.ckpt";

  FusionNet model(cfg.effective_model(), cfg.seed);
  auto params = model.parameters();
  AdamState adam;
  adam.reset(params);

  const std::size_t n_train = ds.train.samples.size();
  std::vector<std::size_t> order(n_train);

  double best_val = std::numeric_limits<double>::infinity();

  auto split_loss = [&](const LoadedSplit& split) {
    // Forward-only pass, batched like training but without augmentation.
    long double total = 0.0L;
    std::size_t i = 0;
    while (i < split.samples.size()) {
      const std::size_t n = std::min<std::size_t>(cfg.batch_size, split.samples.size() - i);
      std::vector<const LoadedSample*> ptrs;
      for (std::size_t k = 0; k < n; ++k) ptrs.push_back(&split.samples[i + k]);
      const Batch batch = make_batch(ptrs, cfg.zero_pca(), cfg.zero_tsr());
      total += static_cast<long double>(detail::run_loss(model, batch).item()) * n;
      i += n;
    }
    return static_cast<double>(total / static_cast<long double>(split.samples.size()));
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, fnv1a64("shuffle"), static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
    shuffle_rng.shuffle(order);

    long double epoch_loss = 0.0L;
    std::size_t cursor = 0;
    int batch_index = 0;
    while (cursor < n_train) {
      const std::size_t n = std::min<std::size_t>(cfg.batch_size, n_train - cursor);
      std::vector<LoadedSample> holders;
      std::vector<const LoadedSample*> ptrs;
      if (cfg.train_time_augment) {
        Rng aug_rng(mix_seed(cfg.seed, fnv1a64("batch_aug"), static_cast<std::uint64_t>(epoch),
                             static_cast<std::uint64_t>(batch_index)));
        holders.reserve(n);
        for (std::size_t k = 0; k < n; ++k) {
          const SpatialParams draw = SpatialParams::draw(cfg.augment, aug_rng);
          holders.push_back(
              detail::transformed_copy(ds.train.samples[order[cursor + k]], draw));
        }
        for (const auto& h : holders) ptrs.push_back(&h);
      } else {
        for (std::size_t k = 0; k < n; ++k)
          ptrs.push_back(&ds.train.samples[order[cursor + k]]);
      }
      const Batch batch = make_batch(ptrs, cfg.zero_pca(), cfg.zero_tsr());
      Tensor loss = detail::run_loss(model, batch);
      epoch_loss += static_cast<long double>(loss.item()) * n;
      loss.backward();
      adam_step(params, adam, cfg.lr);
      cursor += n;
      ++batch_index;
    }
    result.report.train_loss.push_back(
        static_cast<double>(epoch_loss / static_cast<long double>(n_train)));

    const double val =
        ds.val.samples.empty() ? result.report.train_loss.back() : split_loss(ds.val);
    result.report.val_loss.push_back(val);
    if (val < best_val) {
      best_val = val;
      result.best_epoch = epoch;
      save_run_checkpoint(model, cfg, epoch, result.checkpoint_path);
    }
  }

  result.report.variant = cfg.variant;
  result.report.head = cfg.model.head;
  result.report.num_classes = cfg.model.head == "multiclass" ? cfg.model.num_classes : 0;
  result.report.seed = cfg.seed;
  result.report.config_digest = config_digest(cfg);
  return result;
}

// Per-sample predictions plus pooled metrics for one split.
struct EvalResult {
  MetricsReport report;                       // metric fields only
  std::vector<std::string> stems;             // order matches split
  std::vector<std::vector<int>> pred_masks;   // labels (multiclass) or 0/1
  std::vector<std::vector<float>> pred_depths;  // binary_depth only, mm
};

// Forward passes run one sample per task in parallel; weights are read-only.
// Counts are reduced in sample order afterwards, so results do not depend on
// the worker count.
inline EvalResult evaluate(const FusionNet& model, const LoadedSplit& split,
                           const RunConfig& cfg) {
  if (split.samples.empty()) throw ConfigError("evaluate: empty split");
  {
    ordered_json want, have;
    to_json(want, cfg.effective_model());
    to_json(have, model.config());
    if (want != have)
      throw ConfigError("evaluate: checkpoint model does not match the requested variant/config");
  }
  const bool multiclass = model.config().head == "multiclass";
  const int c_n = model.config().num_classes;
  const std::size_t n = split.samples.size();

  EvalResult out;
  out.stems.resize(n);
  out.pred_masks.resize(n);
  out.pred_depths.resize(multiclass ? 0 : n);
  std::vector<MulticlassCounts> mc(n, MulticlassCounts(c_n));
  std::vector<BinaryDepthCounts> bd(n);

  parallel_for(static_cast<std::int64_t>(n), [&](std::int64_t ti) {
    const std::size_t i = static_cast<std::size_t>(ti);
    const LoadedSample& s = split.samples[i];
    out.stems[i] = s.stem;
    const Batch batch = make_batch({&s}, cfg.zero_pca(), cfg.zero_tsr());
    const Predictions p = model.forward(batch.pca, batch.tsr);
    const std::size_t plane = static_cast<std::size_t>(s.gt.n_y) * s.gt.n_x;
    if (multiclass) {
      const auto& logits = p.class_logits.values();
      std::vector<int> pred(plane);
      for (std::size_t px = 0; px < plane; ++px) {
        int arg = 0;
        double best = logits[px];
        for (int c = 1; c < c_n; ++c) {
          const double v = logits[static_cast<std::size_t>(c) * plane + px];
          if (v > best) {
            best = v;
            arg = c;
          }
        }
        pred[px] = arg;
      }
      std::vector<int> gt(plane);
      for (std::size_t px = 0; px < plane; ++px) gt[px] = s.gt.class_mask[px];
      mc[i].add(pred, gt);
      out.pred_masks[i] = std::move(pred);
    } else {
      const auto& logits = p.binary_logits.values();
      const auto& depth = p.depth_mm.values();
      std::vector<int> pred(plane);
      std::vector<double> pred_depth(plane);
      for (std::size_t px = 0; px < plane; ++px) {
        pred[px] = logits[px] > 0.0 ? 1 : 0;  // sigmoid(z) > 0.5 iff z > 0
        pred_depth[px] = depth[px];
      }
      std::vector<double> gt_depth(plane);
      for (std::size_t px = 0; px < plane; ++px)
        gt_depth[px] = static_cast<double>(s.gt.depth_map[px]);
      bd[i].add(pred, pred_depth, batch.gt_mask, gt_depth);
      out.pred_masks[i] = std::move(pred);
      out.pred_depths[i].assign(depth.begin(), depth.end());
    }
  });

  out.report.variant = cfg.variant;
  out.report.head = model.config().head;
  out.report.seed = cfg.seed;
  out.report.config_digest = config_digest(cfg);
  if (multiclass) {
    MulticlassCounts pooled(c_n);
    for (const auto& c : mc)
      for (int k = 0; k < c_n; ++k) {
        pooled.per_class[static_cast<std::size_t>(k)].tp += c.per_class[static_cast<std::size_t>(k)].tp;
        pooled.per_class[static_cast<std::size_t>(k)].fp += c.per_class[static_cast<std::size_t>(k)].fp;
        pooled.per_class[static_cast<std::size_t>(k)].fn += c.per_class[static_cast<std::size_t>(k)].fn;
      }
    const MulticlassMetrics m = multiclass_from_counts(pooled);
    out.report.num_classes = c_n;
    out.report.class_iou = m.class_iou;
    out.report.absent_classes = m.absent_classes;
    out.report.miou = m.miou;
    out.report.recall = m.recall;
    out.report.precision = m.precision;
  } else {
    BinaryDepthCounts pooled;
    for (const auto& c : bd) {
      pooled.intersection += c.intersection;
      pooled.union_n += c.union_n;
      pooled.abs_err_sum_mm += c.abs_err_sum_mm;
      pooled.pixels += c.pixels;
    }
    const BinaryDepthMetrics m = binary_depth_from_counts(pooled);
    out.report.iou = m.iou;
    out.report.mae_mm = m.mae_mm;
  }
  out.report.validate();
  return out;
}

struct SweepPoint {
  double lambda = 0.0;
  double iou = 0.0, mae_mm = 0.0;
};

// One full training run per lambda, shared seed, evaluated on the test split.
inline std::vector<SweepPoint> sweep_lambda(const RunConfig& cfg, const LoadedDataset& ds,
                                            const std::vector<double>& grid) {
  if (cfg.model.head != "binary_depth")
    throw ConfigError("sweep_lambda: requires the binary_depth head");
  if (grid.empty()) throw ConfigError("sweep_lambda: empty grid");
  std::vector<SweepPoint> points;
  for (double lambda : grid) {
    RunConfig sub = cfg;
    sub.model.lambda = lambda;
    char tag[32];
    std::snprintf(tag, sizeof tag, "lambda_%g", lambda);
    sub.out_dir = (std::filesystem::path(cfg.out_dir) / tag).string();
    TrainResult tr = train(sub, ds);
    const RunCheckpoint best = load_run_checkpoint(tr.checkpoint_path);
    const EvalResult ev = evaluate(best.model, ds.test, sub);
    points.push_back({lambda, ev.report.iou, ev.report.mae_mm});
  }
  return points;
}

}  // namespace thermofuse
