#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "thermofuse/augment.hpp"
#include "thermofuse/engine/tensor.hpp"
#include "thermofuse/errors.hpp"
#include "thermofuse/modality_io.hpp"

namespace thermofuse {

// In-memory view of one augmented-dataset split. Samples keep the order of
// the manifest, which the augmentation stage emits deterministically.

struct LoadedSample {
  std::string stem;
  PcaTensor pca;
  TsrTensor tsr;
  GroundTruth gt;
};

struct LoadedSplit {
  std::vector<LoadedSample> samples;
};

struct LoadedDataset {
  LoadedSplit train, val, test;
  AugmentationConfig aug;
  int pca_channels = 0, tsr_channels = 0;
  int n_y = 0, n_x = 0;

  const LoadedSplit& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw ConfigError("unknown split: " + name);
  }
};

inline LoadedDataset load_augmented_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = dir / "manifest.json";
  auto f = detail::open_in(manifest_path);
  const ordered_json manifest =
      ordered_json::parse(std::string(std::istreambuf_iterator<char>(f), {}), nullptr, false);
  if (manifest.is_discarded() || !manifest.is_object() || !manifest.contains("samples"))
    throw FormatError("bad dataset manifest: " + manifest_path.string());

  LoadedDataset ds;
  if (manifest.contains("config"))
    ds.aug = augmentation_config_from_json(manifest["config"]);

  for (const auto& je : manifest["samples"]) {
    const std::string split = je.at("split").get<std::string>();
    const std::string stem = je.at("stem").get<std::string>();
    const fs::path base = dir / split;
    LoadedSample s;
    s.stem = stem;
    s.pca = load_pca(base / (stem + "_pca.ptm"));
    s.tsr = load_tsr(base / (stem + "_tsr.ptm"));
    s.gt = load_ground_truth(base / (stem + "_mask.pgm"), base / (stem + "_depth.pfm"),
                             base / (stem + "_classes.json"));
    if (s.pca.n_y != s.gt.n_y || s.pca.n_x != s.gt.n_x || s.tsr.n_y != s.gt.n_y ||
        s.tsr.n_x != s.gt.n_x)
      throw ShapeError("dataset: modality/truth dimensions disagree for " + stem);
    if (ds.pca_channels == 0) {
      ds.pca_channels = s.pca.channels_n;
      ds.tsr_channels = s.tsr.channels_n();
      ds.n_y = s.gt.n_y;
      ds.n_x = s.gt.n_x;
    } else if (s.pca.channels_n != ds.pca_channels || s.tsr.channels_n() != ds.tsr_channels ||
               s.gt.n_y != ds.n_y || s.gt.n_x != ds.n_x) {
      throw ShapeError("dataset: sample " + stem + " disagrees with the dataset geometry");
    }
    auto& dst = split == "train" ? ds.train : split == "val" ? ds.val : ds.test;
    if (split != "train" && split != "val" && split != "test")
      throw FormatError("dataset: unknown split tag " + split);
    dst.samples.push_back(std::move(s));
  }
  if (ds.train.samples.empty()) throw ConfigError("dataset: train split is empty");
  return ds;
}

// One model-ready mini batch. Single-modality ablations zero the excluded
// branch's input after normalization, so that branch carries no signal.
struct Batch {
  Tensor pca, tsr;
  std::vector<int> labels;     // multiclass targets, B*H*W
  std::vector<double> binary;  // defect-vs-background targets
  std::vector<double> depth;   // depth targets in mm
  std::vector<int> gt_mask;    // binary ground truth for metrics
};

// Standardize one channel plane over its own pixels. Component magnitudes
// scale with the number of retained frames, so sequences compressed from
// different temporal windows land on wildly different ranges; normalizing
// each sample against itself removes that dependence while keeping the
// spatial contrast the heads actually consume. Near-constant planes pass
// through centered but unscaled.
inline void standardize_plane(const double* src, double* dst, std::size_t n) {
  long double sum = 0.0L, sq = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    sum += src[i];
    sq += static_cast<long double>(src[i]) * src[i];
  }
  const double mu = static_cast<double>(sum / static_cast<long double>(n));
  const double var = static_cast<double>(sq / static_cast<long double>(n)) - mu * mu;
  double sd = std::sqrt(std::max(var, 0.0));
  if (sd < 1e-12) sd = 1.0;
  for (std::size_t i = 0; i < n; ++i) dst[i] = (src[i] - mu) / sd;
}

inline Batch make_batch(const std::vector<const LoadedSample*>& samples, bool zero_pca = false,
                        bool zero_tsr = false) {
  if (samples.empty()) throw ConfigError("make_batch: empty batch");
  const int b_n = static_cast<int>(samples.size());
  const int h = samples[0]->gt.n_y, w = samples[0]->gt.n_x;
  const int pca_n = samples[0]->pca.channels_n, tsr_n = samples[0]->tsr.channels_n();
  const std::size_t plane = static_cast<std::size_t>(h) * w;

  Batch out;
  std::vector<double> pv(static_cast<std::size_t>(b_n) * pca_n * plane);
  std::vector<double> tv(static_cast<std::size_t>(b_n) * tsr_n * plane);
  out.labels.resize(static_cast<std::size_t>(b_n) * plane);
  out.binary.resize(static_cast<std::size_t>(b_n) * plane);
  out.depth.resize(static_cast<std::size_t>(b_n) * plane);
  out.gt_mask.resize(static_cast<std::size_t>(b_n) * plane);

  for (int b = 0; b < b_n; ++b) {
    const LoadedSample& s = *samples[static_cast<std::size_t>(b)];
    if (s.gt.n_y != h || s.gt.n_x != w || s.pca.channels_n != pca_n || s.tsr.channels_n() != tsr_n)
      throw ShapeError("make_batch: sample " + s.stem + " has mismatched geometry");
    for (int c = 0; c < pca_n; ++c) {
      const double* src = s.pca.channels.data() + static_cast<std::size_t>(c) * plane;
      double* dst = pv.data() + (static_cast<std::size_t>(b) * pca_n + c) * plane;
      if (zero_pca)
        std::fill_n(dst, plane, 0.0);
      else
        standardize_plane(src, dst, plane);
    }
    for (int c = 0; c < tsr_n; ++c) {
      const double* src = s.tsr.channels.data() + static_cast<std::size_t>(c) * plane;
      double* dst = tv.data() + (static_cast<std::size_t>(b) * tsr_n + c) * plane;
      if (zero_tsr)
        std::fill_n(dst, plane, 0.0);
      else
        standardize_plane(src, dst, plane);
    }
    for (std::size_t i = 0; i < plane; ++i) {
      const int label = s.gt.class_mask[i];
      const std::size_t o = static_cast<std::size_t>(b) * plane + i;
      out.labels[o] = label;
      out.binary[o] = label != 0 ? 1.0 : 0.0;
      out.gt_mask[o] = label != 0 ? 1 : 0;
      out.depth[o] = static_cast<double>(s.gt.depth_map[i]);
    }
  }
  out.pca = Tensor::from({b_n, pca_n, h, w}, std::move(pv));
  out.tsr = Tensor::from({b_n, tsr_n, h, w}, std::move(tv));
  return out;
}

}  // namespace thermofuse
