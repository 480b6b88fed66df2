#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "thermofuse/compress.hpp"
#include "thermofuse/errors.hpp"
#include "thermofuse/modality_io.hpp"
#include "thermofuse/parallel.hpp"
#include "thermofuse/rng.hpp"
#include "thermofuse/sequence.hpp"
#include "thermofuse/sequence_io.hpp"
#include "thermofuse/simulate.hpp"

namespace thermofuse {

// Knobs for dataset expansion: temporal subsampling + additive noise create
// the stored replicas, the spatial ranges bound the per-step affine draws
// made later by the training loop, and the compression settings fix the
// modality tensors written to disk.
struct AugmentationConfig {
  int n_segments = 100;
  int factor = 500;               // replicas per source sequence
  double noise_variance = 0.005;  // sensor units squared
  double rotation_deg = 15.0;     // uniform on +/- this
  double translate_frac = 0.10;   // fraction of width/height, per axis
  double shear_deg = 10.0;        // per axis
  double flip_prob = 0.5;         // per axis
  std::uint64_t seed = 0;
  int pca_channels = kDefaultPcaChannels;
  int tsr_degree = kDefaultTsrDegree;

  void validate() const {
    if (n_segments < 1) throw ConfigError("augment: n_segments must be >= 1");
    if (factor < 1) throw ConfigError("augment: factor must be >= 1");
    if (noise_variance < 0.0) throw ConfigError("augment: noise variance must be >= 0");
    if (rotation_deg < 0.0 || rotation_deg > 180.0)
      throw ConfigError("augment: rotation range outside [0, 180]");
    if (translate_frac < 0.0 || translate_frac > 1.0)
      throw ConfigError("augment: translate range outside [0, 1]");
    if (shear_deg < 0.0 || shear_deg >= 45.0)
      throw ConfigError("augment: shear range outside [0, 45)");
    if (flip_prob < 0.0 || flip_prob > 1.0)
      throw ConfigError("augment: flip probability outside [0, 1]");
    if (pca_channels < 1) throw ConfigError("augment: pca_channels must be >= 1");
    if (tsr_degree < 0) throw ConfigError("augment: tsr_degree must be >= 0");
  }
};

inline void to_json(ordered_json& j, const AugmentationConfig& c) {
  j["n_segments"] = c.n_segments;
  j["factor"] = c.factor;
  j["noise_variance"] = c.noise_variance;
  j["rotation_deg"] = c.rotation_deg;
  j["translate_frac"] = c.translate_frac;
  j["shear_deg"] = c.shear_deg;
  j["flip_prob"] = c.flip_prob;
  j["seed"] = c.seed;
  j["pca_channels"] = c.pca_channels;
  j["tsr_degree"] = c.tsr_degree;
}

inline AugmentationConfig augmentation_config_from_json(const ordered_json& j) {
  AugmentationConfig c;
  if (j.contains("n_segments")) c.n_segments = j["n_segments"].get<int>();
  if (j.contains("factor")) c.factor = j["factor"].get<int>();
  if (j.contains("noise_variance")) c.noise_variance = j["noise_variance"].get<double>();
  if (j.contains("rotation_deg")) c.rotation_deg = j["rotation_deg"].get<double>();
  if (j.contains("translate_frac")) c.translate_frac = j["translate_frac"].get<double>();
  if (j.contains("shear_deg")) c.shear_deg = j["shear_deg"].get<double>();
  if (j.contains("flip_prob")) c.flip_prob = j["flip_prob"].get<double>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("pca_channels")) c.pca_channels = j["pca_channels"].get<int>();
  if (j.contains("tsr_degree")) c.tsr_degree = j["tsr_degree"].get<int>();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Temporal subsampling.

// Contiguous segment sizes: N_t/n each, remainder spread over the leading
// segments. Returned as (start, size) pairs.
inline std::vector<std::pair<int, int>> segment_partition(int n_t, int n_segments) {
  if (n_segments < 1 || n_segments > n_t)
    throw ConfigError("segment_sample: n_segments must be in [1, N_t]");
  std::vector<std::pair<int, int>> segs;
  segs.reserve(static_cast<std::size_t>(n_segments));
  const int base = n_t / n_segments;
  const int rem = n_t % n_segments;
  int start = 0;
  for (int s = 0; s < n_segments; ++s) {
    const int size = base + (s < rem ? 1 : 0);
    segs.emplace_back(start, size);
    start += size;
  }
  return segs;
}

inline std::vector<int> draw_segment_indices(int n_t, int n_segments, Rng& rng) {
  std::vector<int> indices;
  indices.reserve(static_cast<std::size_t>(n_segments));
  for (const auto& [start, size] : segment_partition(n_t, n_segments))
    indices.push_back(start + static_cast<int>(rng.below(static_cast<std::uint64_t>(size))));
  return indices;
}

// Extracts the given source frames (strictly increasing indices), inheriting
// their capture times. The new pulse_frame is the last kept frame at or
// before the source pulse_frame, or 0 if none was kept.
inline ThermalSequence take_frames(const ThermalSequence& seq,
                                   const std::vector<int>& indices) {
  seq.validate();
  if (indices.empty()) throw ConfigError("take_frames: empty index list");
  ThermalSequence out;
  out.n_t = static_cast<int>(indices.size());
  out.n_y = seq.n_y;
  out.n_x = seq.n_x;
  out.frame_rate_hz = seq.frame_rate_hz;
  out.id = seq.id;
  const std::size_t pixels = seq.frame_pixels();
  out.frames.resize(out.total_values());
  out.times_s.resize(indices.size());
  out.pulse_frame = 0;
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const int src = indices[j];
    if (src < 0 || src >= seq.n_t || (j > 0 && src <= indices[j - 1]))
      throw ConfigError("take_frames: indices must be strictly increasing and in range");
    std::copy_n(seq.frames.begin() + static_cast<std::ptrdiff_t>(src) * static_cast<std::ptrdiff_t>(pixels),
                pixels, out.frames.begin() + static_cast<std::ptrdiff_t>(j) * static_cast<std::ptrdiff_t>(pixels));
    out.times_s[j] = seq.time_of(src);
    if (src <= seq.pulse_frame) out.pulse_frame = static_cast<int>(j);
  }
  return out;
}

inline ThermalSequence segment_sample(const ThermalSequence& seq, int n_segments,
                                      Rng& rng) {
  return take_frames(seq, draw_segment_indices(seq.n_t, n_segments, rng));
}

// ---------------------------------------------------------------------------
// Additive sensor noise.

inline ThermalSequence add_gaussian_noise(const ThermalSequence& seq, double variance,
                                          Rng& rng) {
  if (variance < 0.0) throw ConfigError("add_gaussian_noise: variance must be >= 0");
  ThermalSequence out = seq;
  if (variance == 0.0) return out;
  const double sd = std::sqrt(variance);
  for (float& v : out.frames)
    v = static_cast<float>(static_cast<double>(v) + sd * rng.gaussian());
  return out;
}

// ---------------------------------------------------------------------------
// Paired spatial transforms.

struct SpatialParams {
  double rotation_deg = 0.0;
  double translate_x = 0.0, translate_y = 0.0;  // fraction of W / H
  double shear_x_deg = 0.0, shear_y_deg = 0.0;
  bool flip_h = false, flip_v = false;

  bool is_identity() const {
    return rotation_deg == 0.0 && translate_x == 0.0 && translate_y == 0.0 &&
           shear_x_deg == 0.0 && shear_y_deg == 0.0 && !flip_h && !flip_v;
  }

  static SpatialParams draw(const AugmentationConfig& c, Rng& rng) {
    SpatialParams p;
    p.rotation_deg = rng.uniform(-c.rotation_deg, c.rotation_deg);
    p.translate_x = rng.uniform(-c.translate_frac, c.translate_frac);
    p.translate_y = rng.uniform(-c.translate_frac, c.translate_frac);
    p.shear_x_deg = rng.uniform(-c.shear_deg, c.shear_deg);
    p.shear_y_deg = rng.uniform(-c.shear_deg, c.shear_deg);
    p.flip_h = rng.bernoulli(c.flip_prob);
    p.flip_v = rng.bernoulli(c.flip_prob);
    return p;
  }
};

inline void to_json(ordered_json& j, const SpatialParams& p) {
  j["rotation_deg"] = p.rotation_deg;
  j["translate_x"] = p.translate_x;
  j["translate_y"] = p.translate_y;
  j["shear_x_deg"] = p.shear_x_deg;
  j["shear_y_deg"] = p.shear_y_deg;
  j["flip_h"] = p.flip_h;
  j["flip_v"] = p.flip_v;
}

inline SpatialParams spatial_params_from_json(const ordered_json& j) {
  SpatialParams p;
  p.rotation_deg = j.at("rotation_deg").get<double>();
  p.translate_x = j.at("translate_x").get<double>();
  p.translate_y = j.at("translate_y").get<double>();
  p.shear_x_deg = j.at("shear_x_deg").get<double>();
  p.shear_y_deg = j.at("shear_y_deg").get<double>();
  p.flip_h = j.at("flip_h").get<bool>();
  p.flip_v = j.at("flip_v").get<bool>();
  return p;
}

// Everything needed to regenerate a sample bit-exactly from its source
// sequence: which frames were kept, the noise stream, and the spatial maps
// applied afterwards. replica -1 marks an un-augmented passthrough.
struct SampleProvenance {
  std::string source_id;
  int replica = -1;
  std::vector<int> frame_indices;
  std::uint64_t noise_seed = 0;
  std::vector<SpatialParams> spatial;
};

struct AugmentedSample {
  PcaTensor pca;
  TsrTensor tsr;
  GroundTruth gt;
  SampleProvenance provenance;
};

namespace detail {

struct Affine2 {
  // p_dst = a * (p - center) + b + center, in (x, y)
  double a00, a01, a10, a11;
  double bx, by;
  double cx, cy;

  void source_of(double xd, double yd, double& xs, double& ys) const {
    const double det = a00 * a11 - a01 * a10;
    const double rx = xd - cx - bx, ry = yd - cy - by;
    xs = (a11 * rx - a01 * ry) / det + cx;
    ys = (-a10 * rx + a00 * ry) / det + cy;
  }
};

inline Affine2 build_affine(const SpatialParams& p, int n_y, int n_x) {
  const double deg = kPi / 180.0;
  const double cr = std::cos(p.rotation_deg * deg), sr = std::sin(p.rotation_deg * deg);
  const double tx = std::tan(p.shear_x_deg * deg), ty = std::tan(p.shear_y_deg * deg);
  const double fx = p.flip_h ? -1.0 : 1.0, fy = p.flip_v ? -1.0 : 1.0;
  // Flips, then translation, then shear, then rotation, about the center.
  const double sh00 = 1.0, sh01 = tx, sh10 = ty, sh11 = 1.0;
  const double r00 = cr, r01 = -sr, r10 = sr, r11 = cr;
  const double rs00 = r00 * sh00 + r01 * sh10, rs01 = r00 * sh01 + r01 * sh11;
  const double rs10 = r10 * sh00 + r11 * sh10, rs11 = r10 * sh01 + r11 * sh11;
  Affine2 a;
  a.a00 = rs00 * fx;
  a.a01 = rs01 * fy;
  a.a10 = rs10 * fx;
  a.a11 = rs11 * fy;
  const double shift_x = p.translate_x * n_x, shift_y = p.translate_y * n_y;
  a.bx = rs00 * shift_x + rs01 * shift_y;
  a.by = rs10 * shift_x + rs11 * shift_y;
  a.cx = (n_x - 1) / 2.0;
  a.cy = (n_y - 1) / 2.0;
  const double det = a.a00 * a.a11 - a.a01 * a.a10;
  if (!(std::abs(det) > 1e-6))
    throw ValueError("spatial_transform: degenerate affine map");
  return a;
}

inline double bilinear_zero_pad(const double* chan, int n_y, int n_x, double xs,
                                double ys) {
  const int x0 = static_cast<int>(std::floor(xs));
  const int y0 = static_cast<int>(std::floor(ys));
  const double fx = xs - x0, fy = ys - y0;
  auto tap = [&](int y, int x) -> double {
    if (y < 0 || y >= n_y || x < 0 || x >= n_x) return 0.0;
    return chan[static_cast<std::size_t>(y) * n_x + x];
  };
  return (1.0 - fy) * ((1.0 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1)) +
         fy * ((1.0 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1));
}

}  // namespace detail

// Applies one affine map (rotation o shear o translation o flips about the
// image center) to the whole sample: modality channels resample bilinearly
// with zero padding, class mask and depth map resample nearest-neighbor so
// labels stay crisp and aligned. strict additionally validates that the
// parameters are finite and within hard limits (|rotation| <= 180,
// |translate| <= 1, |shear| < 45).
inline AugmentedSample spatial_transform(const AugmentedSample& sample,
                                         const SpatialParams& params,
                                         bool strict = true) {
  if (strict) {
    const bool finite = std::isfinite(params.rotation_deg) &&
                        std::isfinite(params.translate_x) &&
                        std::isfinite(params.translate_y) &&
                        std::isfinite(params.shear_x_deg) &&
                        std::isfinite(params.shear_y_deg);
    if (!finite || std::abs(params.rotation_deg) > 180.0 ||
        std::abs(params.translate_x) > 1.0 || std::abs(params.translate_y) > 1.0 ||
        std::abs(params.shear_x_deg) >= 45.0 || std::abs(params.shear_y_deg) >= 45.0)
      throw ConfigError("spatial_transform: parameters outside hard limits");
  }
  const int n_y = sample.gt.n_y, n_x = sample.gt.n_x;
  if (sample.pca.n_y != n_y || sample.pca.n_x != n_x || sample.tsr.n_y != n_y ||
      sample.tsr.n_x != n_x)
    throw ShapeError("spatial_transform: modality/ground-truth shape mismatch");

  AugmentedSample out = sample;
  out.provenance.spatial.push_back(params);
  if (params.is_identity()) return out;

  const detail::Affine2 map = detail::build_affine(params, n_y, n_x);
  const std::size_t pixels = static_cast<std::size_t>(n_y) * n_x;

  auto resample_channels = [&](const std::vector<double>& src, std::vector<double>& dst,
                               int channels) {
    parallel_for(static_cast<std::int64_t>(pixels), [&](std::int64_t i) {
      const int y = static_cast<int>(i) / n_x, x = static_cast<int>(i) % n_x;
      double xs, ys;
      map.source_of(x, y, xs, ys);
      for (int c = 0; c < channels; ++c)
        dst[static_cast<std::size_t>(c) * pixels + static_cast<std::size_t>(i)] =
            detail::bilinear_zero_pad(src.data() + static_cast<std::size_t>(c) * pixels,
                                      n_y, n_x, xs, ys);
    });
  };
  resample_channels(sample.pca.channels, out.pca.channels, sample.pca.channels_n);
  resample_channels(sample.tsr.channels, out.tsr.channels, sample.tsr.channels_n());

  parallel_for(static_cast<std::int64_t>(pixels), [&](std::int64_t i) {
    const int y = static_cast<int>(i) / n_x, x = static_cast<int>(i) % n_x;
    double xs, ys;
    map.source_of(x, y, xs, ys);
    const long xr = std::lround(xs), yr = std::lround(ys);
    if (yr < 0 || yr >= n_y || xr < 0 || xr >= n_x) {
      out.gt.class_mask[static_cast<std::size_t>(i)] = 0;
      out.gt.depth_map[static_cast<std::size_t>(i)] = 0.0f;
    } else {
      const std::size_t s = static_cast<std::size_t>(yr) * n_x + static_cast<std::size_t>(xr);
      out.gt.class_mask[static_cast<std::size_t>(i)] = sample.gt.class_mask[s];
      out.gt.depth_map[static_cast<std::size_t>(i)] = sample.gt.depth_map[s];
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Dataset expansion.

namespace detail {

inline std::uint64_t replica_seed(const AugmentationConfig& c, const std::string& id,
                                  int replica) {
  return mix_seed(c.seed, fnv1a64(id), static_cast<std::uint64_t>(replica));
}

inline AugmentedSample compress_sample(const ThermalSequence& seq, const GroundTruth& gt,
                                       const AugmentationConfig& c,
                                       SampleProvenance provenance) {
  AugmentedSample s;
  s.pca = pca_images(standardize(seq), c.pca_channels);
  s.tsr = tsr_images(seq, c.tsr_degree);
  s.gt = gt;
  s.provenance = std::move(provenance);
  return s;
}

inline AugmentedSample make_replica(const ThermalSequence& src, const GroundTruth& gt,
                                    const AugmentationConfig& c, int replica) {
  const std::uint64_t sub = replica_seed(c, src.id, replica);
  Rng sample_rng(mix_seed(sub, 1));
  SampleProvenance prov;
  prov.source_id = src.id;
  prov.replica = replica;
  prov.frame_indices = draw_segment_indices(src.n_t, c.n_segments, sample_rng);
  prov.noise_seed = mix_seed(sub, 2);
  Rng noise_rng(prov.noise_seed);
  const ThermalSequence noisy = add_gaussian_noise(
      take_frames(src, prov.frame_indices), c.noise_variance, noise_rng);
  return compress_sample(noisy, gt, c, std::move(prov));
}

}  // namespace detail

// Streams the expanded dataset in a fixed order: for every train/val entry
// (index order) factor replicas in replica order, then every test entry
// passed through un-augmented. Replicas are generated in parallel but each
// derives its own RNG streams from (seed, source id, replica), so the output
// is identical for any worker count. root resolves relative entry paths.
inline void augment_dataset(
    const DatasetIndex& index, const AugmentationConfig& config,
    const std::filesystem::path& root,
    const std::function<void(AugmentedSample&&, const std::string& split)>& sink) {
  config.validate();
  for (const auto& e : index.entries) {
    if (e.split != "train" && e.split != "val" && e.split != "test")
      throw ConfigError("augment_dataset: entry without split assignment: " + e.id);
  }
  const int block = std::max(4 * worker_count(), 8);
  for (const auto& e : index.entries) {
    if (e.split == "test") continue;
    const ThermalSequence src = load_sequence(root / e.sequence_path);
    const GroundTruth gt = load_ground_truth(root / e.mask_path, root / e.depth_path,
                                             root / e.class_depths_path);
    for (int r0 = 0; r0 < config.factor; r0 += block) {
      const int n = std::min(block, config.factor - r0);
      std::vector<AugmentedSample> batch(static_cast<std::size_t>(n));
      parallel_for(n, [&](std::int64_t i) {
        batch[static_cast<std::size_t>(i)] =
            detail::make_replica(src, gt, config, r0 + static_cast<int>(i));
      });
      for (auto& s : batch) sink(std::move(s), e.split);
    }
  }
  for (const auto& e : index.entries) {
    if (e.split != "test") continue;
    const ThermalSequence src = load_sequence(root / e.sequence_path);
    const GroundTruth gt = load_ground_truth(root / e.mask_path, root / e.depth_path,
                                             root / e.class_depths_path);
    SampleProvenance prov;
    prov.source_id = src.id;
    prov.replica = -1;
    sink(detail::compress_sample(src, gt, config, std::move(prov)), e.split);
  }
}

// Regenerates one sample from its provenance record; bit-exact with the
// original emission.
inline AugmentedSample replay_sample(const DatasetIndex& index,
                                     const AugmentationConfig& config,
                                     const std::filesystem::path& root,
                                     const SampleProvenance& prov) {
  const DatasetEntry* entry = nullptr;
  for (const auto& e : index.entries)
    if (e.id == prov.source_id) entry = &e;
  if (!entry) throw ConfigError("replay_sample: unknown source id " + prov.source_id);
  const ThermalSequence src = load_sequence(root / entry->sequence_path);
  const GroundTruth gt = load_ground_truth(root / entry->mask_path, root / entry->depth_path,
                                           root / entry->class_depths_path);
  AugmentedSample s;
  if (prov.replica < 0) {
    SampleProvenance base;
    base.source_id = prov.source_id;
    base.replica = -1;
    s = detail::compress_sample(src, gt, config, std::move(base));
  } else {
    Rng noise_rng(prov.noise_seed);
    const ThermalSequence noisy = add_gaussian_noise(
        take_frames(src, prov.frame_indices), config.noise_variance, noise_rng);
    SampleProvenance base = prov;
    base.spatial.clear();
    s = detail::compress_sample(noisy, gt, config, std::move(base));
  }
  for (const SpatialParams& p : prov.spatial) s = spatial_transform(s, p, false);
  return s;
}

// ---------------------------------------------------------------------------
// On-disk layout: train/ val/ test/ directories of PTMOD1 pairs plus PGM/PFM
// ground truth, and a manifest recording config + provenance for every file.

inline void write_augmented_dataset(const DatasetIndex& index,
                                    const AugmentationConfig& config,
                                    const std::filesystem::path& root,
                                    const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "train");
  fs::create_directories(out_dir / "val");
  fs::create_directories(out_dir / "test");

  ordered_json manifest;
  manifest["config"] = ordered_json::object();
  to_json(manifest["config"], config);
  manifest["samples"] = ordered_json::array();

  augment_dataset(index, config, root, [&](AugmentedSample&& s, const std::string& split) {
    const std::string stem =
        s.provenance.replica < 0
            ? s.provenance.source_id + "_full"
            : s.provenance.source_id + "_r" + std::to_string(s.provenance.replica);
    const fs::path dir = out_dir / split;
    save_pca(s.pca, s.provenance.source_id, dir / (stem + "_pca.ptm"));
    save_tsr(s.tsr, s.provenance.source_id, dir / (stem + "_tsr.ptm"));
    save_ground_truth(s.gt, dir / (stem + "_mask.pgm"), dir / (stem + "_depth.pfm"),
                      dir / (stem + "_classes.json"));
    ordered_json je;
    je["split"] = split;
    je["source_id"] = s.provenance.source_id;
    je["replica"] = s.provenance.replica;
    je["stem"] = stem;
    je["frame_indices"] = s.provenance.frame_indices;
    je["noise_seed"] = s.provenance.noise_seed;
    manifest["samples"].push_back(std::move(je));
  });

  auto f = detail::open_out(out_dir / "manifest.json");
  f << manifest.dump(2) << '\n';
  detail::finish_write(f, out_dir / "manifest.json");
}

}  // namespace thermofuse
