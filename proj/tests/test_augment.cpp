#include <gtest/gtest.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "thermofuse/augment.hpp"
#include "thermofuse/compress.hpp"
#include "thermofuse/modality_io.hpp"
#include "thermofuse/rng.hpp"
#include "thermofuse/sequence_io.hpp"
#include "thermofuse/simulate.hpp"

namespace fs = std::filesystem;
using namespace thermofuse;

namespace {

fs::path fresh_dir(const std::string& tag) {
  fs::path d = fs::temp_directory_path() /
               ("thermofuse_aug_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

ThermalSequence ramp_sequence(int n_t, int n_y, int n_x, double rate = 10.0,
                              const std::string& id = "ramp") {
  ThermalSequence s;
  s.n_t = n_t;
  s.n_y = n_y;
  s.n_x = n_x;
  s.frame_rate_hz = rate;
  s.pulse_frame = 0;
  s.id = id;
  s.frames.resize(s.total_values());
  for (std::size_t i = 0; i < s.frames.size(); ++i)
    s.frames[i] = static_cast<float>(0.25 * static_cast<double>(i % 97) + 0.5);
  return s;
}

// A small simulated plate with two defects, saved to disk as one dataset entry.
DatasetEntry write_entry(const fs::path& root, const std::string& id,
                         std::uint64_t seed, const std::string& split) {
  SpecimenSpec spec;
  spec.noise_std_au = 0.01;
  spec.class_depths_mm = {0.5, 1.0};
  spec.defects = {{3.0, 2.5, 2.0, 0.5}, {8.0, 7.0, 2.5, 1.0}};
  auto [seq, gt] = simulate_pulse_sequence(spec, 40, 12, 10, 20.0, seed, 0, id);
  DatasetEntry e;
  e.id = id;
  e.sequence_path = id + ".pts";
  e.mask_path = id + "_mask.pgm";
  e.depth_path = id + "_depth.pfm";
  e.class_depths_path = id + "_classes.json";
  e.split = split;
  save_sequence(seq, root / e.sequence_path);
  save_ground_truth(gt, root / e.mask_path, root / e.depth_path, root / e.class_depths_path);
  return e;
}

AugmentationConfig small_config() {
  AugmentationConfig c;
  c.n_segments = 8;
  c.factor = 3;
  c.noise_variance = 0.004;
  c.pca_channels = 4;
  c.tsr_degree = 3;
  c.seed = 99;
  return c;
}

AugmentedSample compress_direct(const ThermalSequence& seq, const GroundTruth& gt,
                                const AugmentationConfig& c) {
  AugmentedSample s;
  s.pca = pca_images(standardize(seq), c.pca_channels);
  s.tsr = tsr_images(seq, c.tsr_degree);
  s.gt = gt;
  return s;
}

GroundTruth checker_gt(int n_y, int n_x) {
  GroundTruth gt;
  gt.n_y = n_y;
  gt.n_x = n_x;
  gt.class_depths = {0.0, 0.7, 1.4};
  gt.class_mask.resize(static_cast<std::size_t>(n_y) * n_x);
  gt.depth_map.resize(gt.class_mask.size());
  for (int y = 0; y < n_y; ++y)
    for (int x = 0; x < n_x; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * n_x + x;
      const std::uint8_t cls = static_cast<std::uint8_t>((x + 2 * y) % 3);
      gt.class_mask[i] = cls;
      gt.depth_map[i] = static_cast<float>(gt.class_depths[cls]);
    }
  return gt;
}

// Sample with hand-set channel values so resampling errors are visible.
AugmentedSample patterned_sample(int n_y, int n_x) {
  AugmentedSample s;
  s.gt = checker_gt(n_y, n_x);
  const std::size_t pixels = static_cast<std::size_t>(n_y) * n_x;
  s.pca.channels_n = 2;
  s.pca.n_y = n_y;
  s.pca.n_x = n_x;
  s.pca.singular_values = {3.0, 1.0};
  s.pca.channels.resize(2 * pixels);
  s.tsr.degree = 1;
  s.tsr.n_y = n_y;
  s.tsr.n_x = n_x;
  s.tsr.reference_time_s = 0.1;
  s.tsr.epsilon = 1e-9;
  s.tsr.channels.resize(2 * pixels);
  Rng rng(17);
  for (std::size_t i = 0; i < 2 * pixels; ++i) {
    s.pca.channels[i] = rng.uniform(-2.0, 2.0);
    s.tsr.channels[i] = rng.uniform(-1.0, 1.0);
  }
  return s;
}

void expect_samples_equal(const AugmentedSample& a, const AugmentedSample& b) {
  EXPECT_EQ(a.pca.channels, b.pca.channels);
  EXPECT_EQ(a.pca.singular_values, b.pca.singular_values);
  EXPECT_EQ(a.tsr.channels, b.tsr.channels);
  EXPECT_EQ(a.gt.class_mask, b.gt.class_mask);
  EXPECT_EQ(a.gt.depth_map, b.gt.depth_map);
  EXPECT_EQ(a.gt.class_depths, b.gt.class_depths);
}

}  // namespace

// --------------------------------------------------------------------------
// Temporal segmentation.

TEST(SegmentPartition, CoversRangeWithRemainderAtFront) {
  const auto segs = segment_partition(23, 5);
  ASSERT_EQ(segs.size(), 5u);
  // 23 = 5*4 + 3: three leading segments of 5, then 4, 4.
  const std::vector<int> want_sizes = {5, 5, 5, 4, 4};
  int expect_start = 0;
  for (int s = 0; s < 5; ++s) {
    EXPECT_EQ(segs[static_cast<std::size_t>(s)].first, expect_start);
    EXPECT_EQ(segs[static_cast<std::size_t>(s)].second, want_sizes[static_cast<std::size_t>(s)]);
    expect_start += want_sizes[static_cast<std::size_t>(s)];
  }
  EXPECT_EQ(expect_start, 23);
}

TEST(SegmentPartition, DegenerateCounts) {
  const auto one = segment_partition(9, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0], std::make_pair(0, 9));
  const auto all = segment_partition(9, 9);
  ASSERT_EQ(all.size(), 9u);
  for (int s = 0; s < 9; ++s) EXPECT_EQ(all[static_cast<std::size_t>(s)], std::make_pair(s, 1));
  EXPECT_THROW(segment_partition(9, 10), ConfigError);
  EXPECT_THROW(segment_partition(9, 0), ConfigError);
}

TEST(SegmentSample, IndicesStayInsideTheirSegments) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto idx = draw_segment_indices(37, 7, rng);
    const auto segs = segment_partition(37, 7);
    ASSERT_EQ(idx.size(), segs.size());
    for (std::size_t s = 0; s < segs.size(); ++s) {
      EXPECT_GE(idx[s], segs[s].first);
      EXPECT_LT(idx[s], segs[s].first + segs[s].second);
    }
  }
}

TEST(SegmentSample, FullSegmentCountIsIdentity) {
  const ThermalSequence seq = ramp_sequence(15, 4, 3);
  Rng rng(11);
  const ThermalSequence sub = segment_sample(seq, 15, rng);
  EXPECT_EQ(sub.n_t, seq.n_t);
  EXPECT_EQ(sub.frames, seq.frames);
  EXPECT_EQ(sub.pulse_frame, seq.pulse_frame);
  ASSERT_EQ(sub.times_s.size(), 15u);
  for (int k = 0; k < 15; ++k) EXPECT_EQ(sub.times_s[static_cast<std::size_t>(k)], seq.time_of(k));
}

TEST(SegmentSample, WithinSegmentPositionsAreUniform) {
  // 1000 frames in 100 segments of 10; each draw picks one slot per segment.
  // Pearson statistic pooled over all segments is chi-square with 900 degrees
  // of freedom under uniformity; 1001.6 is its 99th percentile.
  const int n_t = 1000, n_seg = 100, draws = 10000;
  std::vector<int> counts(static_cast<std::size_t>(n_t), 0);
  Rng rng(424242);
  for (int d = 0; d < draws; ++d)
    for (int idx : draw_segment_indices(n_t, n_seg, rng))
      ++counts[static_cast<std::size_t>(idx)];
  const double expected = static_cast<double>(draws) / 10.0;
  double chi2 = 0.0;
  for (int i = 0; i < n_t; ++i) {
    const double diff = counts[static_cast<std::size_t>(i)] - expected;
    chi2 += diff * diff / expected;
  }
  EXPECT_LT(chi2, 1001.6);
  EXPECT_GT(chi2, 798.1);  // 1st percentile, guards against a stuck stream
}

TEST(TakeFrames, InheritsTimesAndRemapsPulseFrame) {
  ThermalSequence seq = ramp_sequence(20, 2, 2, 8.0);
  seq.pulse_frame = 5;
  const ThermalSequence sub = take_frames(seq, {1, 4, 9, 17});
  ASSERT_EQ(sub.n_t, 4);
  EXPECT_EQ(sub.pulse_frame, 1);  // source 4 is the last kept frame <= 5
  ASSERT_EQ(sub.times_s.size(), 4u);
  EXPECT_DOUBLE_EQ(sub.times_s[2], 9.0 / 8.0);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) EXPECT_EQ(sub.at(2, y, x), seq.at(9, y, x));

  const ThermalSequence late = take_frames(seq, {7, 12});
  EXPECT_EQ(late.pulse_frame, 0);  // nothing at or before the source pulse

  EXPECT_THROW(take_frames(seq, {3, 3}), ConfigError);
  EXPECT_THROW(take_frames(seq, {5, 2}), ConfigError);
  EXPECT_THROW(take_frames(seq, {19, 20}), ConfigError);
  EXPECT_THROW(take_frames(seq, {}), ConfigError);
}

// --------------------------------------------------------------------------
// Additive noise.

TEST(AddNoise, ZeroVarianceIsExactCopyAndDrawsNothing) {
  const ThermalSequence seq = ramp_sequence(6, 5, 5);
  Rng rng(3), twin(3);
  const ThermalSequence out = add_gaussian_noise(seq, 0.0, rng);
  EXPECT_EQ(out.frames, seq.frames);
  EXPECT_EQ(rng.next_u64(), twin.next_u64());  // stream untouched
}

TEST(AddNoise, MomentsMatchRequestedVariance) {
  const int n_t = 100, n_y = 100, n_x = 100;
  ThermalSequence seq;
  seq.n_t = n_t;
  seq.n_y = n_y;
  seq.n_x = n_x;
  seq.frame_rate_hz = 10.0;
  seq.pulse_frame = 0;
  seq.id = "flat";
  seq.frames.assign(seq.total_values(), 2.0f);
  const double variance = 0.005;
  Rng rng(777);
  const ThermalSequence noisy = add_gaussian_noise(seq, variance, rng);
  const std::size_t n = noisy.frames.size();
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(noisy.frames[i]) - 2.0;
    sum += d;
    sq += d * d;
  }
  const double mean = sum / static_cast<double>(n);
  const double var = sq / static_cast<double>(n) - mean * mean;
  EXPECT_NEAR(var, variance, 0.05 * variance);
  const double se = std::sqrt(variance / static_cast<double>(n));
  EXPECT_NEAR(mean, 0.0, 4.0 * se);
}

TEST(AddNoise, RejectsNegativeVariance) {
  const ThermalSequence seq = ramp_sequence(4, 2, 2);
  Rng rng(1);
  EXPECT_THROW(add_gaussian_noise(seq, -0.1, rng), ConfigError);
}

// --------------------------------------------------------------------------
// Spatial transforms.

TEST(SpatialTransform, IdentityParamsCopyEverything) {
  const AugmentedSample s = patterned_sample(7, 9);
  const SpatialParams id;
  ASSERT_TRUE(id.is_identity());
  const AugmentedSample out = spatial_transform(s, id);
  expect_samples_equal(out, s);
  ASSERT_EQ(out.provenance.spatial.size(), 1u);  // still recorded
}

TEST(SpatialTransform, HorizontalFlipIsExactInvolution) {
  const AugmentedSample s = patterned_sample(6, 8);
  SpatialParams flip;
  flip.flip_h = true;
  const AugmentedSample once = spatial_transform(s, flip);
  // Mirrored mask: out(y, x) == in(y, W-1-x).
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 8; ++x)
      EXPECT_EQ(once.gt.class_mask[static_cast<std::size_t>(y) * 8 + x],
                s.gt.class_mask[static_cast<std::size_t>(y) * 8 + (7 - x)]);
  const AugmentedSample twice = spatial_transform(once, flip);
  expect_samples_equal(twice, s);
  EXPECT_EQ(twice.provenance.spatial.size(), 2u);
}

TEST(SpatialTransform, DoubleVerticalFlipRestoresChannelsExactly) {
  const AugmentedSample s = patterned_sample(9, 5);
  SpatialParams flip;
  flip.flip_v = true;
  const AugmentedSample twice = spatial_transform(spatial_transform(s, flip), flip);
  expect_samples_equal(twice, s);
}

TEST(SpatialTransform, QuarterTurnMatchesPermutationOracle) {
  const int n = 10;  // square so the rotation is a pixel permutation
  const AugmentedSample s = patterned_sample(n, n);
  SpatialParams rot;
  rot.rotation_deg = 90.0;
  const AugmentedSample out = spatial_transform(s, rot);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const std::size_t dst = static_cast<std::size_t>(y) * n + x;
      const std::size_t src = static_cast<std::size_t>(n - 1 - x) * n + y;
      EXPECT_EQ(out.gt.class_mask[dst], s.gt.class_mask[src]);
      EXPECT_EQ(out.gt.depth_map[dst], s.gt.depth_map[src]);
      for (int c = 0; c < 2; ++c) {
        const std::size_t off = static_cast<std::size_t>(c) * n * n;
        EXPECT_NEAR(out.pca.channels[off + dst], s.pca.channels[off + src], 1e-12);
        EXPECT_NEAR(out.tsr.channels[off + dst], s.tsr.channels[off + src], 1e-12);
      }
    }
}

TEST(SpatialTransform, MaskLabelsStaySubsetUnderArbitraryParams) {
  const AugmentedSample s = patterned_sample(11, 13);
  std::set<std::uint8_t> source_labels(s.gt.class_mask.begin(), s.gt.class_mask.end());
  source_labels.insert(0);  // zero padding may introduce background
  Rng rng(8);
  AugmentationConfig c;
  for (int trial = 0; trial < 25; ++trial) {
    const SpatialParams p = SpatialParams::draw(c, rng);
    const AugmentedSample out = spatial_transform(s, p);
    for (std::uint8_t label : out.gt.class_mask) EXPECT_TRUE(source_labels.count(label));
    for (std::size_t i = 0; i < out.gt.class_mask.size(); ++i) {
      // Nearest-neighbor keeps mask and depth paired.
      const double want = out.gt.class_depths[out.gt.class_mask[i]];
      EXPECT_FLOAT_EQ(out.gt.depth_map[i], static_cast<float>(want));
    }
  }
}

TEST(SpatialTransform, DrawRespectsConfiguredRanges) {
  AugmentationConfig c;
  c.rotation_deg = 12.0;
  c.translate_frac = 0.05;
  c.shear_deg = 4.0;
  c.flip_prob = 1.0;
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const SpatialParams p = SpatialParams::draw(c, rng);
    EXPECT_LE(std::abs(p.rotation_deg), 12.0);
    EXPECT_LE(std::abs(p.translate_x), 0.05);
    EXPECT_LE(std::abs(p.translate_y), 0.05);
    EXPECT_LE(std::abs(p.shear_x_deg), 4.0);
    EXPECT_LE(std::abs(p.shear_y_deg), 4.0);
    EXPECT_TRUE(p.flip_h);
    EXPECT_TRUE(p.flip_v);
  }
}

TEST(SpatialTransform, StrictModeRejectsOutOfRangeParams) {
  const AugmentedSample s = patterned_sample(4, 4);
  SpatialParams p;
  p.rotation_deg = 181.0;
  EXPECT_THROW(spatial_transform(s, p), ConfigError);
  p.rotation_deg = 0.0;
  p.translate_x = 1.5;
  EXPECT_THROW(spatial_transform(s, p), ConfigError);
  p.translate_x = 0.0;
  p.shear_x_deg = 45.0;
  EXPECT_THROW(spatial_transform(s, p), ConfigError);
  p.shear_x_deg = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(spatial_transform(s, p), ConfigError);
}

TEST(SpatialTransform, ParamsSurviveJsonRoundTrip) {
  SpatialParams p;
  p.rotation_deg = -13.25;
  p.translate_x = 0.0625;
  p.translate_y = -0.03125;
  p.shear_x_deg = 2.5;
  p.shear_y_deg = -1.75;
  p.flip_h = true;
  ordered_json j;
  to_json(j, p);
  const SpatialParams q = spatial_params_from_json(j);
  EXPECT_EQ(q.rotation_deg, p.rotation_deg);
  EXPECT_EQ(q.translate_x, p.translate_x);
  EXPECT_EQ(q.translate_y, p.translate_y);
  EXPECT_EQ(q.shear_x_deg, p.shear_x_deg);
  EXPECT_EQ(q.shear_y_deg, p.shear_y_deg);
  EXPECT_EQ(q.flip_h, p.flip_h);
  EXPECT_EQ(q.flip_v, p.flip_v);
}

// --------------------------------------------------------------------------
// Dataset expansion.

TEST(AugmentDataset, EmitsFactorReplicasThenTestPassthrough) {
  const fs::path root = fresh_dir("counts");
  DatasetIndex index;
  index.entries.push_back(write_entry(root, "a", 1, "train"));
  index.entries.push_back(write_entry(root, "b", 2, "train"));
  index.entries.push_back(write_entry(root, "c", 3, "val"));
  index.entries.push_back(write_entry(root, "d", 4, "test"));
  const AugmentationConfig c = small_config();

  std::vector<std::string> order;
  std::vector<int> replicas;
  augment_dataset(index, c, root, [&](AugmentedSample&& s, const std::string& split) {
    order.push_back(split + ":" + s.provenance.source_id);
    replicas.push_back(s.provenance.replica);
    EXPECT_EQ(s.pca.channels_n, c.pca_channels);
    EXPECT_EQ(s.tsr.degree, c.tsr_degree);
    if (s.provenance.replica >= 0)
      EXPECT_EQ(static_cast<int>(s.provenance.frame_indices.size()), c.n_segments);
    EXPECT_TRUE(s.provenance.spatial.empty());  // spatial maps are drawn later
  });

  ASSERT_EQ(order.size(), 10u);  // 3 replicas for a, b, c plus one passthrough
  for (int r = 0; r < 3; ++r) {
    EXPECT_EQ(order[static_cast<std::size_t>(r)], "train:a");
    EXPECT_EQ(order[static_cast<std::size_t>(3 + r)], "train:b");
    EXPECT_EQ(order[static_cast<std::size_t>(6 + r)], "val:c");
    EXPECT_EQ(replicas[static_cast<std::size_t>(r)], r);
  }
  EXPECT_EQ(order.back(), "test:d");
  EXPECT_EQ(replicas.back(), -1);
  fs::remove_all(root);
}

TEST(AugmentDataset, RequiresSplitAssignments) {
  const fs::path root = fresh_dir("nosplit");
  DatasetIndex index;
  index.entries.push_back(write_entry(root, "a", 1, "train"));
  index.entries.back().split = "unassigned";
  EXPECT_THROW(
      augment_dataset(index, small_config(), root, [](AugmentedSample&&, const std::string&) {}),
      ConfigError);
  fs::remove_all(root);
}

TEST(AugmentDataset, TrivialConfigEqualsDirectCompression) {
  const fs::path root = fresh_dir("trivial");
  DatasetIndex index;
  index.entries.push_back(write_entry(root, "a", 6, "train"));
  AugmentationConfig c = small_config();
  c.factor = 1;
  c.noise_variance = 0.0;
  c.n_segments = 40;  // every frame kept

  const ThermalSequence src = load_sequence(root / "a.pts");
  const GroundTruth gt = load_ground_truth(root / "a_mask.pgm", root / "a_depth.pfm",
                                           root / "a_classes.json");
  const AugmentedSample want = compress_direct(src, gt, c);

  int seen = 0;
  augment_dataset(index, c, root, [&](AugmentedSample&& s, const std::string&) {
    ++seen;
    expect_samples_equal(s, want);
    std::vector<int> all(40);
    std::iota(all.begin(), all.end(), 0);
    EXPECT_EQ(s.provenance.frame_indices, all);
  });
  EXPECT_EQ(seen, 1);
  fs::remove_all(root);
}

TEST(AugmentDataset, FixedSeedGivesIdenticalOutput) {
  const fs::path root = fresh_dir("determinism");
  DatasetIndex index;
  index.entries.push_back(write_entry(root, "a", 10, "train"));
  index.entries.push_back(write_entry(root, "b", 11, "val"));
  const AugmentationConfig c = small_config();

  auto run = [&] {
    std::vector<AugmentedSample> out;
    augment_dataset(index, c, root,
                    [&](AugmentedSample&& s, const std::string&) { out.push_back(std::move(s)); });
    return out;
  };
  const auto first = run();
  const auto second = run();
  ASSERT_EQ(first.size(), second.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    expect_samples_equal(first[i], second[i]);
    EXPECT_EQ(first[i].provenance.frame_indices, second[i].provenance.frame_indices);
    EXPECT_EQ(first[i].provenance.noise_seed, second[i].provenance.noise_seed);
  }

  // Replicas differ from each other (noise and frame choices are per replica).
  EXPECT_NE(first[0].provenance.noise_seed, first[1].provenance.noise_seed);
  EXPECT_NE(first[0].pca.channels, first[1].pca.channels);
  fs::remove_all(root);
}

TEST(AugmentDataset, ReplayReproducesSamplesBitExactly) {
  const fs::path root = fresh_dir("replay");
  DatasetIndex index;
  index.entries.push_back(write_entry(root, "a", 20, "train"));
  index.entries.push_back(write_entry(root, "b", 21, "test"));
  const AugmentationConfig c = small_config();

  std::vector<AugmentedSample> emitted;
  augment_dataset(index, c, root,
                  [&](AugmentedSample&& s, const std::string&) { emitted.push_back(std::move(s)); });
  ASSERT_EQ(emitted.size(), 4u);

  for (const AugmentedSample& s : emitted) {
    const AugmentedSample again = replay_sample(index, c, root, s.provenance);
    expect_samples_equal(again, s);
  }

  // Spatial maps recorded in provenance replay bit-exactly too.
  Rng rng(31);
  AugmentedSample transformed = emitted[0];
  transformed = spatial_transform(transformed, SpatialParams::draw(c, rng));
  transformed = spatial_transform(transformed, SpatialParams::draw(c, rng));
  const AugmentedSample again = replay_sample(index, c, root, transformed.provenance);
  expect_samples_equal(again, transformed);
  fs::remove_all(root);
}

TEST(AugmentDataset, WriterLaysOutTreeAndManifest) {
  const fs::path root = fresh_dir("writer_src");
  const fs::path out = fresh_dir("writer_out");
  DatasetIndex index;
  index.entries.push_back(write_entry(root, "a", 30, "train"));
  index.entries.push_back(write_entry(root, "b", 31, "val"));
  index.entries.push_back(write_entry(root, "c", 32, "test"));
  AugmentationConfig c = small_config();
  c.factor = 2;

  write_augmented_dataset(index, c, root, out);

  std::ifstream mf(out / "manifest.json");
  ASSERT_TRUE(mf.good());
  const ordered_json manifest = ordered_json::parse(mf);
  EXPECT_EQ(augmentation_config_from_json(manifest.at("config")).seed, c.seed);
  ASSERT_EQ(manifest.at("samples").size(), 5u);  // 2 + 2 replicas + 1 passthrough

  for (const auto& je : manifest.at("samples")) {
    const std::string split = je.at("split").get<std::string>();
    const std::string stem = je.at("stem").get<std::string>();
    const fs::path dir = out / split;
    std::string id;
    const PcaTensor pca = load_pca(dir / (stem + "_pca.ptm"), &id);
    EXPECT_EQ(id, je.at("source_id").get<std::string>());
    EXPECT_EQ(pca.channels_n, c.pca_channels);
    const TsrTensor tsr = load_tsr(dir / (stem + "_tsr.ptm"));
    EXPECT_EQ(tsr.degree, c.tsr_degree);
    const GroundTruth gt = load_ground_truth(dir / (stem + "_mask.pgm"),
                                             dir / (stem + "_depth.pfm"),
                                             dir / (stem + "_classes.json"));
    EXPECT_EQ(gt.n_y, 12);
    EXPECT_EQ(gt.n_x, 10);
  }
  EXPECT_EQ(manifest.at("samples")[0].at("stem").get<std::string>(), "a_r0");
  EXPECT_EQ(manifest.at("samples")[4].at("stem").get<std::string>(), "c_full");

  // Stored tensors match a manifest-driven replay after float32 quantization.
  const auto& je = manifest.at("samples")[1];
  SampleProvenance prov;
  prov.source_id = je.at("source_id").get<std::string>();
  prov.replica = je.at("replica").get<int>();
  prov.frame_indices = je.at("frame_indices").get<std::vector<int>>();
  prov.noise_seed = je.at("noise_seed").get<std::uint64_t>();
  const AugmentedSample replayed = replay_sample(index, c, root, prov);
  const PcaTensor stored = load_pca(out / "train" / "a_r1_pca.ptm");
  ASSERT_EQ(stored.channels.size(), replayed.pca.channels.size());
  for (std::size_t i = 0; i < stored.channels.size(); ++i)
    EXPECT_EQ(stored.channels[i],
              static_cast<double>(static_cast<float>(replayed.pca.channels[i])));
  fs::remove_all(root);
  fs::remove_all(out);
}

TEST(AugmentConfig, JsonRoundTripAndValidation) {
  AugmentationConfig c;
  c.n_segments = 42;
  c.factor = 7;
  c.noise_variance = 0.25;
  c.rotation_deg = 30.0;
  c.translate_frac = 0.2;
  c.shear_deg = 5.0;
  c.flip_prob = 0.75;
  c.seed = 123456789;
  c.pca_channels = 6;
  c.tsr_degree = 4;
  ordered_json j;
  to_json(j, c);
  const AugmentationConfig d = augmentation_config_from_json(j);
  EXPECT_EQ(d.n_segments, c.n_segments);
  EXPECT_EQ(d.factor, c.factor);
  EXPECT_EQ(d.noise_variance, c.noise_variance);
  EXPECT_EQ(d.seed, c.seed);
  EXPECT_EQ(d.pca_channels, c.pca_channels);
  EXPECT_EQ(d.tsr_degree, c.tsr_degree);

  ordered_json bad = j;
  bad["shear_deg"] = 45.0;
  EXPECT_THROW(augmentation_config_from_json(bad), ConfigError);
  bad = j;
  bad["factor"] = 0;
  EXPECT_THROW(augmentation_config_from_json(bad), ConfigError);
}
