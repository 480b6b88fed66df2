#include <gtest/gtest.h>
#include <unistd.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "thermofuse/rng.hpp"
#include "thermofuse/sequence.hpp"
#include "thermofuse/sequence_io.hpp"
#include "thermofuse/simulate.hpp"

namespace fs = std::filesystem;
using namespace thermofuse;

namespace {

fs::path temp_dir(const std::string& tag) {
  static std::uint64_t counter = 0;
  fs::path p = fs::temp_directory_path() /
               ("thermofuse_" + tag + "_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
  fs::create_directories(p);
  return p;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ThermalSequence make_random_sequence(int n_t, int n_y, int n_x, std::uint64_t seed) {
  ThermalSequence s;
  s.n_t = n_t;
  s.n_y = n_y;
  s.n_x = n_x;
  s.frame_rate_hz = 25.0;
  s.pulse_frame = 1;
  s.id = "seq" + std::to_string(seed);
  s.frames.resize(s.total_values());
  Rng rng(seed);
  for (float& v : s.frames) v = static_cast<float>(rng.uniform(-2.0, 5.0));
  return s;
}

// High-precision reflection series used as an oracle (many more terms than
// the implementation keeps).
double series_oracle(double q, double l, double alpha, double t, int terms) {
  long double sum = 0.0L;
  for (int j = terms; j >= 1; --j)
    sum += expl(-static_cast<long double>(j) * j * kPi * kPi * alpha * t / (l * l));
  return static_cast<double>(q / l * (1.0L + 2.0L * sum));
}

}  // namespace

TEST(Rng, UniformBoundsAndMoments) {
  Rng rng(123);
  double sum = 0.0, sum_sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sum_sq += u * u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.005);
  EXPECT_NEAR(sum_sq / n - 0.25, 1.0 / 12.0, 0.005);
}

TEST(Rng, GaussianMoments) {
  Rng rng(7);
  double sum = 0.0, sum_sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gaussian();
    sum += g;
    sum_sq += g * g;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sum_sq / n, 1.0, 0.02);
}

TEST(Rng, BelowIsUnbiasedAndInRange) {
  Rng rng(99);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) counts[static_cast<std::size_t>(rng.below(7))]++;
  for (int c : counts) EXPECT_NEAR(c, 10000, 450);
}

TEST(Rng, MixSeedSeparatesStreams) {
  EXPECT_NE(mix_seed(1, 2), mix_seed(2, 1));
  EXPECT_NE(mix_seed(1, "a"), mix_seed(1, "b"));
  EXPECT_EQ(mix_seed(5, "x"), mix_seed(5, "x"));
}

TEST(SequenceIo, RoundTripIdentity) {
  const fs::path dir = temp_dir("seqio");
  const ThermalSequence s = make_random_sequence(7, 4, 5, 11);
  save_sequence(s, dir / "a.pts");
  const ThermalSequence r = load_sequence(dir / "a.pts");
  EXPECT_EQ(r.n_t, s.n_t);
  EXPECT_EQ(r.n_y, s.n_y);
  EXPECT_EQ(r.n_x, s.n_x);
  EXPECT_EQ(r.frame_rate_hz, s.frame_rate_hz);
  EXPECT_EQ(r.pulse_frame, s.pulse_frame);
  EXPECT_EQ(r.id, s.id);
  EXPECT_EQ(r.frames, s.frames);

  save_sequence(r, dir / "b.pts");
  EXPECT_EQ(read_bytes(dir / "a.pts"), read_bytes(dir / "b.pts"));
}

TEST(SequenceIo, CanonicalHeaderAndPayloadSize) {
  const fs::path dir = temp_dir("seqhdr");
  ThermalSequence s;
  s.n_t = 2;
  s.n_y = 1;
  s.n_x = 1;
  s.frame_rate_hz = 10.0;
  s.pulse_frame = 0;
  s.id = "tiny";
  s.frames = {1.0f, 2.0f};
  save_sequence(s, dir / "t.pts");

  const std::string bytes = read_bytes(dir / "t.pts");
  const std::size_t nl = bytes.find('\n');
  ASSERT_NE(nl, std::string::npos);
  EXPECT_EQ(bytes.size(), nl + 1 + 2 * sizeof(float));
  EXPECT_EQ(bytes.rfind(R"({"magic":"PTSEQ1","n_t":2,"n_y":1,"n_x":1,)", 0), 0u);
}

TEST(SequenceIo, LoadErrorsAreDistinct) {
  const fs::path dir = temp_dir("seqerr");
  const ThermalSequence s = make_random_sequence(3, 2, 2, 5);
  save_sequence(s, dir / "ok.pts");
  const std::string good = read_bytes(dir / "ok.pts");

  write_bytes(dir / "magic.pts", "{\"magic\":\"NOPE\"}\n");
  EXPECT_THROW(load_sequence(dir / "magic.pts"), FormatError);

  write_bytes(dir / "junk.pts", "not json at all\n");
  EXPECT_THROW(load_sequence(dir / "junk.pts"), FormatError);

  write_bytes(dir / "short.pts", good.substr(0, good.size() - 5));
  EXPECT_THROW(load_sequence(dir / "short.pts"), PayloadError);

  write_bytes(dir / "long.pts", good + "XX");
  EXPECT_THROW(load_sequence(dir / "long.pts"), PayloadError);

  std::string nan_bytes = good;
  const float bad = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan_bytes.data() + nan_bytes.find('\n') + 1, &bad, sizeof(bad));
  write_bytes(dir / "nan.pts", nan_bytes);
  EXPECT_THROW(load_sequence(dir / "nan.pts"), ValueError);

  EXPECT_THROW(load_sequence(dir / "missing.pts"), IoError);
}

TEST(SequenceIo, HeaderInvariantsChecked) {
  const fs::path dir = temp_dir("seqinv");
  std::string bytes =
      R"({"magic":"PTSEQ1","n_t":1,"n_y":1,"n_x":1,"frame_rate_hz":10.0,"pulse_frame":0,"id":"x"})";
  bytes += '\n';
  const float payload = 1.0f;
  bytes.append(reinterpret_cast<const char*>(&payload), sizeof(payload));
  write_bytes(dir / "bad.pts", bytes);
  EXPECT_THROW(load_sequence(dir / "bad.pts"), InvariantError);
}

TEST(GroundTruthIo, RoundTrip) {
  const fs::path dir = temp_dir("gt");
  GroundTruth gt;
  gt.n_y = 3;
  gt.n_x = 4;
  gt.class_mask = {0, 1, 0, 2, 0, 1, 1, 0, 0, 0, 2, 0};
  gt.class_depths = {0.0, 0.5, 2.0};
  gt.depth_map.resize(12, 0.0f);
  for (int i = 0; i < 12; ++i)
    gt.depth_map[static_cast<std::size_t>(i)] =
        static_cast<float>(gt.class_depths[gt.class_mask[static_cast<std::size_t>(i)]]);

  save_ground_truth(gt, dir / "m.pgm", dir / "d.pfm", dir / "c.json");
  const GroundTruth r = load_ground_truth(dir / "m.pgm", dir / "d.pfm", dir / "c.json");
  EXPECT_EQ(r.class_mask, gt.class_mask);
  EXPECT_EQ(r.depth_map, gt.depth_map);
  EXPECT_EQ(r.class_depths, gt.class_depths);
}

TEST(GroundTruthIo, PfmIsBottomUp) {
  const fs::path dir = temp_dir("pfm");
  // 2x2 map with distinct values; bottom row must be written first.
  save_pfm({1.0f, 2.0f, 3.0f, 4.0f}, 2, 2, dir / "d.pfm");
  const std::string bytes = read_bytes(dir / "d.pfm");
  float first;
  std::memcpy(&first, bytes.data() + bytes.find("-1.0\n") + 5, sizeof(float));
  EXPECT_EQ(first, 3.0f);
  int ny = 0, nx = 0;
  const std::vector<float> r = load_pfm(dir / "d.pfm", ny, nx);
  EXPECT_EQ(ny, 2);
  EXPECT_EQ(nx, 2);
  EXPECT_EQ(r, (std::vector<float>{1.0f, 2.0f, 3.0f, 4.0f}));
}

TEST(GroundTruthIo, ValidationCatchesInconsistentLabels) {
  GroundTruth gt;
  gt.n_y = 1;
  gt.n_x = 2;
  gt.class_mask = {0, 1};
  gt.depth_map = {0.0f, 0.0f};  // class 1 pixel with zero depth
  gt.class_depths = {0.0, 1.0};
  EXPECT_THROW(gt.validate(), InvariantError);
  gt.depth_map = {0.0f, 1.0f};
  EXPECT_NO_THROW(gt.validate());
}

TEST(Simulator, HomogeneousPlateHasIdenticalTraces) {
  SpecimenSpec spec;
  spec.noise_std_au = 0.0;
  auto [seq, gt] = simulate_pulse_sequence(spec, 30, 6, 5, 10.0, 42, 2, "flat");
  for (int k = 0; k < seq.n_t; ++k) {
    const float ref = seq.at(k, 0, 0);
    for (int y = 0; y < seq.n_y; ++y)
      for (int x = 0; x < seq.n_x; ++x) EXPECT_EQ(seq.at(k, y, x), ref);
    if (k <= seq.pulse_frame) EXPECT_EQ(ref, 0.0f);
  }
  for (std::uint8_t c : gt.class_mask) EXPECT_EQ(c, 0);
}

TEST(Simulator, SeriesReachesAdiabaticEquilibrium) {
  const double q = 1.7, l = 2.5, alpha = 0.15;
  const double t = 10.0 * l * l / alpha;
  EXPECT_NEAR(adiabatic_surface_rise(q, l, alpha, t), q / l, 1e-3 * q / l);
}

TEST(Simulator, EarlyContrastLargerForShallowerDefect) {
  SpecimenSpec spec;
  spec.noise_std_au = 0.0;
  spec.class_depths_mm = {0.5, 2.0};
  spec.defects = {{8.0, 8.0, 3.0, 0.5}, {8.0, 24.0, 3.0, 2.0}};
  const double rate = 12.0;
  const int n_t = 80;
  auto [seq, gt] = simulate_pulse_sequence(spec, n_t, 16, 32, rate, 3, 0, "two");

  const double t_check = 0.1 * spec.plate_thickness_mm * spec.plate_thickness_mm /
                         spec.thermal_diffusivity_mm2_s;
  const int k = static_cast<int>(std::lround(t_check * rate));
  ASSERT_LT(k, n_t);
  const double t_k = static_cast<double>(k) / rate;

  const double sound = seq.at(k, 0, 0);
  const double shallow = seq.at(k, 8, 8);
  const double deep = seq.at(k, 8, 24);
  EXPECT_GT(shallow - sound, deep - sound);

  // Pixel values agree with a 400-term series evaluation at the frame time.
  EXPECT_NEAR(shallow, series_oracle(1.0, 0.5, 0.15, t_k, 400), 1e-5);
  EXPECT_NEAR(deep, series_oracle(1.0, 2.0, 0.15, t_k, 400), 1e-5);
  EXPECT_NEAR(sound, series_oracle(1.0, 2.5, 0.15, t_k, 400), 1e-5);
  const double contrast_shallow_oracle =
      series_oracle(1.0, 0.5, 0.15, t_k, 400) - series_oracle(1.0, 2.5, 0.15, t_k, 400);
  const double contrast_deep_oracle =
      series_oracle(1.0, 2.0, 0.15, t_k, 400) - series_oracle(1.0, 2.5, 0.15, t_k, 400);
  EXPECT_GT(contrast_shallow_oracle, contrast_deep_oracle);
}

TEST(Simulator, RiseIsNonIncreasingInWallThickness) {
  const double alpha = 0.15;
  for (double t : {0.1, 0.5, 1.0, 2.0, 5.0, 20.0}) {
    double prev = std::numeric_limits<double>::infinity();
    for (double l : {0.3, 0.5, 0.8, 1.0, 1.5, 2.0, 2.5}) {
      const double v = adiabatic_surface_rise(1.0, l, alpha, t);
      EXPECT_LE(v, prev * (1.0 + 1e-12));
      prev = v;
    }
  }
}

TEST(Simulator, NoiseFreeOutputIndependentOfSeed) {
  SpecimenSpec spec;
  spec.class_depths_mm = {1.0};
  spec.defects = {{4.0, 4.0, 2.0, 1.0}};
  auto [a, ga] = simulate_pulse_sequence(spec, 20, 8, 8, 10.0, 1, 1, "s");
  auto [b, gb] = simulate_pulse_sequence(spec, 20, 8, 8, 10.0, 999, 1, "s");
  EXPECT_EQ(a.frames, b.frames);
}

TEST(Simulator, NoiseIsSeededAndHasRequestedLevel) {
  SpecimenSpec spec;
  spec.noise_std_au = 0.05;
  auto [a, ga] = simulate_pulse_sequence(spec, 40, 16, 16, 10.0, 1, 1, "n");
  auto [b, gb] = simulate_pulse_sequence(spec, 40, 16, 16, 10.0, 2, 1, "n");
  auto [clean, gc] = simulate_pulse_sequence(
      [&] {
        SpecimenSpec s = spec;
        s.noise_std_au = 0.0;
        return s;
      }(),
      40, 16, 16, 10.0, 1, 1, "n");
  EXPECT_NE(a.frames, b.frames);
  double ss = 0.0;
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    const double d = static_cast<double>(a.frames[i]) - static_cast<double>(clean.frames[i]);
    ss += d * d;
  }
  const double var = ss / static_cast<double>(a.frames.size());
  EXPECT_NEAR(var, 0.05 * 0.05, 0.15 * 0.05 * 0.05);
}

TEST(Simulator, FootprintBoundaryPixelsAreInside) {
  SpecimenSpec spec;
  spec.class_depths_mm = {1.0};
  spec.defects = {{4.0, 4.0, 2.0, 1.0}};
  auto [seq, gt] = simulate_pulse_sequence(spec, 12, 9, 9, 10.0, 0, 0, "b");
  EXPECT_EQ(gt.class_mask[4 * 9 + 6], 1);  // distance exactly radius
  EXPECT_EQ(gt.class_mask[4 * 9 + 7], 0);
  EXPECT_EQ(gt.depth_map[4 * 9 + 6], 1.0f);
}

TEST(Simulator, RejectsTooFastFrameRate) {
  SpecimenSpec spec;  // thickness 2.5, alpha 0.15 -> max usable rate ~26 Hz
  EXPECT_THROW(simulate_pulse_sequence(spec, 10, 4, 4, 200.0, 0, 0, "f"), ConfigError);
  EXPECT_NO_THROW(simulate_pulse_sequence(spec, 10, 4, 4, 20.0, 0, 0, "f"));
}

TEST(SplitDataset, DefaultCountsPartition) {
  DatasetIndex index;
  for (int i = 0; i < 38; ++i) index.entries.push_back({"id" + std::to_string(i)});
  const DatasetIndex split = split_dataset(index, 26, 6, 6, 3);
  EXPECT_EQ(split.split_entries("train").size(), 26u);
  EXPECT_EQ(split.split_entries("val").size(), 6u);
  EXPECT_EQ(split.split_entries("test").size(), 6u);
  EXPECT_EQ(split.split_entries("unassigned").size(), 0u);
}

TEST(SplitDataset, DegenerateAllTrain) {
  DatasetIndex index;
  for (int i = 0; i < 5; ++i) index.entries.push_back({"id" + std::to_string(i)});
  const DatasetIndex split = split_dataset(index, 5, 0, 0, 0);
  EXPECT_EQ(split.split_entries("train").size(), 5u);
}

TEST(SplitDataset, CountMismatchThrows) {
  DatasetIndex index;
  index.entries.push_back({"a"});
  EXPECT_THROW(split_dataset(index, 2, 0, 0, 0), ConfigError);
}

TEST(SplitDataset, SeedDeterminesAssignment) {
  DatasetIndex index;
  for (int i = 0; i < 38; ++i) index.entries.push_back({"id" + std::to_string(i)});
  auto assignment = [&](std::uint64_t seed) {
    std::string s;
    for (const auto& e : split_dataset(index, 26, 6, 6, seed).entries) s += e.split[0];
    return s;
  };
  EXPECT_EQ(assignment(7), assignment(7));
  std::set<std::string> seen;
  for (std::uint64_t seed = 0; seed < 100; ++seed) seen.insert(assignment(seed));
  EXPECT_EQ(seen.size(), 100u);
}

TEST(IndexIo, RoundTrip) {
  const fs::path dir = temp_dir("idx");
  DatasetIndex index;
  index.entries.push_back({"a", "a.pts", "a.pgm", "a.pfm", "a.json", "train"});
  index.entries.push_back({"b", "b.pts", "b.pgm", "b.pfm", "b.json", "test"});
  save_index(index, dir / "index.json");
  const DatasetIndex r = load_index(dir / "index.json");
  ASSERT_EQ(r.entries.size(), 2u);
  EXPECT_EQ(r.entries[1].id, "b");
  EXPECT_EQ(r.entries[1].split, "test");
  EXPECT_EQ(r.entries[0].sequence_path, "a.pts");
}
