#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "thermofuse/errors.hpp"
#include "thermofuse/rng.hpp"
#include "thermofuse/sequence.hpp"

namespace thermofuse {

inline constexpr int kSeriesTerms = 50;
inline constexpr double kPi = 3.14159265358979323846;

// Surface temperature rise of an adiabatic plate of thickness l_mm at time
// t_s after an instantaneous heat pulse, from the 1-D reflection series
//   dT(t) = (Q/L) * (1 + 2 * sum_{j=1..terms} exp(-j^2 pi^2 alpha t / L^2)).
// Over a back-drilled hole the wall thickness takes the defect depth, so
// shallower defects trap heat earlier and read hotter.
inline double adiabatic_surface_rise(double pulse_energy_au, double l_mm,
                                     double alpha_mm2_s, double t_s,
                                     int terms = kSeriesTerms) {
  const double x = kPi * kPi * alpha_mm2_s * t_s / (l_mm * l_mm);
  double sum = 0.0;
  for (int j = terms; j >= 1; --j) sum += std::exp(-static_cast<double>(j) * j * x);
  return pulse_energy_au / l_mm * (1.0 + 2.0 * sum);
}

namespace detail {

// Upper bound on the dropped tail of the truncated reflection series,
// relative to the leading constant term.
inline double series_tail_bound(double l_mm, double alpha_mm2_s, double t_s,
                                int terms = kSeriesTerms) {
  const double x = kPi * kPi * alpha_mm2_s * t_s / (l_mm * l_mm);
  const double first = std::exp(-static_cast<double>(terms + 1) * (terms + 1) * x);
  const double ratio = std::exp(-(2.0 * terms + 3.0) * x);
  return 2.0 * first / (1.0 - ratio);
}

}  // namespace detail

// Synthesizes one pulse-thermography recording plus its labels. Frames with
// index <= pulse_frame sit at ambient level 0 so the cold reference frame is
// flash-free; the flash fires between pulse_frame and pulse_frame + 1, and
// frame k > pulse_frame shows the decay at t = (k - pulse_frame)/frame_rate.
// Gaussian sensor noise of spec.noise_std_au is added to every frame.
//
// Defects are rasterized in order as filled circles (boundary pixels
// inside); where footprints overlap, the later defect wins. Class ids come
// from spec.class_depths_mm (palette index + 1), or from the distinct defect
// depths sorted ascending when the palette is empty.
inline std::pair<ThermalSequence, GroundTruth> simulate_pulse_sequence(
    const SpecimenSpec& spec, int n_t, int n_y, int n_x, double frame_rate_hz,
    std::uint64_t seed, int pulse_frame = 0, const std::string& id = "sim") {
  spec.validate();
  if (n_t < 2) throw ConfigError("simulate: n_t must be >= 2");
  if (n_y < 1 || n_x < 1) throw ConfigError("simulate: frame dims must be positive");
  if (!(frame_rate_hz > 0.0)) throw ConfigError("simulate: frame_rate must be positive");
  if (pulse_frame < 0 || pulse_frame >= n_t)
    throw ConfigError("simulate: pulse_frame out of range");
  if (n_t - 1 > pulse_frame) {
    // Truncation must stay below 1e-12 of the leading term at the earliest
    // post-pulse sample; the full plate thickness is the slowest-decaying case.
    const double tail = detail::series_tail_bound(spec.plate_thickness_mm,
                                                  spec.thermal_diffusivity_mm2_s,
                                                  1.0 / frame_rate_hz);
    if (!(tail <= 1e-12))
      throw ConfigError(
          "simulate: frame rate too high for the truncated series; lower it so "
          "the first post-pulse sample is later");
  }

  // Class palette.
  std::vector<double> palette = spec.class_depths_mm;
  if (palette.empty()) {
    for (const auto& d : spec.defects) palette.push_back(d.depth_mm);
    std::sort(palette.begin(), palette.end());
    palette.erase(std::unique(palette.begin(), palette.end()), palette.end());
  }
  auto class_of = [&](double depth_mm) -> int {
    for (std::size_t k = 0; k < palette.size(); ++k)
      if (std::abs(palette[k] - depth_mm) <= 1e-12) return static_cast<int>(k) + 1;
    throw ConfigError("simulate: defect depth missing from class palette");
  };
  if (palette.size() > 254) throw ConfigError("simulate: too many depth classes");

  GroundTruth gt;
  gt.n_y = n_y;
  gt.n_x = n_x;
  gt.class_mask.assign(static_cast<std::size_t>(n_y) * n_x, 0);
  gt.depth_map.assign(static_cast<std::size_t>(n_y) * n_x, 0.0f);
  gt.class_depths.assign(palette.size() + 1, 0.0);
  for (std::size_t k = 0; k < palette.size(); ++k) gt.class_depths[k + 1] = palette[k];

  std::vector<double> wall(static_cast<std::size_t>(n_y) * n_x,
                           spec.plate_thickness_mm);
  for (const DefectSpec& d : spec.defects) {
    const int cls = class_of(d.depth_mm);
    const double r2 = d.radius_px * d.radius_px;
    const int y_lo = std::max(0, static_cast<int>(std::floor(d.center_y - d.radius_px)));
    const int y_hi = std::min(n_y - 1, static_cast<int>(std::ceil(d.center_y + d.radius_px)));
    const int x_lo = std::max(0, static_cast<int>(std::floor(d.center_x - d.radius_px)));
    const int x_hi = std::min(n_x - 1, static_cast<int>(std::ceil(d.center_x + d.radius_px)));
    for (int y = y_lo; y <= y_hi; ++y)
      for (int x = x_lo; x <= x_hi; ++x) {
        const double dy = y - d.center_y, dx = x - d.center_x;
        if (dy * dy + dx * dx <= r2) {
          const std::size_t i = static_cast<std::size_t>(y) * n_x + x;
          gt.class_mask[i] = static_cast<std::uint8_t>(cls);
          gt.depth_map[i] = static_cast<float>(d.depth_mm);
          wall[i] = d.depth_mm;
        }
      }
  }
  gt.validate();

  // One decay trace per distinct wall thickness.
  std::map<double, std::vector<double>> traces;
  for (double l : wall) traces.emplace(l, std::vector<double>());
  for (auto& [l, trace] : traces) {
    trace.assign(static_cast<std::size_t>(n_t), 0.0);
    for (int k = pulse_frame + 1; k < n_t; ++k)
      trace[static_cast<std::size_t>(k)] = adiabatic_surface_rise(
          spec.pulse_energy_au, l, spec.thermal_diffusivity_mm2_s,
          static_cast<double>(k - pulse_frame) / frame_rate_hz);
  }

  ThermalSequence seq;
  seq.n_t = n_t;
  seq.n_y = n_y;
  seq.n_x = n_x;
  seq.frame_rate_hz = frame_rate_hz;
  seq.pulse_frame = pulse_frame;
  seq.id = id;
  seq.frames.resize(seq.total_values());
  const std::size_t pixels = seq.frame_pixels();
  Rng rng(seed);
  const bool noisy = spec.noise_std_au > 0.0;
  for (int k = 0; k < n_t; ++k) {
    for (std::size_t p = 0; p < pixels; ++p) {
      double v = traces.find(wall[p])->second[static_cast<std::size_t>(k)];
      if (noisy) v += spec.noise_std_au * rng.gaussian();
      seq.frames[static_cast<std::size_t>(k) * pixels + p] = static_cast<float>(v);
    }
  }
  seq.validate();
  return {std::move(seq), std::move(gt)};
}

// Randomly assigns train/val/test splits; counts must cover the index.
inline DatasetIndex split_dataset(DatasetIndex index, int train, int val, int test,
                                  std::uint64_t seed) {
  if (train < 0 || val < 0 || test < 0 ||
      static_cast<std::size_t>(train) + val + test != index.entries.size())
    throw ConfigError("split_dataset: counts must sum to the entry count");
  std::vector<std::size_t> order(index.entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& e = index.entries[order[i]];
    if (i < static_cast<std::size_t>(train))
      e.split = "train";
    else if (i < static_cast<std::size_t>(train) + val)
      e.split = "val";
    else
      e.split = "test";
  }
  return index;
}

}  // namespace thermofuse
