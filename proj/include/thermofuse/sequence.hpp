#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "thermofuse/errors.hpp"

namespace thermofuse {

// A pulse-thermography recording: n_t frames of n_y x n_x sensor readings,
// stored time-major then row-major as float32. pulse_frame is the index of
// the last frame captured before the flash heats the surface, so frames with
// k <= pulse_frame sit at ambient level and k > pulse_frame show the decay.
struct ThermalSequence {
  int n_t = 0, n_y = 0, n_x = 0;
  double frame_rate_hz = 0.0;
  int pulse_frame = 0;
  std::string id;
  std::vector<float> frames;
  // Optional per-frame capture times. Subsampled sequences keep the source
  // timestamps here; when empty, frame k was captured at k / frame_rate_hz.
  // Only the nominal frame_rate_hz is persisted by the container format.
  std::vector<double> times_s;

  std::size_t frame_pixels() const {
    return static_cast<std::size_t>(n_y) * static_cast<std::size_t>(n_x);
  }
  std::size_t total_values() const {
    return static_cast<std::size_t>(n_t) * frame_pixels();
  }

  float& at(int t, int y, int x) {
    return frames[(static_cast<std::size_t>(t) * n_y + y) * n_x + x];
  }
  float at(int t, int y, int x) const {
    return frames[(static_cast<std::size_t>(t) * n_y + y) * n_x + x];
  }

  double time_of(int k) const {
    if (!times_s.empty()) return times_s[static_cast<std::size_t>(k)];
    return static_cast<double>(k) / frame_rate_hz;
  }

  void validate() const {
    if (n_t < 2) throw InvariantError("sequence: n_t must be >= 2");
    if (n_y < 1 || n_x < 1)
      throw InvariantError("sequence: frame dimensions must be positive");
    if (!(frame_rate_hz > 0.0))
      throw InvariantError("sequence: frame_rate_hz must be positive");
    if (pulse_frame < 0 || pulse_frame >= n_t)
      throw InvariantError("sequence: pulse_frame out of range");
    if (frames.size() != total_values())
      throw InvariantError("sequence: frame buffer size mismatch");
    if (!times_s.empty() && times_s.size() != static_cast<std::size_t>(n_t))
      throw InvariantError("sequence: times_s length mismatch");
    for (float v : frames)
      if (!std::isfinite(v)) throw ValueError("sequence: non-finite sample");
  }
};

// Per-pixel labels for one specimen. class_mask holds class ids (0 = sound
// material), depth_map holds defect depth below the surface in mm (0 on
// sound pixels), class_depths maps class id -> depth in mm.
struct GroundTruth {
  int n_y = 0, n_x = 0;
  std::vector<std::uint8_t> class_mask;
  std::vector<float> depth_map;
  std::vector<double> class_depths;  // class_depths[0] == 0

  std::size_t pixels() const {
    return static_cast<std::size_t>(n_y) * static_cast<std::size_t>(n_x);
  }

  void validate() const {
    if (n_y < 1 || n_x < 1)
      throw InvariantError("ground truth: dimensions must be positive");
    if (class_mask.size() != pixels() || depth_map.size() != pixels())
      throw InvariantError("ground truth: mask/depth size mismatch");
    if (class_depths.empty() || class_depths[0] != 0.0)
      throw InvariantError("ground truth: class 0 must map to depth 0");
    for (std::size_t i = 0; i < pixels(); ++i) {
      const std::uint8_t c = class_mask[i];
      if (c >= class_depths.size())
        throw InvariantError("ground truth: class id out of range");
      const float d = depth_map[i];
      if (!std::isfinite(d) || d < 0.0f)
        throw ValueError("ground truth: bad depth value");
      if ((c == 0) != (d == 0.0f))
        throw InvariantError(
            "ground truth: depth must be zero exactly on sound pixels");
    }
  }
};

// One flat-bottom-hole defect: a filled circle in pixel coordinates whose
// remaining wall thickness above the hole is depth_mm.
struct DefectSpec {
  double center_y = 0.0, center_x = 0.0;
  double radius_px = 0.0;
  double depth_mm = 0.0;
};

// Physical description of a simulated specimen. Depth classes are assigned
// from class_depths_mm (index + 1); when the palette is empty the distinct
// defect depths, sorted ascending, become the classes.
struct SpecimenSpec {
  double plate_thickness_mm = 2.5;
  double thermal_diffusivity_mm2_s = 0.15;
  double pulse_energy_au = 1.0;
  double noise_std_au = 0.0;
  std::vector<double> class_depths_mm;
  std::vector<DefectSpec> defects;

  void validate() const {
    if (!(plate_thickness_mm > 0.0))
      throw ConfigError("specimen: plate thickness must be positive");
    if (!(thermal_diffusivity_mm2_s > 0.0))
      throw ConfigError("specimen: diffusivity must be positive");
    if (!(pulse_energy_au > 0.0))
      throw ConfigError("specimen: pulse energy must be positive");
    if (noise_std_au < 0.0)
      throw ConfigError("specimen: noise level must be non-negative");
    for (double d : class_depths_mm)
      if (!(d > 0.0) || d > plate_thickness_mm)
        throw ConfigError("specimen: class depth outside (0, thickness]");
    for (const DefectSpec& d : defects) {
      if (!(d.radius_px > 0.0))
        throw ConfigError("specimen: defect radius must be positive");
      if (!(d.depth_mm > 0.0) || d.depth_mm > plate_thickness_mm)
        throw ConfigError("specimen: defect depth outside (0, thickness]");
    }
  }
};

// File-level record of one simulated specimen and its labels.
struct DatasetEntry {
  std::string id;
  std::string sequence_path;
  std::string mask_path;
  std::string depth_path;
  std::string class_depths_path;
  std::string split = "unassigned";  // train | val | test | unassigned
};

struct DatasetIndex {
  std::vector<DatasetEntry> entries;

  std::vector<const DatasetEntry*> split_entries(const std::string& split) const {
    std::vector<const DatasetEntry*> out;
    for (const auto& e : entries)
      if (e.split == split) out.push_back(&e);
    return out;
  }
};

}  // namespace thermofuse
