#pragma once

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "thermofuse/errors.hpp"
#include "thermofuse/sequence.hpp"

namespace thermofuse {

static_assert(std::endian::native == std::endian::little,
              "container payloads are little-endian; big-endian hosts are unsupported");

using ordered_json = nlohmann::ordered_json;

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + p.string());
  return f;
}

inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + p.string());
  return f;
}

inline void finish_write(std::ofstream& f, const std::filesystem::path& p) {
  f.flush();
  if (!f) throw IoError("write failed: " + p.string());
}

// Reads up to the first newline; header lines are capped at 1 MiB.
inline std::string read_header_line(std::ifstream& f, const std::filesystem::path& p) {
  std::string line;
  line.reserve(256);
  char ch;
  while (f.get(ch)) {
    if (ch == '\n') return line;
    line.push_back(ch);
    if (line.size() > (1u << 20))
      throw FormatError("header line too long: " + p.string());
  }
  throw FormatError("missing header newline: " + p.string());
}

inline ordered_json parse_header(const std::string& line, const std::string& expected_magic,
                                 const std::filesystem::path& p) {
  ordered_json h = ordered_json::parse(line, nullptr, false);
  if (h.is_discarded() || !h.is_object())
    throw FormatError("header is not a JSON object: " + p.string());
  if (!h.contains("magic") || !h["magic"].is_string() ||
      h["magic"].get<std::string>() != expected_magic)
    throw FormatError("bad magic, expected " + expected_magic + ": " + p.string());
  return h;
}

template <class T>
T header_number(const ordered_json& h, const char* key, const std::filesystem::path& p) {
  if (!h.contains(key) || !h[key].is_number())
    throw FormatError(std::string("header key missing or non-numeric: ") + key +
                      " in " + p.string());
  return h[key].get<T>();
}

inline std::string header_string(const ordered_json& h, const char* key,
                                 const std::filesystem::path& p) {
  if (!h.contains(key) || !h[key].is_string())
    throw FormatError(std::string("header key missing or non-string: ") + key +
                      " in " + p.string());
  return h[key].get<std::string>();
}

template <class T>
void read_exact(std::ifstream& f, T* dst, std::size_t count,
                const std::filesystem::path& p) {
  f.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(count * sizeof(T)));
  if (static_cast<std::size_t>(f.gcount()) != count * sizeof(T))
    throw PayloadError("payload truncated: " + p.string());
}

inline void expect_eof(std::ifstream& f, const std::filesystem::path& p) {
  char extra;
  if (f.get(extra)) throw PayloadError("trailing bytes after payload: " + p.string());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PTSEQ1: one-line JSON header {magic, n_t, n_y, n_x, frame_rate_hz,
// pulse_frame, id} followed by 0x0A and n_t*n_y*n_x little-endian float32,
// time-major then row-major. Keys are always written in that order so a
// load/save round trip is byte-identical.

inline void save_sequence(const ThermalSequence& seq, const std::filesystem::path& p) {
  seq.validate();
  ordered_json h;
  h["magic"] = "PTSEQ1";
  h["n_t"] = seq.n_t;
  h["n_y"] = seq.n_y;
  h["n_x"] = seq.n_x;
  h["frame_rate_hz"] = seq.frame_rate_hz;
  h["pulse_frame"] = seq.pulse_frame;
  h["id"] = seq.id;
  auto f = detail::open_out(p);
  const std::string line = h.dump();
  f.write(line.data(), static_cast<std::streamsize>(line.size()));
  f.put('\n');
  f.write(reinterpret_cast<const char*>(seq.frames.data()),
          static_cast<std::streamsize>(seq.frames.size() * sizeof(float)));
  detail::finish_write(f, p);
}

inline ThermalSequence load_sequence(const std::filesystem::path& p) {
  auto f = detail::open_in(p);
  const ordered_json h = detail::parse_header(detail::read_header_line(f, p), "PTSEQ1", p);
  ThermalSequence seq;
  seq.n_t = detail::header_number<int>(h, "n_t", p);
  seq.n_y = detail::header_number<int>(h, "n_y", p);
  seq.n_x = detail::header_number<int>(h, "n_x", p);
  seq.frame_rate_hz = detail::header_number<double>(h, "frame_rate_hz", p);
  seq.pulse_frame = detail::header_number<int>(h, "pulse_frame", p);
  seq.id = detail::header_string(h, "id", p);
  if (seq.n_t < 2 || seq.n_y < 1 || seq.n_x < 1)
    throw InvariantError("sequence header dimensions invalid: " + p.string());
  seq.frames.resize(seq.total_values());
  detail::read_exact(f, seq.frames.data(), seq.frames.size(), p);
  detail::expect_eof(f, p);
  seq.validate();
  return seq;
}

// ---------------------------------------------------------------------------
// Class masks as 8-bit binary PGM (P5, maxval 255).

inline void save_pgm(const std::vector<std::uint8_t>& pixels, int n_y, int n_x,
                     const std::filesystem::path& p) {
  if (pixels.size() != static_cast<std::size_t>(n_y) * n_x || n_y < 1 || n_x < 1)
    throw ShapeError("save_pgm: size mismatch");
  auto f = detail::open_out(p);
  f << "P5\n" << n_x << " " << n_y << "\n255\n";
  f.write(reinterpret_cast<const char*>(pixels.data()),
          static_cast<std::streamsize>(pixels.size()));
  detail::finish_write(f, p);
}

namespace detail {
// Next whitespace-separated token, skipping '#' comment lines.
inline std::string pnm_token(std::ifstream& f, const std::filesystem::path& p) {
  std::string tok;
  char ch;
  while (f.get(ch)) {
    if (ch == '#') {
      while (f.get(ch) && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(ch);
  }
  if (tok.empty()) throw FormatError("unexpected end of header: " + p.string());
  return tok;
}
}  // namespace detail

inline std::vector<std::uint8_t> load_pgm(const std::filesystem::path& p, int& n_y, int& n_x) {
  auto f = detail::open_in(p);
  if (detail::pnm_token(f, p) != "P5") throw FormatError("not a P5 PGM: " + p.string());
  n_x = std::stoi(detail::pnm_token(f, p));
  n_y = std::stoi(detail::pnm_token(f, p));
  const int maxval = std::stoi(detail::pnm_token(f, p));
  if (n_x < 1 || n_y < 1) throw FormatError("bad PGM dimensions: " + p.string());
  if (maxval != 255) throw FormatError("PGM maxval must be 255: " + p.string());
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(n_y) * n_x);
  detail::read_exact(f, pixels.data(), pixels.size(), p);
  detail::expect_eof(f, p);
  return pixels;
}

// ---------------------------------------------------------------------------
// Depth maps as grayscale PFM ("Pf", scale -1.0 for little-endian, rows
// stored bottom-to-top per the format).

inline void save_pfm(const std::vector<float>& pixels, int n_y, int n_x,
                     const std::filesystem::path& p) {
  if (pixels.size() != static_cast<std::size_t>(n_y) * n_x || n_y < 1 || n_x < 1)
    throw ShapeError("save_pfm: size mismatch");
  auto f = detail::open_out(p);
  f << "Pf\n" << n_x << " " << n_y << "\n-1.0\n";
  for (int y = n_y - 1; y >= 0; --y)
    f.write(reinterpret_cast<const char*>(pixels.data() + static_cast<std::size_t>(y) * n_x),
            static_cast<std::streamsize>(sizeof(float) * n_x));
  detail::finish_write(f, p);
}

inline std::vector<float> load_pfm(const std::filesystem::path& p, int& n_y, int& n_x) {
  auto f = detail::open_in(p);
  if (detail::pnm_token(f, p) != "Pf")
    throw FormatError("not a grayscale PFM: " + p.string());
  n_x = std::stoi(detail::pnm_token(f, p));
  n_y = std::stoi(detail::pnm_token(f, p));
  const double scale = std::stod(detail::pnm_token(f, p));
  if (n_x < 1 || n_y < 1) throw FormatError("bad PFM dimensions: " + p.string());
  if (!(scale < 0.0))
    throw FormatError("big-endian PFM unsupported: " + p.string());
  std::vector<float> pixels(static_cast<std::size_t>(n_y) * n_x);
  for (int y = n_y - 1; y >= 0; --y)
    detail::read_exact(f, pixels.data() + static_cast<std::size_t>(y) * n_x,
                       static_cast<std::size_t>(n_x), p);
  detail::expect_eof(f, p);
  for (float v : pixels)
    if (!std::isfinite(v)) throw ValueError("non-finite PFM sample: " + p.string());
  return pixels;
}

// ---------------------------------------------------------------------------
// Ground truth = PGM mask + PFM depth + JSON sidecar with the class palette.

inline void save_class_depths(const std::vector<double>& class_depths,
                              const std::filesystem::path& p) {
  ordered_json j;
  j["class_depths_mm"] = class_depths;
  auto f = detail::open_out(p);
  f << j.dump() << '\n';
  detail::finish_write(f, p);
}

inline std::vector<double> load_class_depths(const std::filesystem::path& p) {
  auto f = detail::open_in(p);
  ordered_json j = ordered_json::parse(f, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("class_depths_mm") ||
      !j["class_depths_mm"].is_array())
    throw FormatError("bad class-depth sidecar: " + p.string());
  return j["class_depths_mm"].get<std::vector<double>>();
}

inline void save_ground_truth(const GroundTruth& gt, const std::filesystem::path& mask_path,
                              const std::filesystem::path& depth_path,
                              const std::filesystem::path& sidecar_path) {
  gt.validate();
  save_pgm(gt.class_mask, gt.n_y, gt.n_x, mask_path);
  save_pfm(gt.depth_map, gt.n_y, gt.n_x, depth_path);
  save_class_depths(gt.class_depths, sidecar_path);
}

inline GroundTruth load_ground_truth(const std::filesystem::path& mask_path,
                                     const std::filesystem::path& depth_path,
                                     const std::filesystem::path& sidecar_path) {
  GroundTruth gt;
  gt.class_mask = load_pgm(mask_path, gt.n_y, gt.n_x);
  int dy = 0, dx = 0;
  gt.depth_map = load_pfm(depth_path, dy, dx);
  if (dy != gt.n_y || dx != gt.n_x)
    throw ShapeError("mask and depth dimensions disagree: " + mask_path.string());
  gt.class_depths = load_class_depths(sidecar_path);
  gt.validate();
  return gt;
}

// ---------------------------------------------------------------------------
// Dataset index: JSON list of entries with relative file paths.

inline void save_index(const DatasetIndex& index, const std::filesystem::path& p) {
  ordered_json j;
  j["entries"] = ordered_json::array();
  for (const auto& e : index.entries) {
    ordered_json je;
    je["id"] = e.id;
    je["sequence"] = e.sequence_path;
    je["mask"] = e.mask_path;
    je["depth"] = e.depth_path;
    je["class_depths"] = e.class_depths_path;
    je["split"] = e.split;
    j["entries"].push_back(std::move(je));
  }
  auto f = detail::open_out(p);
  f << j.dump(2) << '\n';
  detail::finish_write(f, p);
}

inline DatasetIndex load_index(const std::filesystem::path& p) {
  auto f = detail::open_in(p);
  ordered_json j = ordered_json::parse(f, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("entries") ||
      !j["entries"].is_array())
    throw FormatError("bad dataset index: " + p.string());
  DatasetIndex index;
  for (const auto& je : j["entries"]) {
    DatasetEntry e;
    e.id = je.at("id").get<std::string>();
    e.sequence_path = je.at("sequence").get<std::string>();
    e.mask_path = je.at("mask").get<std::string>();
    e.depth_path = je.at("depth").get<std::string>();
    e.class_depths_path = je.at("class_depths").get<std::string>();
    e.split = je.at("split").get<std::string>();
    index.entries.push_back(std::move(e));
  }
  return index;
}

}  // namespace thermofuse
