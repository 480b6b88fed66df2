#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "thermofuse/engine/tensor.hpp"
#include "thermofuse/errors.hpp"
#include "thermofuse/sequence_io.hpp"

namespace thermofuse {

// Parameter snapshot: one-line JSON manifest (names, shapes, optimizer step,
// seed), then each parameter's values as little-endian 64-bit floats,
// concatenated in manifest order. Magic "PTCKPT1".

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  long step = 0;
  std::uint64_t seed = 0;
  ordered_json meta = ordered_json::object();  // caller-defined manifest extras
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
};

inline void save_checkpoint(const std::vector<const Parameter*>& params, long step,
                            std::uint64_t seed, const std::filesystem::path& path,
                            const ordered_json& meta = ordered_json::object()) {
  ordered_json h;
  h["magic"] = "PTCKPT1";
  h["step"] = step;
  h["seed"] = seed;
  if (!meta.empty()) h["meta"] = meta;
  h["params"] = ordered_json::array();
  for (const Parameter* p : params) {
    const Shape& s = p->tensor.shape();
    ordered_json je;
    je["name"] = p->name;
    je["shape"] = {s.b, s.c, s.h, s.w};
    h["params"].push_back(std::move(je));
  }
  auto f = detail::open_out(path);
  f << h.dump() << '\n';
  for (const Parameter* p : params) {
    const auto& v = p->tensor.values();
    f.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  detail::finish_write(f, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto f = detail::open_in(path);
  const ordered_json h = detail::parse_header(detail::read_header_line(f, path), "PTCKPT1", path);
  Checkpoint ck;
  ck.step = detail::header_number<long>(h, "step", path);
  ck.seed = detail::header_number<std::uint64_t>(h, "seed", path);
  if (h.contains("meta")) {
    if (!h["meta"].is_object()) throw FormatError("meta must be an object: " + path.string());
    ck.meta = h["meta"];
  }
  if (!h.contains("params") || !h["params"].is_array())
    throw FormatError("missing params list: " + path.string());
  for (const auto& je : h["params"]) {
    CheckpointEntry e;
    e.name = je.at("name").get<std::string>();
    const auto dims = je.at("shape").get<std::vector<int>>();
    if (dims.size() != 4) throw FormatError("parameter shape must have 4 dims: " + path.string());
    e.shape = Shape{dims[0], dims[1], dims[2], dims[3]};
    e.shape.validate();
    e.values.resize(e.shape.count());
    detail::read_exact(f, reinterpret_cast<char*>(e.values.data()),
                       e.values.size() * sizeof(double), path);
    for (double v : e.values)
      if (!std::isfinite(v)) throw ValueError("non-finite parameter value: " + path.string());
    ck.entries.push_back(std::move(e));
  }
  detail::expect_eof(f, path);
  return ck;
}

inline void save_checkpoint(const std::vector<Parameter*>& params, long step, std::uint64_t seed,
                            const std::filesystem::path& path,
                            const ordered_json& meta = ordered_json::object()) {
  save_checkpoint(std::vector<const Parameter*>(params.begin(), params.end()), step, seed, path,
                  meta);
}

// Copies checkpoint values onto live parameters; every parameter must be
// present with an identical shape.
inline void apply_checkpoint(const Checkpoint& ck, const std::vector<Parameter*>& params) {
  for (Parameter* p : params) {
    const CheckpointEntry* e = ck.find(p->name);
    if (!e) throw ConfigError("checkpoint is missing parameter " + p->name);
    if (!(e->shape == p->tensor.shape()))
      throw ShapeError("checkpoint shape " + e->shape.str() + " does not match parameter " +
                       p->name + " " + p->tensor.shape().str());
    p->tensor.values() = e->values;
  }
}

}  // namespace thermofuse
