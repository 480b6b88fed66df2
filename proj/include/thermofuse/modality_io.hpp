#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "thermofuse/compress.hpp"
#include "thermofuse/sequence_io.hpp"

namespace thermofuse {

// PTMOD1 containers reuse the PTSEQ1 layout (one-line JSON header + raw
// little-endian float32 payload) with n_t reinterpreted as the channel count
// and a "modality" key distinguishing the two tensors. Channel payload is
// channel-major. frame_rate_hz / pulse_frame are retained for schema
// compatibility but carry no information here; per-modality keys
// (singular_values | degree, reference_time_s, epsilon) complete the record.
// Values are computed in 64-bit and stored as 32-bit, so a save/load round
// trip quantizes channels to float precision.

namespace detail {

inline ordered_json modality_header(int channels, int n_y, int n_x,
                                    const std::string& id, const char* modality) {
  ordered_json h;
  h["magic"] = "PTMOD1";
  h["n_t"] = channels;
  h["n_y"] = n_y;
  h["n_x"] = n_x;
  h["frame_rate_hz"] = 0.0;
  h["pulse_frame"] = 0;
  h["id"] = id;
  h["modality"] = modality;
  return h;
}

inline void write_modality(const ordered_json& header, const std::vector<double>& channels,
                           const std::filesystem::path& p) {
  std::vector<float> payload(channels.size());
  for (std::size_t i = 0; i < channels.size(); ++i)
    payload[i] = static_cast<float>(channels[i]);
  auto f = open_out(p);
  const std::string line = header.dump();
  f.write(line.data(), static_cast<std::streamsize>(line.size()));
  f.put('\n');
  f.write(reinterpret_cast<const char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * sizeof(float)));
  finish_write(f, p);
}

struct ModalityFile {
  ordered_json header;
  int channels_n = 0, n_y = 0, n_x = 0;
  std::string id, modality;
  std::vector<double> channels;
};

inline ModalityFile read_modality(const std::filesystem::path& p,
                                  const char* expected_modality) {
  auto f = open_in(p);
  ModalityFile mf;
  mf.header = parse_header(read_header_line(f, p), "PTMOD1", p);
  mf.channels_n = header_number<int>(mf.header, "n_t", p);
  mf.n_y = header_number<int>(mf.header, "n_y", p);
  mf.n_x = header_number<int>(mf.header, "n_x", p);
  mf.id = header_string(mf.header, "id", p);
  mf.modality = header_string(mf.header, "modality", p);
  if (mf.modality != expected_modality)
    throw FormatError("modality mismatch, expected " + std::string(expected_modality) +
                      ": " + p.string());
  if (mf.channels_n < 1 || mf.n_y < 1 || mf.n_x < 1)
    throw InvariantError("modality header dimensions invalid: " + p.string());
  const std::size_t count = static_cast<std::size_t>(mf.channels_n) * mf.n_y * mf.n_x;
  std::vector<float> payload(count);
  read_exact(f, payload.data(), count, p);
  expect_eof(f, p);
  mf.channels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::isfinite(payload[i]))
      throw ValueError("non-finite modality sample: " + p.string());
    mf.channels[i] = static_cast<double>(payload[i]);
  }
  return mf;
}

}  // namespace detail

inline void save_pca(const PcaTensor& t, const std::string& id,
                     const std::filesystem::path& p) {
  ordered_json h = detail::modality_header(t.channels_n, t.n_y, t.n_x, id, "pca");
  h["singular_values"] = t.singular_values;
  detail::write_modality(h, t.channels, p);
}

inline PcaTensor load_pca(const std::filesystem::path& p, std::string* id_out = nullptr) {
  detail::ModalityFile mf = detail::read_modality(p, "pca");
  if (!mf.header.contains("singular_values") || !mf.header["singular_values"].is_array())
    throw FormatError("missing singular_values: " + p.string());
  PcaTensor t;
  t.channels_n = mf.channels_n;
  t.n_y = mf.n_y;
  t.n_x = mf.n_x;
  t.channels = std::move(mf.channels);
  t.singular_values = mf.header["singular_values"].get<std::vector<double>>();
  if (t.singular_values.size() != static_cast<std::size_t>(t.channels_n))
    throw FormatError("singular_values length mismatch: " + p.string());
  for (std::size_t k = 1; k < t.singular_values.size(); ++k)
    if (t.singular_values[k] > t.singular_values[k - 1] || t.singular_values[k] < 0.0)
      throw InvariantError("singular values must be non-negative, non-increasing: " +
                           p.string());
  if (id_out) *id_out = mf.id;
  return t;
}

inline void save_tsr(const TsrTensor& t, const std::string& id,
                     const std::filesystem::path& p) {
  ordered_json h = detail::modality_header(t.channels_n(), t.n_y, t.n_x, id, "tsr");
  h["degree"] = t.degree;
  h["reference_time_s"] = t.reference_time_s;
  h["epsilon"] = t.epsilon;
  detail::write_modality(h, t.channels, p);
}

inline TsrTensor load_tsr(const std::filesystem::path& p, std::string* id_out = nullptr) {
  detail::ModalityFile mf = detail::read_modality(p, "tsr");
  TsrTensor t;
  t.degree = detail::header_number<int>(mf.header, "degree", p);
  if (t.degree + 1 != mf.channels_n)
    throw FormatError("degree / channel count mismatch: " + p.string());
  t.n_y = mf.n_y;
  t.n_x = mf.n_x;
  t.reference_time_s = detail::header_number<double>(mf.header, "reference_time_s", p);
  t.epsilon = detail::header_number<double>(mf.header, "epsilon", p);
  t.channels = std::move(mf.channels);
  if (id_out) *id_out = mf.id;
  return t;
}

}  // namespace thermofuse
