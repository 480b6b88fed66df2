#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "thermofuse/errors.hpp"
#include "thermofuse/linalg.hpp"
#include "thermofuse/parallel.hpp"
#include "thermofuse/sequence.hpp"

namespace thermofuse {

inline constexpr double kStdGuard = 1e-8;  // constant-pixel guard in standardize
inline constexpr double kLogGuard = 1e-9;  // non-positive-rise guard in TSR fits

// Pixel responses standardized over time: column p of data holds
// (trace_p - mean_p) / std_p, laid out time-major like the source frames.
// Pixels whose sample std falls at or below kStdGuard produce an exactly
// zero column; pixel_stds keeps the unguarded value.
struct StandardizedMatrix {
  int n_t = 0, n_y = 0, n_x = 0;
  std::vector<double> data;  // n_t x P, row-major
  std::vector<double> pixel_means, pixel_stds;

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(n_y) * static_cast<std::size_t>(n_x);
  }
};

// Column kernel: standardizes each pixel column of a time-major n_t x P
// matrix in place (two-pass mean, sample std over n_t - 1).
inline StandardizedMatrix standardize_matrix(std::vector<double> data, int n_t,
                                             int n_y, int n_x) {
  StandardizedMatrix out;
  out.n_t = n_t;
  out.n_y = n_y;
  out.n_x = n_x;
  const std::size_t p_count = out.pixel_count();
  const std::size_t t_count = static_cast<std::size_t>(n_t);
  if (n_t < 2 || data.size() != t_count * p_count)
    throw ShapeError("standardize_matrix: matrix size mismatch");
  out.data = std::move(data);
  out.pixel_means.resize(p_count);
  out.pixel_stds.resize(p_count);
  parallel_for(static_cast<std::int64_t>(p_count), [&](std::int64_t p) {
    const std::size_t pu = static_cast<std::size_t>(p);
    double mean = 0.0;
    for (std::size_t t = 0; t < t_count; ++t) mean += out.data[t * p_count + pu];
    mean /= static_cast<double>(t_count);
    double ss = 0.0;
    for (std::size_t t = 0; t < t_count; ++t) {
      const double d = out.data[t * p_count + pu] - mean;
      ss += d * d;
    }
    const double std_dev = std::sqrt(ss / static_cast<double>(t_count - 1));
    out.pixel_means[pu] = mean;
    out.pixel_stds[pu] = std_dev;
    if (std_dev <= kStdGuard) {
      for (std::size_t t = 0; t < t_count; ++t) out.data[t * p_count + pu] = 0.0;
    } else {
      for (std::size_t t = 0; t < t_count; ++t)
        out.data[t * p_count + pu] = (out.data[t * p_count + pu] - mean) / std_dev;
    }
  });
  return out;
}

inline StandardizedMatrix standardize(const ThermalSequence& seq) {
  seq.validate();
  std::vector<double> data(seq.total_values());
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = static_cast<double>(seq.frames[i]);
  return standardize_matrix(std::move(data), seq.n_t, seq.n_y, seq.n_x);
}

// Principal component images: channel k is the projection of the pixel
// responses (pixels x time) onto the k-th temporal singular direction,
// ordered by descending singular value.
struct PcaTensor {
  int channels_n = 0, n_y = 0, n_x = 0;
  std::vector<double> channels;  // channels_n x P, channel-major
  std::vector<double> singular_values;

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(n_y) * static_cast<std::size_t>(n_x);
  }
};

inline constexpr int kDefaultPcaChannels = 10;

// Components whose singular value falls below this fraction of the largest
// are numerically unresolvable through the Gram matrix (squaring the
// conditioning) and are emitted as exact zeros.
inline constexpr double kPcaRankCutoff = 1e-6;

inline PcaTensor pca_images(const StandardizedMatrix& sm, int j = kDefaultPcaChannels) {
  const std::size_t p_count = sm.pixel_count();
  const int t_count = sm.n_t;
  if (j < 1 || j > std::min<std::int64_t>(t_count, static_cast<std::int64_t>(p_count)))
    throw ConfigError("pca_images: component count exceeds min(N_t, P)");

  // Gram matrix of the temporal rows; its eigenvectors are the right singular
  // directions of the pixels x time arrangement.
  std::vector<double> gram(static_cast<std::size_t>(t_count) * t_count);
  parallel_for(static_cast<std::int64_t>(t_count), [&](std::int64_t a) {
    for (int b = static_cast<int>(a); b < t_count; ++b) {
      const double* ra = sm.data.data() + static_cast<std::size_t>(a) * p_count;
      const double* rb = sm.data.data() + static_cast<std::size_t>(b) * p_count;
      double dot = 0.0;
      for (std::size_t p = 0; p < p_count; ++p) dot += ra[p] * rb[p];
      gram[static_cast<std::size_t>(a) * t_count + b] = dot;
      gram[static_cast<std::size_t>(b) * t_count + static_cast<std::size_t>(a)] = dot;
    }
  });
  const SymmetricEigen eig = jacobi_eigh(std::move(gram), t_count);

  PcaTensor out;
  out.channels_n = j;
  out.n_y = sm.n_y;
  out.n_x = sm.n_x;
  out.channels.resize(static_cast<std::size_t>(j) * p_count);
  out.singular_values.resize(static_cast<std::size_t>(j));

  const double sigma_top = std::sqrt(std::max(eig.values[0], 0.0));
  std::vector<double> directions(static_cast<std::size_t>(j) * t_count);
  for (int k = 0; k < j; ++k) {
    double sigma = std::sqrt(std::max(eig.values[static_cast<std::size_t>(k)], 0.0));
    if (sigma <= kPcaRankCutoff * sigma_top) sigma = 0.0;
    out.singular_values[static_cast<std::size_t>(k)] = sigma;
    const double* v = eig.vector(k);
    // Sign convention: the largest-magnitude entry of the temporal direction
    // is made positive (first occurrence wins on ties).
    int arg = 0;
    for (int t = 1; t < t_count; ++t)
      if (std::abs(v[t]) > std::abs(v[arg])) arg = t;
    const double flip = v[arg] < 0.0 ? -1.0 : 1.0;
    for (int t = 0; t < t_count; ++t)
      directions[static_cast<std::size_t>(k) * t_count + t] = flip * v[t];
  }
  parallel_for(static_cast<std::int64_t>(p_count), [&](std::int64_t p) {
    const std::size_t pu = static_cast<std::size_t>(p);
    for (int k = 0; k < j; ++k) {
      const double* v = directions.data() + static_cast<std::size_t>(k) * t_count;
      double acc = 0.0;
      for (int t = 0; t < t_count; ++t)
        acc += sm.data[static_cast<std::size_t>(t) * p_count + pu] * v[t];
      out.channels[static_cast<std::size_t>(k) * p_count + pu] = acc;
    }
  });
  // A clamped component carries no energy; its image is zero by definition.
  for (int k = 0; k < j; ++k)
    if (out.singular_values[static_cast<std::size_t>(k)] == 0.0)
      std::fill_n(out.channels.begin() + static_cast<std::ptrdiff_t>(k) * static_cast<std::ptrdiff_t>(p_count),
                  p_count, 0.0);
  return out;
}

// Log-domain polynomial fit of one pixel's rise curve:
//   ln(max(delta_t, kLogGuard)) ~ a_0 + a_1 ln t + ... + a_n (ln t)^n
// solved by Householder QR.
inline std::vector<double> tsr_fit_pixel(std::span<const double> times,
                                         std::span<const double> delta_t,
                                         int degree) {
  if (degree < 0) throw ConfigError("tsr_fit_pixel: degree must be >= 0");
  const std::size_t m = times.size();
  if (delta_t.size() != m) throw ShapeError("tsr_fit_pixel: length mismatch");
  if (m < static_cast<std::size_t>(degree) + 1)
    throw ConfigError("tsr_fit_pixel: need at least degree+1 samples");
  for (std::size_t i = 0; i < m; ++i) {
    if (!(times[i] > 0.0))
      throw InvariantError("tsr_fit_pixel: times must be strictly positive");
    if (i > 0 && !(times[i] > times[i - 1]))
      throw InvariantError("tsr_fit_pixel: times must be strictly increasing");
  }
  const int cols = degree + 1;
  std::vector<double> design(m * static_cast<std::size_t>(cols));
  std::vector<double> rhs(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double lt = std::log(times[i]);
    double pw = 1.0;
    for (int c = 0; c < cols; ++c) {
      design[i * cols + static_cast<std::size_t>(c)] = pw;
      pw *= lt;
    }
    rhs[i] = std::log(std::max(delta_t[i], kLogGuard));
  }
  return lstsq(std::move(design), static_cast<int>(m), cols, std::move(rhs));
}

// Per-pixel fit coefficients a_0..a_degree as image channels.
struct TsrTensor {
  int degree = 0, n_y = 0, n_x = 0;
  std::vector<double> channels;  // (degree+1) x P, channel-major
  double reference_time_s = 0.0;
  double epsilon = kLogGuard;

  int channels_n() const { return degree + 1; }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(n_y) * static_cast<std::size_t>(n_x);
  }
};

inline constexpr int kDefaultTsrDegree = 5;

inline TsrTensor tsr_images(const ThermalSequence& seq, int degree = kDefaultTsrDegree) {
  seq.validate();
  if (degree < 0) throw ConfigError("tsr_images: degree must be >= 0");
  const int post = seq.n_t - 1 - seq.pulse_frame;
  if (post < degree + 2)
    throw ConfigError("tsr_images: insufficient post-pulse frames for the fit");

  const double t_ref = seq.time_of(seq.pulse_frame);
  std::vector<double> times(static_cast<std::size_t>(post));
  for (int k = 0; k < post; ++k) {
    times[static_cast<std::size_t>(k)] = seq.time_of(seq.pulse_frame + 1 + k) - t_ref;
    if (!(times[static_cast<std::size_t>(k)] > 0.0) ||
        (k > 0 && !(times[static_cast<std::size_t>(k)] > times[static_cast<std::size_t>(k) - 1])))
      throw InvariantError("tsr_images: frame times must increase after the pulse");
  }

  const int cols = degree + 1;
  std::vector<double> design(static_cast<std::size_t>(post) * cols);
  for (int i = 0; i < post; ++i) {
    const double lt = std::log(times[static_cast<std::size_t>(i)]);
    double pw = 1.0;
    for (int c = 0; c < cols; ++c) {
      design[static_cast<std::size_t>(i) * cols + c] = pw;
      pw *= lt;
    }
  }
  const QrFactor qr(std::move(design), post, cols);

  TsrTensor out;
  out.degree = degree;
  out.n_y = seq.n_y;
  out.n_x = seq.n_x;
  out.reference_time_s = t_ref;
  out.epsilon = kLogGuard;
  const std::size_t p_count = out.pixel_count();
  out.channels.resize(static_cast<std::size_t>(cols) * p_count);
  parallel_for(static_cast<std::int64_t>(p_count), [&](std::int64_t p) {
    const std::size_t pu = static_cast<std::size_t>(p);
    std::vector<double> rhs(static_cast<std::size_t>(post));
    const double cold =
        static_cast<double>(seq.frames[static_cast<std::size_t>(seq.pulse_frame) * p_count + pu]);
    for (int k = 0; k < post; ++k) {
      const double hot = static_cast<double>(
          seq.frames[static_cast<std::size_t>(seq.pulse_frame + 1 + k) * p_count + pu]);
      rhs[static_cast<std::size_t>(k)] = std::log(std::max(hot - cold, kLogGuard));
    }
    const std::vector<double> coef = qr.solve(std::move(rhs));
    for (int c = 0; c < cols; ++c)
      out.channels[static_cast<std::size_t>(c) * p_count + pu] =
          coef[static_cast<std::size_t>(c)];
  });
  return out;
}

}  // namespace thermofuse
