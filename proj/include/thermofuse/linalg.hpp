#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "thermofuse/errors.hpp"

namespace thermofuse {

// Dense symmetric eigendecomposition, values sorted descending. vector(k)
// returns the eigenvector paired with values[k]; signs are whatever the
// rotation sequence produces, but they are deterministic.
struct SymmetricEigen {
  int n = 0;
  std::vector<double> values;
  std::vector<double> vectors;  // row k = eigenvector k

  const double* vector(int k) const { return vectors.data() + static_cast<std::size_t>(k) * n; }
};

// Cyclic Jacobi rotations on a row-major symmetric matrix. Converges in a
// handful of sweeps for the matrix sizes used here (up to a few hundred).
inline SymmetricEigen jacobi_eigh(std::vector<double> a, int n) {
  if (n <= 0 || static_cast<std::size_t>(n) * n != a.size())
    throw ShapeError("jacobi_eigh: matrix must be square");
  std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;

  auto at = [&](std::vector<double>& m, int r, int c) -> double& {
    return m[static_cast<std::size_t>(r) * n + c];
  };

  double frob_sq = 0.0;
  for (double x : a) frob_sq += x * x;
  const double stop = 1e-28 * frob_sq;

  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off_sq = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off_sq += 2.0 * at(a, p, q) * at(a, p, q);
    if (off_sq <= stop || frob_sq == 0.0) break;

    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = at(a, p, q);
        if (apq == 0.0) continue;
        const double theta = (at(a, q, q) - at(a, p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {  // A := A J (columns p, q)
          const double akp = at(a, k, p), akq = at(a, k, q);
          at(a, k, p) = c * akp - s * akq;
          at(a, k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {  // A := Jt A (rows p, q)
          const double apk = at(a, p, k), aqk = at(a, q, k);
          at(a, p, k) = c * apk - s * aqk;
          at(a, q, k) = s * apk + c * aqk;
        }
        at(a, p, q) = 0.0;
        at(a, q, p) = 0.0;
        for (int k = 0; k < n; ++k) {  // V := V J
          const double vkp = at(v, k, p), vkq = at(v, k, q);
          at(v, k, p) = c * vkp - s * vkq;
          at(v, k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
    return at(a, i, i) > at(a, j, j);
  });

  SymmetricEigen out;
  out.n = n;
  out.values.resize(static_cast<std::size_t>(n));
  out.vectors.resize(static_cast<std::size_t>(n) * n);
  for (int k = 0; k < n; ++k) {
    out.values[static_cast<std::size_t>(k)] = at(a, order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(k)]);
    for (int i = 0; i < n; ++i)
      out.vectors[static_cast<std::size_t>(k) * n + i] =
          at(v, i, order[static_cast<std::size_t>(k)]);
  }
  return out;
}

// Householder QR of an m x n (m >= n) row-major matrix, reusable across many
// right-hand sides. Throws ValueError when R is numerically singular.
class QrFactor {
public:
  QrFactor(std::vector<double> a, int m, int n, double rcond = 1e-12)
      : m_(m), n_(n), a_(std::move(a)), c_(static_cast<std::size_t>(n)), rdiag_(static_cast<std::size_t>(n)) {
    if (m_ < n_ || n_ < 1 || a_.size() != static_cast<std::size_t>(m_) * n_)
      throw ShapeError("QrFactor: need m >= n >= 1");
    factor();
    double rmax = 0.0;
    for (double d : rdiag_) rmax = std::max(rmax, std::abs(d));
    for (double d : rdiag_)
      if (std::abs(d) <= rcond * rmax || rmax == 0.0)
        throw ValueError("rank-deficient least-squares design");
  }

  int rows() const { return m_; }
  int cols() const { return n_; }

  // Minimum-norm-residual solution of the overdetermined system.
  std::vector<double> solve(std::vector<double> b) const {
    if (b.size() != static_cast<std::size_t>(m_))
      throw ShapeError("QrFactor::solve: rhs length mismatch");
    for (int k = 0; k < n_; ++k) {
      if (c_[static_cast<std::size_t>(k)] == 0.0) continue;
      double tau = 0.0;
      for (int i = k; i < m_; ++i) tau += at(i, k) * b[static_cast<std::size_t>(i)];
      tau /= c_[static_cast<std::size_t>(k)];
      for (int i = k; i < m_; ++i) b[static_cast<std::size_t>(i)] -= tau * at(i, k);
    }
    std::vector<double> x(static_cast<std::size_t>(n_));
    for (int i = n_ - 1; i >= 0; --i) {
      double sum = b[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < n_; ++j) sum -= at(i, j) * x[static_cast<std::size_t>(j)];
      x[static_cast<std::size_t>(i)] = sum / rdiag_[static_cast<std::size_t>(i)];
    }
    return x;
  }

private:
  double& at(int r, int c) { return a_[static_cast<std::size_t>(r) * n_ + c]; }
  double at(int r, int c) const { return a_[static_cast<std::size_t>(r) * n_ + c]; }

  void factor() {
    for (int k = 0; k < n_; ++k) {
      double scale = 0.0;
      for (int i = k; i < m_; ++i) scale = std::max(scale, std::abs(at(i, k)));
      if (scale == 0.0) {
        c_[static_cast<std::size_t>(k)] = 0.0;
        rdiag_[static_cast<std::size_t>(k)] = 0.0;
        continue;
      }
      double sum = 0.0;
      for (int i = k; i < m_; ++i) {
        at(i, k) /= scale;
        sum += at(i, k) * at(i, k);
      }
      const double sigma = (at(k, k) >= 0.0 ? 1.0 : -1.0) * std::sqrt(sum);
      at(k, k) += sigma;
      c_[static_cast<std::size_t>(k)] = sigma * at(k, k);
      rdiag_[static_cast<std::size_t>(k)] = -scale * sigma;
      for (int j = k + 1; j < n_; ++j) {
        double tau = 0.0;
        for (int i = k; i < m_; ++i) tau += at(i, k) * at(i, j);
        tau /= c_[static_cast<std::size_t>(k)];
        for (int i = k; i < m_; ++i) at(i, j) -= tau * at(i, k);
      }
    }
  }

  int m_, n_;
  std::vector<double> a_;
  std::vector<double> c_;
  std::vector<double> rdiag_;
};

inline std::vector<double> lstsq(std::vector<double> a, int m, int n,
                                 std::vector<double> b) {
  return QrFactor(std::move(a), m, n).solve(std::move(b));
}

}  // namespace thermofuse
