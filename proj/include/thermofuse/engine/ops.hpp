#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <tuple>
#include <vector>

#include "thermofuse/engine/tensor.hpp"
#include "thermofuse/errors.hpp"
#include "thermofuse/parallel.hpp"

namespace thermofuse {

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!(a.shape() == b.shape()))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  auto pa = a.node().get();
  auto pb = b.node().get();
  Tensor out = Tensor::op(a.shape(), {a.node(), b.node()}, [pa, pb](const TensorNode& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      pa->grad[i] += self.grad[i];
      pb->grad[i] += self.grad[i];
    }
  });
  auto& v = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = pa->value[i] + pb->value[i];
  debug_check_finite(v, "add");
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  auto pa = a.node().get();
  auto pb = b.node().get();
  Tensor out = Tensor::op(a.shape(), {a.node(), b.node()}, [pa, pb](const TensorNode& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      pa->grad[i] += self.grad[i];
      pb->grad[i] -= self.grad[i];
    }
  });
  auto& v = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = pa->value[i] - pb->value[i];
  debug_check_finite(v, "sub");
  return out;
}

// Elementwise product. One operand may have a single channel, in which case
// it broadcasts across the other's channels (attention maps gate feature
// stacks this way).
inline Tensor mul(const Tensor& a, const Tensor& b) {
  const Shape sa = a.shape(), sb = b.shape();
  const bool same = sa == sb;
  const bool bcast_b = !same && sb.c == 1 && sa.b == sb.b && sa.h == sb.h && sa.w == sb.w;
  const bool bcast_a = !same && sa.c == 1 && sa.b == sb.b && sa.h == sb.h && sa.w == sb.w;
  if (!same && !bcast_a && !bcast_b)
    throw ShapeError("mul: shapes " + sa.str() + " and " + sb.str() +
                     " neither match nor single-channel broadcast");
  const Tensor& wide = bcast_a ? b : a;
  const Tensor& narrow = bcast_a ? a : b;
  const Shape s = wide.shape();
  auto pw = wide.node().get();
  auto pn = narrow.node().get();
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  const std::size_t per_batch = static_cast<std::size_t>(s.c) * plane;
  const bool bcast = !same;

  Tensor out = Tensor::op(s, {wide.node(), narrow.node()},
                          [pw, pn, plane, per_batch, bcast, s](const TensorNode& self) {
    if (!bcast) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        pw->grad[i] += self.grad[i] * pn->value[i];
        pn->grad[i] += self.grad[i] * pw->value[i];
      }
      return;
    }
    for (int bi = 0; bi < s.b; ++bi)
      for (int c = 0; c < s.c; ++c) {
        const std::size_t off = static_cast<std::size_t>(bi) * per_batch +
                                static_cast<std::size_t>(c) * plane;
        const std::size_t noff = static_cast<std::size_t>(bi) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          pw->grad[off + i] += self.grad[off + i] * pn->value[noff + i];
          pn->grad[noff + i] += self.grad[off + i] * pw->value[off + i];
        }
      }
  });
  auto& v = out.values();
  if (!bcast) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = pw->value[i] * pn->value[i];
  } else {
    for (int bi = 0; bi < s.b; ++bi)
      for (int c = 0; c < s.c; ++c) {
        const std::size_t off = static_cast<std::size_t>(bi) * per_batch +
                                static_cast<std::size_t>(c) * plane;
        const std::size_t noff = static_cast<std::size_t>(bi) * plane;
        for (std::size_t i = 0; i < plane; ++i)
          v[off + i] = pw->value[off + i] * pn->value[noff + i];
      }
  }
  debug_check_finite(v, "mul");
  return out;
}

// y = scale * x + shift, elementwise with scalar coefficients.
inline Tensor affine(const Tensor& x, double scale, double shift) {
  auto px = x.node().get();
  Tensor out = Tensor::op(x.shape(), {x.node()}, [px, scale](const TensorNode& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += scale * self.grad[i];
  });
  auto& v = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = scale * px->value[i] + shift;
  debug_check_finite(v, "affine");
  return out;
}

// Gradient at exactly zero is zero.
inline Tensor relu(const Tensor& x) {
  auto px = x.node().get();
  Tensor out = Tensor::op(x.shape(), {x.node()}, [px](const TensorNode& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (px->value[i] > 0.0) px->grad[i] += self.grad[i];
  });
  auto& v = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::max(px->value[i], 0.0);
  return out;
}

namespace detail {

// Branch form never exponentiates a positive argument, so +-40 saturates
// cleanly instead of overflowing.
inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

inline Tensor sigmoid(const Tensor& x) {
  auto px = x.node().get();
  Tensor out = Tensor::op(x.shape(), {x.node()}, [px](const TensorNode& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.value[i];
      px->grad[i] += self.grad[i] * y * (1.0 - y);
    }
  });
  auto& v = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = detail::stable_sigmoid(px->value[i]);
  debug_check_finite(v, "sigmoid");
  return out;
}

// Cross-correlation (no kernel flip) with zero padding that preserves the
// spatial size. kernel is (C_out, C_in, k, k) with k odd, bias (1, C_out, 1, 1).
inline Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                     int stride = 1) {
  const Shape sx = x.shape(), sk = kernel.shape(), sb = bias.shape();
  if (stride != 1) throw ConfigError("conv2d: only stride 1 is supported");
  if (sk.h != sk.w || sk.h % 2 == 0)
    throw ShapeError("conv2d: kernel must be square with odd size, got " + sk.str());
  if (sk.c != sx.c)
    throw ShapeError("conv2d: kernel expects " + std::to_string(sk.c) + " input channels, got " +
                     std::to_string(sx.c));
  if (!(sb == Shape{1, sk.b, 1, 1}))
    throw ShapeError("conv2d: bias shape " + sb.str() + " does not match " +
                     std::to_string(sk.b) + " output channels");

  const int B = sx.b, Cin = sx.c, H = sx.h, W = sx.w;
  const int Cout = sk.b, K = sk.h, P = K / 2;
  const Shape so{B, Cout, H, W};
  auto px = x.node().get();
  auto pk = kernel.node().get();
  auto pb = bias.node().get();
  const std::size_t plane = static_cast<std::size_t>(H) * W;

  // All three loops below stream whole row segments per kernel tap instead of
  // gathering taps per output pixel: the inner loops are contiguous
  // multiply-accumulates the compiler can vectorize. Each output element still
  // accumulates its taps in ascending (ci, dy, dx) order.
  Tensor out = Tensor::op(
      so, {x.node(), kernel.node(), bias.node()},
      [px, pk, pb, B, Cin, Cout, H, W, K, P, plane](const TensorNode& self) {
        // Input gradient: disjoint (b, ci) slices per task.
        parallel_for(static_cast<std::int64_t>(B) * Cin, [&](std::int64_t t) {
          const int b = static_cast<int>(t) / Cin, ci = static_cast<int>(t) % Cin;
          double* gin = px->grad.data() + (static_cast<std::size_t>(b) * Cin + ci) * plane;
          for (int co = 0; co < Cout; ++co) {
            const double* gout =
                self.grad.data() + (static_cast<std::size_t>(b) * Cout + co) * plane;
            const double* kw = pk->value.data() + (static_cast<std::size_t>(co) * Cin + ci) *
                                                      static_cast<std::size_t>(K) * K;
            for (int dy = 0; dy < K; ++dy) {
              const int y0 = std::max(0, P - dy), y1 = std::min(H, H + P - dy);
              for (int dx = 0; dx < K; ++dx) {
                const double w = kw[static_cast<std::size_t>(dy) * K + dx];
                const int x0 = std::max(0, P - dx), x1 = std::min(W, W + P - dx);
                const int n = x1 - x0;
                for (int y = y0; y < y1; ++y) {
                  const double* src = gout + static_cast<std::size_t>(y) * W + x0;
                  double* dst =
                      gin + static_cast<std::size_t>(y + dy - P) * W + (x0 + dx - P);
                  for (int i = 0; i < n; ++i) dst[i] += w * src[i];
                }
              }
            }
          }
        });
        // Kernel gradient: disjoint (co, ci) slices per task.
        parallel_for(static_cast<std::int64_t>(Cout) * Cin, [&](std::int64_t t) {
          const int co = static_cast<int>(t) / Cin, ci = static_cast<int>(t) % Cin;
          double* gk = pk->grad.data() + (static_cast<std::size_t>(co) * Cin + ci) *
                                             static_cast<std::size_t>(K) * K;
          for (int b = 0; b < B; ++b) {
            const double* gout =
                self.grad.data() + (static_cast<std::size_t>(b) * Cout + co) * plane;
            const double* in = px->value.data() + (static_cast<std::size_t>(b) * Cin + ci) * plane;
            for (int dy = 0; dy < K; ++dy) {
              const int y0 = std::max(0, P - dy), y1 = std::min(H, H + P - dy);
              for (int dx = 0; dx < K; ++dx) {
                const int x0 = std::max(0, P - dx), x1 = std::min(W, W + P - dx);
                const int n = x1 - x0;
                double acc = 0.0;
                for (int y = y0; y < y1; ++y) {
                  const double* g = gout + static_cast<std::size_t>(y) * W + x0;
                  const double* s =
                      in + static_cast<std::size_t>(y + dy - P) * W + (x0 + dx - P);
                  for (int i = 0; i < n; ++i) acc += g[i] * s[i];
                }
                gk[static_cast<std::size_t>(dy) * K + dx] += acc;
              }
            }
          }
        });
        // Bias gradient.
        parallel_for(Cout, [&](std::int64_t co) {
          double acc = 0.0;
          for (int b = 0; b < B; ++b) {
            const double* gout =
                self.grad.data() + (static_cast<std::size_t>(b) * Cout + co) * plane;
            for (std::size_t i = 0; i < plane; ++i) acc += gout[i];
          }
          pb->grad[static_cast<std::size_t>(co)] += acc;
        });
      });

  auto& v = out.values();
  parallel_for(static_cast<std::int64_t>(B) * Cout, [&](std::int64_t t) {
    const int b = static_cast<int>(t) / Cout, co = static_cast<int>(t) % Cout;
    double* dst = v.data() + (static_cast<std::size_t>(b) * Cout + co) * plane;
    const double bias_v = pb->value[static_cast<std::size_t>(co)];
    for (std::size_t i = 0; i < plane; ++i) dst[i] = bias_v;
    for (int ci = 0; ci < Cin; ++ci) {
      const double* in = px->value.data() + (static_cast<std::size_t>(b) * Cin + ci) * plane;
      const double* kw = pk->value.data() + (static_cast<std::size_t>(co) * Cin + ci) *
                                                static_cast<std::size_t>(K) * K;
      for (int dy = 0; dy < K; ++dy) {
        const int y0 = std::max(0, P - dy), y1 = std::min(H, H + P - dy);
        for (int dx = 0; dx < K; ++dx) {
          const double w = kw[static_cast<std::size_t>(dy) * K + dx];
          const int x0 = std::max(0, P - dx), x1 = std::min(W, W + P - dx);
          const int n = x1 - x0;
          for (int y = y0; y < y1; ++y) {
            const double* src =
                in + static_cast<std::size_t>(y + dy - P) * W + (x0 + dx - P);
            double* row = dst + static_cast<std::size_t>(y) * W + x0;
            for (int i = 0; i < n; ++i) row[i] += w * src[i];
          }
        }
      }
    }
  });
  debug_check_finite(v, "conv2d");
  return out;
}

// 2x2 window, stride 2. Gradient routes to the window argmax; ties go to the
// first element in row-major order so results never depend on thread count.
inline Tensor max_pool2(const Tensor& x) {
  const Shape sx = x.shape();
  if (sx.h % 2 != 0 || sx.w % 2 != 0)
    throw ShapeError("max_pool2: spatial dims must be even, got " + sx.str());
  const int B = sx.b, C = sx.c, H = sx.h, W = sx.w, Ho = H / 2, Wo = W / 2;
  const Shape so{B, C, Ho, Wo};
  auto px = x.node().get();

  auto argmax = std::make_shared<std::vector<std::size_t>>(so.count());
  Tensor out = Tensor::op(so, {x.node()}, [px, argmax](const TensorNode& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      px->grad[(*argmax)[i]] += self.grad[i];
  });

  auto& v = out.values();
  const std::size_t in_plane = static_cast<std::size_t>(H) * W;
  const std::size_t out_plane = static_cast<std::size_t>(Ho) * Wo;
  parallel_for(static_cast<std::int64_t>(B) * C, [&](std::int64_t t) {
    const std::size_t in_off = static_cast<std::size_t>(t) * in_plane;
    const std::size_t out_off = static_cast<std::size_t>(t) * out_plane;
    for (int y = 0; y < Ho; ++y)
      for (int xx = 0; xx < Wo; ++xx) {
        std::size_t best = in_off + static_cast<std::size_t>(2 * y) * W + 2 * xx;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t idx =
                in_off + static_cast<std::size_t>(2 * y + dy) * W + (2 * xx + dx);
            if (px->value[idx] > px->value[best]) best = idx;
          }
        const std::size_t o = out_off + static_cast<std::size_t>(y) * Wo + xx;
        v[o] = px->value[best];
        (*argmax)[o] = best;
      }
  });
  return out;
}

// Doubles height and width, align-corners-false: output pixel centers sit at
// quarter offsets, giving 3/4-1/4 interpolation weights with edge clamping.
inline Tensor upsample2_bilinear(const Tensor& x) {
  const Shape sx = x.shape();
  const int B = sx.b, C = sx.c, H = sx.h, W = sx.w, Ho = 2 * H, Wo = 2 * W;
  const Shape so{B, C, Ho, Wo};
  auto px = x.node().get();

  // Per output row/col: clamped source pair and weight of the lower index.
  auto mix = [](int out_i, int n) {
    const double s = (out_i + 0.5) / 2.0 - 0.5;
    const int lo = std::clamp(static_cast<int>(std::floor(s)), 0, n - 1);
    const int hi = std::min(lo + 1, n - 1);
    double w_lo = 1.0 - (s - std::floor(s));
    if (s < 0.0) w_lo = 1.0;  // clamped at the leading edge
    return std::tuple<int, int, double>(lo, hi, w_lo);
  };

  Tensor out = Tensor::op(so, {x.node()}, [px, B, C, H, W, Ho, Wo, mix](const TensorNode& self) {
    const std::size_t in_plane = static_cast<std::size_t>(H) * W;
    const std::size_t out_plane = static_cast<std::size_t>(Ho) * Wo;
    parallel_for(static_cast<std::int64_t>(B) * C, [&](std::int64_t t) {
      double* gin = px->grad.data() + static_cast<std::size_t>(t) * in_plane;
      const double* gout = self.grad.data() + static_cast<std::size_t>(t) * out_plane;
      for (int y = 0; y < Ho; ++y) {
        const auto [y0, y1, wy] = mix(y, H);
        for (int xx = 0; xx < Wo; ++xx) {
          const auto [x0, x1, wx] = mix(xx, W);
          const double g = gout[static_cast<std::size_t>(y) * Wo + xx];
          gin[static_cast<std::size_t>(y0) * W + x0] += g * wy * wx;
          gin[static_cast<std::size_t>(y0) * W + x1] += g * wy * (1.0 - wx);
          gin[static_cast<std::size_t>(y1) * W + x0] += g * (1.0 - wy) * wx;
          gin[static_cast<std::size_t>(y1) * W + x1] += g * (1.0 - wy) * (1.0 - wx);
        }
      }
    });
  });

  auto& v = out.values();
  const std::size_t in_plane = static_cast<std::size_t>(H) * W;
  const std::size_t out_plane = static_cast<std::size_t>(Ho) * Wo;
  parallel_for(static_cast<std::int64_t>(B) * C, [&](std::int64_t t) {
    const double* src = px->value.data() + static_cast<std::size_t>(t) * in_plane;
    double* dst = v.data() + static_cast<std::size_t>(t) * out_plane;
    for (int y = 0; y < Ho; ++y) {
      const auto [y0, y1, wy] = mix(y, H);
      for (int xx = 0; xx < Wo; ++xx) {
        const auto [x0, x1, wx] = mix(xx, W);
        dst[static_cast<std::size_t>(y) * Wo + xx] =
            wy * (wx * src[static_cast<std::size_t>(y0) * W + x0] +
                  (1.0 - wx) * src[static_cast<std::size_t>(y0) * W + x1]) +
            (1.0 - wy) * (wx * src[static_cast<std::size_t>(y1) * W + x0] +
                          (1.0 - wx) * src[static_cast<std::size_t>(y1) * W + x1]);
      }
    }
  });
  debug_check_finite(v, "upsample2_bilinear");
  return out;
}

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Shape sa = a.shape(), sb = b.shape();
  if (sa.b != sb.b || sa.h != sb.h || sa.w != sb.w)
    throw ShapeError("concat_channels: shapes " + sa.str() + " and " + sb.str() +
                     " differ outside the channel dim");
  const Shape so{sa.b, sa.c + sb.c, sa.h, sa.w};
  auto pa = a.node().get();
  auto pb = b.node().get();
  const std::size_t plane = static_cast<std::size_t>(sa.h) * sa.w;
  const std::size_t a_batch = static_cast<std::size_t>(sa.c) * plane;
  const std::size_t b_batch = static_cast<std::size_t>(sb.c) * plane;
  const std::size_t o_batch = a_batch + b_batch;

  Tensor out = Tensor::op(so, {a.node(), b.node()},
                          [pa, pb, a_batch, b_batch, o_batch, so](const TensorNode& self) {
    for (int bi = 0; bi < so.b; ++bi) {
      const double* g = self.grad.data() + static_cast<std::size_t>(bi) * o_batch;
      double* ga = pa->grad.data() + static_cast<std::size_t>(bi) * a_batch;
      double* gb = pb->grad.data() + static_cast<std::size_t>(bi) * b_batch;
      for (std::size_t i = 0; i < a_batch; ++i) ga[i] += g[i];
      for (std::size_t i = 0; i < b_batch; ++i) gb[i] += g[a_batch + i];
    }
  });
  auto& v = out.values();
  for (int bi = 0; bi < so.b; ++bi) {
    double* dst = v.data() + static_cast<std::size_t>(bi) * o_batch;
    std::copy_n(pa->value.data() + static_cast<std::size_t>(bi) * a_batch, a_batch, dst);
    std::copy_n(pb->value.data() + static_cast<std::size_t>(bi) * b_batch, b_batch,
                dst + a_batch);
  }
  return out;
}

inline Tensor sum(const Tensor& x) {
  auto px = x.node().get();
  Tensor out = Tensor::op(kScalarShape, {x.node()}, [px](const TensorNode& self) {
    const double g = self.grad[0];
    for (double& gi : px->grad) gi += g;
  });
  double acc = 0.0;
  for (double v : px->value) acc += v;
  out.values()[0] = acc;
  debug_check_finite(out.values(), "sum");
  return out;
}

// Pixel-averaged multiclass cross entropy on raw logits (B, C, H, W) against
// integer labels in row-major (b, y, x) order, log-sum-exp stabilized.
inline Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const Shape s = logits.shape();
  const std::size_t pixels = static_cast<std::size_t>(s.b) * s.h * s.w;
  if (labels.size() != pixels)
    throw ShapeError("softmax_cross_entropy: expected " + std::to_string(pixels) + " labels, got " +
                     std::to_string(labels.size()));
  for (int l : labels)
    if (l < 0 || l >= s.c)
      throw ValueError("softmax_cross_entropy: class label " + std::to_string(l) +
                       " outside [0, " + std::to_string(s.c) + ")");
  auto px = logits.node().get();
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  auto logit_at = [plane, s](const std::vector<double>& buf, int b, int c, std::size_t i) {
    return buf[(static_cast<std::size_t>(b) * s.c + c) * plane + i];
  };

  Tensor out = Tensor::op(
      kScalarShape, {logits.node()}, [px, labels, plane, s, pixels, logit_at](const TensorNode& self) {
        const double g = self.grad[0] / static_cast<double>(pixels);
        for (int b = 0; b < s.b; ++b)
          for (std::size_t i = 0; i < plane; ++i) {
            double m = logit_at(px->value, b, 0, i);
            for (int c = 1; c < s.c; ++c) m = std::max(m, logit_at(px->value, b, c, i));
            double z = 0.0;
            for (int c = 0; c < s.c; ++c) z += std::exp(logit_at(px->value, b, c, i) - m);
            const int want = labels[static_cast<std::size_t>(b) * plane + i];
            for (int c = 0; c < s.c; ++c) {
              const double p = std::exp(logit_at(px->value, b, c, i) - m) / z;
              px->grad[(static_cast<std::size_t>(b) * s.c + c) * plane + i] +=
                  g * (p - (c == want ? 1.0 : 0.0));
            }
          }
      });

  double total = 0.0;
  for (int b = 0; b < s.b; ++b)
    for (std::size_t i = 0; i < plane; ++i) {
      double m = logit_at(px->value, b, 0, i);
      for (int c = 1; c < s.c; ++c) m = std::max(m, logit_at(px->value, b, c, i));
      double z = 0.0;
      for (int c = 0; c < s.c; ++c) z += std::exp(logit_at(px->value, b, c, i) - m);
      const int want = labels[static_cast<std::size_t>(b) * plane + i];
      total += m + std::log(z) - logit_at(px->value, b, want, i);
    }
  out.values()[0] = total / static_cast<double>(pixels);
  debug_check_finite(out.values(), "softmax_cross_entropy");
  return out;
}

// Pixel-averaged binary cross entropy in the fused logit form
// max(z, 0) - z t + log(1 + exp(-|z|)), stable for any magnitude.
inline Tensor bce_with_logits(const Tensor& logits, const std::vector<double>& targets) {
  const Shape s = logits.shape();
  if (targets.size() != s.count())
    throw ShapeError("bce_with_logits: target count mismatch");
  for (double t : targets)
    if (!(t >= 0.0 && t <= 1.0))
      throw ValueError("bce_with_logits: targets must lie in [0, 1]");
  auto px = logits.node().get();
  const std::size_t n = s.count();

  Tensor out = Tensor::op(kScalarShape, {logits.node()}, [px, targets, n](const TensorNode& self) {
    const double g = self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      px->grad[i] += g * (detail::stable_sigmoid(px->value[i]) - targets[i]);
  });
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = px->value[i];
    total += std::max(z, 0.0) - z * targets[i] + std::log1p(std::exp(-std::abs(z)));
  }
  out.values()[0] = total / static_cast<double>(n);
  debug_check_finite(out.values(), "bce_with_logits");
  return out;
}

// Pixel-averaged absolute error; subgradient 0 where pred equals target.
inline Tensor l1_loss(const Tensor& pred, const std::vector<double>& targets) {
  const Shape s = pred.shape();
  if (targets.size() != s.count()) throw ShapeError("l1_loss: target count mismatch");
  auto px = pred.node().get();
  const std::size_t n = s.count();

  Tensor out = Tensor::op(kScalarShape, {pred.node()}, [px, targets, n](const TensorNode& self) {
    const double g = self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = px->value[i] - targets[i];
      px->grad[i] += d > 0.0 ? g : (d < 0.0 ? -g : 0.0);
    }
  });
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += std::abs(px->value[i] - targets[i]);
  out.values()[0] = total / static_cast<double>(n);
  debug_check_finite(out.values(), "l1_loss");
  return out;
}

}  // namespace thermofuse
