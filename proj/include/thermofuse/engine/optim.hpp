#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "thermofuse/engine/tensor.hpp"
#include "thermofuse/errors.hpp"
#include "thermofuse/rng.hpp"

namespace thermofuse {

// Adam with bias correction. One moment pair per parameter, matched by
// position against the parameter list handed to adam_step.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<std::vector<double>> m, v;

  void reset(const std::vector<Parameter*>& params) {
    step = 0;
    m.assign(params.size(), {});
    v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i].assign(params[i]->tensor.count(), 0.0);
      v[i].assign(params[i]->tensor.count(), 0.0);
    }
  }
};

// One update over all parameters; gradients are consumed (zeroed) so the
// next backward pass starts clean.
inline void adam_step(const std::vector<Parameter*>& params, AdamState& state, double lr) {
  if (lr < 0.0) throw ConfigError("adam_step: learning rate must be >= 0");
  if (state.m.size() != params.size())
    throw InvariantError("adam_step: optimizer state does not match parameter list");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& w = params[p]->tensor.values();
    auto& g = params[p]->tensor.grad();
    auto& m = state.m[p];
    auto& v = state.v[p];
    if (m.size() != w.size())
      throw InvariantError("adam_step: moment shape mismatch for " + params[p]->name);
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
      g[i] = 0.0;
    }
  }
}

// Uniform on [-a, a] with a = sqrt(6 / (fan_in + fan_out)). For a conv
// kernel the fans are channels times kernel area.
inline Tensor glorot_uniform(Shape shape, int fan_in, int fan_out, Rng& rng) {
  if (fan_in < 1 || fan_out < 1)
    throw ConfigError("glorot_uniform: fans must be positive");
  const double a = std::sqrt(6.0 / (static_cast<double>(fan_in) + static_cast<double>(fan_out)));
  Tensor t = Tensor::zeros(shape);
  for (double& v : t.values()) v = rng.uniform(-a, a);
  return t;
}

inline Parameter make_param(std::string name, Shape shape, int fan_in, int fan_out,
                            Rng& rng) {
  Parameter p;
  p.name = std::move(name);
  p.fan_in = fan_in;
  p.fan_out = fan_out;
  p.tensor = glorot_uniform(shape, fan_in, fan_out, rng);
  return p;
}

}  // namespace thermofuse
