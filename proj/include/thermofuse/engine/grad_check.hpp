#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "thermofuse/engine/tensor.hpp"
#include "thermofuse/rng.hpp"

namespace thermofuse {

// Central-difference probe of a scalar-valued forward closure. Each
// parameter contributes up to probes_per_param randomly chosen coordinates
// (all of them if it is small). Returns the max over probes of
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
inline double grad_check(const std::function<Tensor()>& forward,
                         const std::vector<Parameter*>& params, double eps = 1e-5,
                         int probes_per_param = 64, std::uint64_t seed = 0) {
  for (Parameter* p : params) p->tensor.zero_grad();
  forward().backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->tensor.grad());
  for (Parameter* p : params) p->tensor.zero_grad();

  Rng rng(mix_seed(seed, 0x67726164));
  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& w = params[pi]->tensor.values();
    std::vector<std::size_t> coords(w.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > static_cast<std::size_t>(probes_per_param)) {
      rng.shuffle(coords);
      coords.resize(static_cast<std::size_t>(probes_per_param));
    }
    for (std::size_t i : coords) {
      const double keep = w[i];
      w[i] = keep + eps;
      const double hi = forward().item();
      w[i] = keep - eps;
      const double lo = forward().item();
      w[i] = keep;
      const double numeric = (hi - lo) / (2.0 * eps);
      const double a = analytic[pi][i];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace thermofuse
