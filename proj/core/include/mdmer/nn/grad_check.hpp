#pragma once

#include <cmath>
#include <cstdint>
#include <functional>

#include "mdmer/nn/rng.hpp"
#include "mdmer/nn/tensor.hpp"

namespace mdmer::nn {

struct GradCheckOptions {
  double step = 1e-4;
  /// Coordinates checked per tensor; large tensors are subsampled
  /// deterministically.
  std::size_t max_coords = static_cast<std::size_t>(-1);
  std::uint64_t sample_seed = 17;
};

/// Compare the reverse-mode gradient of a scalar function against central
/// finite differences on `x`; returns the maximum relative error. Meant to
/// run on double tensors.
template <typename T>
double grad_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, Tensor<T> x,
                  const GradCheckOptions& opts = {}) {
  x.zero_grad();
  Tensor<T> y = f(x);
  y.backward();
  std::vector<T> analytic = x.grad();

  std::vector<std::size_t> coords;
  if (x.size() <= opts.max_coords) {
    coords.resize(x.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  } else {
    SplitMix64 rng(opts.sample_seed);
    for (std::size_t i = 0; i < opts.max_coords; ++i) {
      coords.push_back(static_cast<std::size_t>(rng.below(x.size())));
    }
  }

  const T h = static_cast<T>(opts.step);
  double max_err = 0.0;
  for (std::size_t i : coords) {
    const T saved = x.value()[i];
    x.value()[i] = saved + h;
    const double plus = static_cast<double>(f(x).item());
    x.value()[i] = saved - h;
    const double minus = static_cast<double>(f(x).item());
    x.value()[i] = saved;
    const double numeric = (plus - minus) / (2.0 * static_cast<double>(h));
    const double a = static_cast<double>(analytic[i]);
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-4});
    max_err = std::max(max_err, std::abs(a - numeric) / denom);
  }
  return max_err;
}

}  // namespace mdmer::nn
