#pragma once

#include <cmath>
#include <string_view>

#include "mdmer/nn/rng.hpp"
#include "mdmer/nn/tensor.hpp"

namespace mdmer::nn {

/// Fill with U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
template <typename T>
void xavier_uniform_fill(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out, SplitMix64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.value()) v = static_cast<T>(rng.uniform(-bound, bound));
}

/// Fill with U(-a, a), a = sqrt(6 / fan_in), the ReLU-gain Kaiming bound.
template <typename T>
void kaiming_uniform_fill(Tensor<T>& t, std::size_t fan_in, SplitMix64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.value()) v = static_cast<T>(rng.uniform(-bound, bound));
}

/// Per-tensor generator keyed by (master seed, tensor name), so
/// initialization does not depend on construction order.
inline SplitMix64 named_rng(std::uint64_t master_seed, std::string_view name) {
  return SplitMix64(hash_mix(master_seed, hash_name(name)));
}

}  // namespace mdmer::nn
