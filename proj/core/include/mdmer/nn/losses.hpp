#pragma once

#include <cmath>

#include "mdmer/nn/ops.hpp"

namespace mdmer::nn {

/// Binary cross entropy on a logit, stable form
/// max(z,0) - z*y + log(1 + exp(-|z|)). `target` must be 0 or 1.
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logit, int target) {
  if (target != 0 && target != 1) throw ValidationError("bce target must be 0 or 1");
  detail::require(logit.size() == 1, "bce_with_logits: scalar logit required");
  const double z = static_cast<double>(logit.value()[0]);
  const double y = target;
  const double loss = std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  auto ln = logit.handle();
  return detail::make_op<T>(
      "bce_with_logits", {1}, {static_cast<T>(loss)}, {ln}, [ln, z, y](detail::Node<T>& n) {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        const double sig = 1.0 / (1.0 + std::exp(-z));
        ln->grad[0] += n.grad[0] * static_cast<T>(sig - y);
      });
}

/// Cross entropy of a logit vector against a class index, in log-sum-exp form.
template <typename T>
Tensor<T> ce_with_logits(const Tensor<T>& logits, int target) {
  detail::require(logits.rank() <= 2, "ce_with_logits: vector of logits required");
  const std::size_t n = logits.size();
  if (target < 0 || static_cast<std::size_t>(target) >= n) {
    throw ValidationError("class index out of range");
  }
  const auto& x = logits.value();
  double m = static_cast<double>(x[0]);
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, static_cast<double>(x[i]));
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += std::exp(static_cast<double>(x[i]) - m);
  const double lse = m + std::log(sum);
  const double loss = lse - static_cast<double>(x[target]);
  auto ln = logits.handle();
  return detail::make_op<T>(
      "ce_with_logits", {1}, {static_cast<T>(loss)}, {ln},
      [ln, n, m, sum, target](detail::Node<T>& node) {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        const T g = node.grad[0];
        for (std::size_t i = 0; i < n; ++i) {
          const double p = std::exp(static_cast<double>(ln->value[i]) - m) / sum;
          ln->grad[i] += g * static_cast<T>(p - (static_cast<int>(i) == target ? 1.0 : 0.0));
        }
      });
}

}  // namespace mdmer::nn
