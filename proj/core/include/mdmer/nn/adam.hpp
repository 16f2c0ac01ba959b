#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "mdmer/nn/tensor.hpp"

namespace mdmer::nn {

/// Adam with bias correction. Moment buffers are laid out per parameter in
/// the order of the first step's parameter list, which must stay stable.
template <typename T>
class AdamOptimizer {
 public:
  explicit AdamOptimizer(T learning_rate, T beta1 = T(0.9), T beta2 = T(0.999),
                         T epsilon = T(1e-8))
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

  std::uint64_t step_count() const { return step_; }

  void step(std::span<Tensor<T>> params) {
    if (slots_.empty()) {
      slots_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        slots_[i].m.assign(params[i].size(), T(0));
        slots_[i].v.assign(params[i].size(), T(0));
      }
    }
    if (slots_.size() != params.size()) {
      throw ShapeError("adam: parameter list changed between steps");
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(beta1_), static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(static_cast<double>(beta2_), static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& p = params[i];
      if (slots_[i].m.size() != p.size()) throw ShapeError("adam: parameter shape changed");
      auto& value = p.value();
      auto& grad = p.grad();
      auto& m = slots_[i].m;
      auto& v = slots_[i].v;
      for (std::size_t j = 0; j < value.size(); ++j) {
        const T g = grad[j];
        m[j] = beta1_ * m[j] + (T(1) - beta1_) * g;
        v[j] = beta2_ * v[j] + (T(1) - beta2_) * g * g;
        const T mhat = m[j] / static_cast<T>(bc1);
        const T vhat = v[j] / static_cast<T>(bc2);
        value[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  void zero_grad(std::span<Tensor<T>> params) {
    for (auto& p : params) p.zero_grad();
  }

 private:
  struct Slot {
    std::vector<T> m, v;
  };
  T lr_, beta1_, beta2_, eps_;
  std::uint64_t step_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace mdmer::nn
