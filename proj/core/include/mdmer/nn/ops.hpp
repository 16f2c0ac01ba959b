#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "mdmer/nn/rng.hpp"
#include "mdmer/nn/tensor.hpp"

namespace mdmer::nn {

namespace detail {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<const EMat<T>> map2d(const Node<T>& n, std::size_t rows, std::size_t cols) {
  return {n.value.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

template <typename T>
Eigen::Map<EMat<T>> map2d_grad(Node<T>& n, std::size_t rows, std::size_t cols) {
  n.ensure_grad();
  return {n.grad.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

inline void require(bool cond, const char* msg) {
  if (!cond) throw ShapeError(msg);
}

// ---------------------------------------------------------------------------
// Order-invariant summation.
//
// Sums over the sequence axis inside attention are accumulated in 64-bit
// fixed point so the result depends only on the multiset of addends, not on
// their order. This is what makes encoder layers permutation-equivariant at
// the bit level. Quantization error is below 2^-40 relative for realistic
// sequence lengths.
// ---------------------------------------------------------------------------

inline double fixed_point_scale(double bound, std::size_t terms) {
  if (!(bound > 0.0)) return 0.0;
  int exp = 0;
  std::frexp(bound, &exp);  // bound < 2^exp
  const int nbits = std::bit_width(terms + 1);
  return std::ldexp(1.0, 61 - exp - nbits);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and shape ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(), "add: shape mismatch");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  auto an = a.handle(), bn = b.handle();
  return detail::make_op<T>(
      "add", a.shape(), std::move(out), {an, bn}, [an, bn](detail::Node<T>& n) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (std::size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] += n.grad[i];
        }
      });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * factor;
  auto an = a.handle();
  return detail::make_op<T>(
      "scale", a.shape(), std::move(out), {an}, [an, factor](detail::Node<T>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += factor * n.grad[i];
      });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(), "mul: shape mismatch");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  auto an = a.handle(), bn = b.handle();
  return detail::make_op<T>(
      "mul", a.shape(), std::move(out), {an, bn}, [an, bn](detail::Node<T>& n) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (std::size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] += n.grad[i] * an->value[i];
        }
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] > T(0) ? a.value()[i] : T(0);
  auto an = a.handle();
  return detail::make_op<T>(
      "relu", a.shape(), std::move(out), {an}, [an](detail::Node<T>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
          if (an->value[i] > T(0)) an->grad[i] += n.grad[i];
        }
      });
}

/// Broadcast-add a length-d bias to every row of an [n x d] matrix.
template <typename T>
Tensor<T> add_rowwise(const Tensor<T>& a, const Tensor<T>& bias) {
  detail::require(a.rank() == 2 && bias.size() == a.dim(1), "add_rowwise: shape mismatch");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<T> out(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out[r * cols + c] = a.value()[r * cols + c] + bias.value()[c];
    }
  }
  auto an = a.handle(), bn = bias.handle();
  return detail::make_op<T>(
      "add_rowwise", a.shape(), std::move(out), {an, bn},
      [an, bn, rows, cols](detail::Node<T>& n) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (std::size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) bn->grad[c] += n.grad[r * cols + c];
          }
        }
      });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, std::vector<std::size_t> shape) {
  detail::require(detail::shape_product(shape) == a.size(), "reshape: element count mismatch");
  auto an = a.handle();
  std::vector<T> out = a.value();
  return detail::make_op<T>(
      "reshape", std::move(shape), std::move(out), {an}, [an](detail::Node<T>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
      });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require(a.rank() == 2, "transpose: rank-2 tensor required");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<T> out(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = a.value()[r * cols + c];
  }
  auto an = a.handle();
  return detail::make_op<T>(
      "transpose", {cols, rows}, std::move(out), {an}, [an, rows, cols](detail::Node<T>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) an->grad[r * cols + c] += n.grad[c * rows + r];
        }
      });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  detail::require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t rows = parts.front().dim(0);
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require(p.rank() == 2 && p.dim(0) == rows, "concat_cols: row count mismatch");
    total += p.dim(1);
  }
  std::vector<T> out(rows * total);
  std::size_t col0 = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.dim(1);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(p.value().data() + r * c, c, out.data() + r * total + col0);
    }
    col0 += c;
  }
  std::vector<std::shared_ptr<detail::Node<T>>> handles;
  for (const auto& p : parts) handles.push_back(p.handle());
  return detail::make_op<T>(
      "concat_cols", {rows, total}, std::move(out), handles,
      [handles, rows, total](detail::Node<T>& n) {
        std::size_t col0 = 0;
        for (const auto& h : handles) {
          const std::size_t c = h->shape[1];
          if (h->requires_grad) {
            h->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t j = 0; j < c; ++j) {
                h->grad[r * c + j] += n.grad[r * total + col0 + j];
              }
            }
          }
          col0 += c;
        }
      });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t first, std::size_t count) {
  detail::require(a.rank() == 2 && first + count <= a.dim(1), "slice_cols: out of range");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<T> out(rows * count);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.value().data() + r * cols + first, count, out.data() + r * count);
  }
  auto an = a.handle();
  return detail::make_op<T>(
      "slice_cols", {rows, count}, std::move(out), {an},
      [an, rows, cols, first, count](detail::Node<T>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < count; ++j) {
            an->grad[r * cols + first + j] += n.grad[r * count + j];
          }
        }
      });
}

/// Mean over the row (sequence) axis: [n x d] -> [1 x d].
template <typename T>
Tensor<T> mean_rows(const Tensor<T>& a) {
  detail::require(a.rank() == 2 && a.dim(0) > 0, "mean_rows: non-empty rank-2 tensor required");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<T> out(cols, T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c] += a.value()[r * cols + c];
  }
  const T inv = T(1) / static_cast<T>(rows);
  for (auto& v : out) v *= inv;
  auto an = a.handle();
  return detail::make_op<T>(
      "mean_rows", {1, cols}, std::move(out), {an}, [an, rows, cols, inv](detail::Node<T>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) an->grad[r * cols + c] += n.grad[c] * inv;
        }
      });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  T acc = T(0);
  for (T v : a.value()) acc += v;
  auto an = a.handle();
  return detail::make_op<T>(
      "sum_all", {1}, {acc}, {an}, [an](detail::Node<T>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (auto& g : an->grad) g += n.grad[0];
      });
}

// ---------------------------------------------------------------------------
// Matrix product
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.rank() == 2 && b.rank() == 2, "matmul: rank-2 tensors required");
  detail::require(a.dim(1) == b.dim(0), "matmul: inner dimensions disagree");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n);
  {
    auto A = detail::map2d(*a.node(), m, k);
    auto B = detail::map2d(*b.node(), k, n);
    Eigen::Map<detail::EMat<T>> C(out.data(), static_cast<Eigen::Index>(m),
                                  static_cast<Eigen::Index>(n));
    C.noalias() = A * B;
  }
  auto an = a.handle(), bn = b.handle();
  return detail::make_op<T>(
      "matmul", {m, n}, std::move(out), {an, bn}, [an, bn, m, k, n](detail::Node<T>& node) {
        Eigen::Map<const detail::EMat<T>> G(node.grad.data(), static_cast<Eigen::Index>(m),
                                            static_cast<Eigen::Index>(n));
        if (an->requires_grad) {
          auto B = detail::map2d(*bn, k, n);
          detail::map2d_grad(*an, m, k).noalias() += G * B.transpose();
        }
        if (bn->requires_grad) {
          auto A = detail::map2d(*an, m, k);
          detail::map2d_grad(*bn, k, n).noalias() += A.transpose() * G;
        }
      });
}

// ---------------------------------------------------------------------------
// Softmax and attention reductions
// ---------------------------------------------------------------------------

/// Row softmax with a max-subtracted, order-invariant normalizer.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  detail::require(a.rank() == 2 && a.dim(1) > 0, "softmax_rows: non-empty rows required");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<T> out(a.size());
  const double scale_fp = detail::fixed_point_scale(1.0, cols);
  std::vector<double> e(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = a.value().data() + r * cols;
    double m = static_cast<double>(x[0]);
    for (std::size_t c = 1; c < cols; ++c) m = std::max(m, static_cast<double>(x[c]));
    std::int64_t acc = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      e[c] = std::exp(static_cast<double>(x[c]) - m);
      acc += std::llround(e[c] * scale_fp);
    }
    const double z = static_cast<double>(acc) / scale_fp;
    T* y = out.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) y[c] = static_cast<T>(e[c] / z);
  }
  auto an = a.handle();
  return detail::make_op<T>(
      "softmax_rows", a.shape(), std::move(out), {an}, [an, rows, cols](detail::Node<T>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          const T* y = n.value.data() + r * cols;
          const T* g = n.grad.data() + r * cols;
          T dot = T(0);
          for (std::size_t c = 0; c < cols; ++c) dot += g[c] * y[c];
          T* gx = an->grad.data() + r * cols;
          for (std::size_t c = 0; c < cols; ++c) gx[c] += y[c] * (g[c] - dot);
        }
      });
}

/// Product of attention weights [n_q x n_k] with values [n_k x d_v], summed
/// over keys in fixed point so the forward pass is invariant to key order.
template <typename T>
Tensor<T> attention_apply(const Tensor<T>& weights, const Tensor<T>& values) {
  detail::require(weights.rank() == 2 && values.rank() == 2, "attention_apply: rank-2 required");
  detail::require(weights.dim(1) == values.dim(0), "attention_apply: key counts disagree");
  const std::size_t nq = weights.dim(0), nk = weights.dim(1), dv = values.dim(1);

  std::vector<double> row_max(nq, 0.0), col_max(dv, 0.0);
  for (std::size_t i = 0; i < nq; ++i) {
    for (std::size_t j = 0; j < nk; ++j) {
      row_max[i] = std::max(row_max[i], std::abs(static_cast<double>(weights.value()[i * nk + j])));
    }
  }
  for (std::size_t j = 0; j < nk; ++j) {
    for (std::size_t c = 0; c < dv; ++c) {
      col_max[c] = std::max(col_max[c], std::abs(static_cast<double>(values.value()[j * dv + c])));
    }
  }

  std::vector<T> out(nq * dv, T(0));
  for (std::size_t i = 0; i < nq; ++i) {
    const T* w = weights.value().data() + i * nk;
    for (std::size_t c = 0; c < dv; ++c) {
      const double s = detail::fixed_point_scale(row_max[i] * col_max[c], nk);
      if (s == 0.0) continue;
      std::int64_t acc = 0;
      for (std::size_t j = 0; j < nk; ++j) {
        acc += std::llround(static_cast<double>(w[j]) *
                            static_cast<double>(values.value()[j * dv + c]) * s);
      }
      out[i * dv + c] = static_cast<T>(static_cast<double>(acc) / s);
    }
  }
  auto wn = weights.handle(), vn = values.handle();
  return detail::make_op<T>(
      "attention_apply", {nq, dv}, std::move(out), {wn, vn},
      [wn, vn, nq, nk, dv](detail::Node<T>& node) {
        Eigen::Map<const detail::EMat<T>> G(node.grad.data(), static_cast<Eigen::Index>(nq),
                                            static_cast<Eigen::Index>(dv));
        if (wn->requires_grad) {
          auto V = detail::map2d(*vn, nk, dv);
          detail::map2d_grad(*wn, nq, nk).noalias() += G * V.transpose();
        }
        if (vn->requires_grad) {
          auto W = detail::map2d(*wn, nq, nk);
          detail::map2d_grad(*vn, nk, dv).noalias() += W.transpose() * G;
        }
      });
}

// ---------------------------------------------------------------------------
// Convolution stack
// ---------------------------------------------------------------------------

/// 3x3 convolution, stride 1, zero padding 1, via im2col + GEMM.
/// x: [C_in, H, W], w: [C_out, C_in, 3, 3], bias: [C_out] -> [C_out, H, W].
template <typename T>
Tensor<T> conv2d_3x3(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  detail::require(x.rank() == 3, "conv2d: input must be [C,H,W]");
  detail::require(w.rank() == 4 && w.dim(2) == 3 && w.dim(3) == 3, "conv2d: kernel must be 3x3");
  detail::require(w.dim(1) == x.dim(0), "conv2d: channel mismatch");
  detail::require(bias.size() == w.dim(0), "conv2d: bias size mismatch");
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2), cout = w.dim(0);
  const std::size_t patch = cin * 9, area = h * wd;

  auto cols = std::make_shared<std::vector<T>>(patch * area, T(0));
  {
    const T* xv = x.value().data();
    for (std::size_t c = 0; c < cin; ++c) {
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          T* dst = cols->data() + ((c * 3 + ky) * 3 + kx) * area;
          for (std::size_t y = 0; y < h; ++y) {
            const int sy = static_cast<int>(y) + ky - 1;
            if (sy < 0 || sy >= static_cast<int>(h)) continue;
            const T* src = xv + (c * h + sy) * wd;
            for (std::size_t xx = 0; xx < wd; ++xx) {
              const int sx = static_cast<int>(xx) + kx - 1;
              if (sx < 0 || sx >= static_cast<int>(wd)) continue;
              dst[y * wd + xx] = src[sx];
            }
          }
        }
      }
    }
  }

  std::vector<T> out(cout * area);
  {
    Eigen::Map<const detail::EMat<T>> W2(w.value().data(), static_cast<Eigen::Index>(cout),
                                         static_cast<Eigen::Index>(patch));
    Eigen::Map<const detail::EMat<T>> C(cols->data(), static_cast<Eigen::Index>(patch),
                                        static_cast<Eigen::Index>(area));
    Eigen::Map<detail::EMat<T>> O(out.data(), static_cast<Eigen::Index>(cout),
                                  static_cast<Eigen::Index>(area));
    O.noalias() = W2 * C;
  }
  for (std::size_t o = 0; o < cout; ++o) {
    const T b = bias.value()[o];
    for (std::size_t i = 0; i < area; ++i) out[o * area + i] += b;
  }

  auto xn = x.handle(), wn = w.handle(), bn = bias.handle();
  return detail::make_op<T>(
      "conv2d", {cout, h, wd}, std::move(out), {xn, wn, bn},
      [xn, wn, bn, cols, cin, h, wd, cout, patch, area](detail::Node<T>& node) {
        Eigen::Map<const detail::EMat<T>> G(node.grad.data(), static_cast<Eigen::Index>(cout),
                                            static_cast<Eigen::Index>(area));
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t o = 0; o < cout; ++o) {
            T acc = T(0);
            for (std::size_t i = 0; i < area; ++i) acc += node.grad[o * area + i];
            bn->grad[o] += acc;
          }
        }
        if (wn->requires_grad) {
          Eigen::Map<const detail::EMat<T>> C(cols->data(), static_cast<Eigen::Index>(patch),
                                              static_cast<Eigen::Index>(area));
          detail::map2d_grad(*wn, cout, patch).noalias() += G * C.transpose();
        }
        if (xn->requires_grad) {
          std::vector<T> dcols(patch * area);
          Eigen::Map<const detail::EMat<T>> W2(wn->value.data(), static_cast<Eigen::Index>(cout),
                                               static_cast<Eigen::Index>(patch));
          Eigen::Map<detail::EMat<T>> D(dcols.data(), static_cast<Eigen::Index>(patch),
                                        static_cast<Eigen::Index>(area));
          D.noalias() = W2.transpose() * G;
          xn->ensure_grad();
          for (std::size_t c = 0; c < cin; ++c) {
            for (int ky = 0; ky < 3; ++ky) {
              for (int kx = 0; kx < 3; ++kx) {
                const T* src = dcols.data() + ((c * 3 + ky) * 3 + kx) * area;
                for (std::size_t y = 0; y < h; ++y) {
                  const int sy = static_cast<int>(y) + ky - 1;
                  if (sy < 0 || sy >= static_cast<int>(h)) continue;
                  T* dst = xn->grad.data() + (c * h + sy) * wd;
                  for (std::size_t xx = 0; xx < wd; ++xx) {
                    const int sx = static_cast<int>(xx) + kx - 1;
                    if (sx < 0 || sx >= static_cast<int>(wd)) continue;
                    dst[sx] += src[y * wd + xx];
                  }
                }
              }
            }
          }
        }
      });
}

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
/// Gradients route to the first occurrence of the maximum in scan order.
template <typename T>
Tensor<T> maxpool2x2(const Tensor<T>& x) {
  detail::require(x.rank() == 3, "maxpool2x2: input must be [C,H,W]");
  detail::require(x.dim(1) >= 2 && x.dim(2) >= 2, "maxpool2x2: spatial dims must be >= 2");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<T> out(c * oh * ow);
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(c * oh * ow);
  const T* xv = x.value().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        T best = xv[(ch * h + 2 * y) * w + 2 * xx];
        std::size_t best_idx = (ch * h + 2 * y) * w + 2 * xx;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (ch * h + 2 * y + dy) * w + 2 * xx + dx;
            if (xv[idx] > best) {
              best = xv[idx];
              best_idx = idx;
            }
          }
        }
        out[(ch * oh + y) * ow + xx] = best;
        (*argmax)[(ch * oh + y) * ow + xx] = static_cast<std::uint32_t>(best_idx);
      }
    }
  }
  auto xn = x.handle();
  return detail::make_op<T>(
      "maxpool2x2", {c, oh, ow}, std::move(out), {xn}, [xn, argmax](detail::Node<T>& n) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) xn->grad[(*argmax)[i]] += n.grad[i];
      });
}

/// [C, H, W] -> [H*W, C]: spatial positions become a sequence of
/// channel-feature vectors.
template <typename T>
Tensor<T> chw_to_sequence(const Tensor<T>& x) {
  detail::require(x.rank() == 3, "chw_to_sequence: input must be [C,H,W]");
  const std::size_t c = x.dim(0), area = x.dim(1) * x.dim(2);
  std::vector<T> out(x.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t p = 0; p < area; ++p) out[p * c + ch] = x.value()[ch * area + p];
  }
  auto xn = x.handle();
  return detail::make_op<T>(
      "chw_to_sequence", {area, c}, std::move(out), {xn}, [xn, c, area](detail::Node<T>& n) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::size_t p = 0; p < area; ++p) xn->grad[ch * area + p] += n.grad[p * c + ch];
        }
      });
}

// ---------------------------------------------------------------------------
// Normalization, embeddings, dropout
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> layer_norm_rows(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                          T eps = T(1e-5)) {
  detail::require(x.rank() == 2, "layer_norm: rank-2 input required");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  detail::require(gain.size() == cols && bias.size() == cols, "layer_norm: affine size mismatch");

  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  std::vector<T> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xv = x.value().data() + r * cols;
    T mean = T(0);
    for (std::size_t c = 0; c < cols; ++c) mean += xv[c];
    mean /= static_cast<T>(cols);
    T var = T(0);
    for (std::size_t c = 0; c < cols; ++c) {
      const T d = xv[c] - mean;
      var += d * d;
    }
    var /= static_cast<T>(cols);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const T xh = (xv[c] - mean) * is;
      (*xhat)[r * cols + c] = xh;
      out[r * cols + c] = gain.value()[c] * xh + bias.value()[c];
    }
  }
  auto xn = x.handle(), gn = gain.handle(), bn = bias.handle();
  return detail::make_op<T>(
      "layer_norm", x.shape(), std::move(out), {xn, gn, bn},
      [xn, gn, bn, xhat, inv_std, rows, cols](detail::Node<T>& n) {
        for (std::size_t r = 0; r < rows; ++r) {
          const T* g = n.grad.data() + r * cols;
          const T* xh = xhat->data() + r * cols;
          if (gn->requires_grad) {
            gn->ensure_grad();
            for (std::size_t c = 0; c < cols; ++c) gn->grad[c] += g[c] * xh[c];
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t c = 0; c < cols; ++c) bn->grad[c] += g[c];
          }
          if (xn->requires_grad) {
            xn->ensure_grad();
            T mean_dxhat = T(0), mean_dxhat_xhat = T(0);
            std::vector<T> dxhat(cols);
            for (std::size_t c = 0; c < cols; ++c) {
              dxhat[c] = g[c] * gn->value[c];
              mean_dxhat += dxhat[c];
              mean_dxhat_xhat += dxhat[c] * xh[c];
            }
            mean_dxhat /= static_cast<T>(cols);
            mean_dxhat_xhat /= static_cast<T>(cols);
            T* gx = xn->grad.data() + r * cols;
            const T is = (*inv_std)[r];
            for (std::size_t c = 0; c < cols; ++c) {
              gx[c] += (dxhat[c] - mean_dxhat - xh[c] * mean_dxhat_xhat) * is;
            }
          }
        }
      });
}

/// Gather rows of an embedding table: table [V x E], ids [n] -> [n x E].
template <typename T>
Tensor<T> embedding_rows(const Tensor<T>& table, const std::vector<std::int32_t>& ids) {
  detail::require(table.rank() == 2, "embedding: table must be [V x E]");
  const std::size_t v = table.dim(0), e = table.dim(1), n = ids.size();
  for (std::int32_t id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw ValidationError("embedding index out of range");
    }
  }
  std::vector<T> out(n * e);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(table.value().data() + static_cast<std::size_t>(ids[i]) * e, e, out.data() + i * e);
  }
  auto tn = table.handle();
  auto ids_copy = std::make_shared<std::vector<std::int32_t>>(ids);
  return detail::make_op<T>(
      "embedding", {n, e}, std::move(out), {tn}, [tn, ids_copy, e](detail::Node<T>& node) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        for (std::size_t i = 0; i < ids_copy->size(); ++i) {
          T* dst = tn->grad.data() + static_cast<std::size_t>((*ids_copy)[i]) * e;
          const T* src = node.grad.data() + i * e;
          for (std::size_t c = 0; c < e; ++c) dst[c] += src[c];
        }
      });
}

/// Inverted dropout with a counter-based mask; identity when rate <= 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, std::uint64_t seed, std::uint64_t site,
                  std::uint64_t step) {
  if (rate <= 0.0) return x;
  detail::require(rate < 1.0, "dropout: rate must be < 1");
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  auto mask = std::make_shared<std::vector<std::uint8_t>>(x.size());
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool keep = dropout_keep(seed, site, step, i, rate);
    (*mask)[i] = keep;
    out[i] = keep ? x.value()[i] * keep_scale : T(0);
  }
  auto xn = x.handle();
  return detail::make_op<T>(
      "dropout", x.shape(), std::move(out), {xn}, [xn, mask, keep_scale](detail::Node<T>& n) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
          if ((*mask)[i]) xn->grad[i] += n.grad[i] * keep_scale;
        }
      });
}

// ---------------------------------------------------------------------------
// Positional encoding
// ---------------------------------------------------------------------------

/// Standard sinusoidal position table, [n x d_model], gradient-free.
template <typename T>
Tensor<T> sinusoidal_positions(std::size_t n, std::size_t d_model) {
  if (d_model % 2 != 0) throw ConfigError("sinusoidal_positions: d_model must be even");
  std::vector<T> out(n * d_model);
  for (std::size_t pos = 0; pos < n; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double angle = static_cast<double>(pos) /
                           std::pow(10000.0, 2.0 * static_cast<double>(i) /
                                                 static_cast<double>(d_model));
      out[pos * d_model + 2 * i] = static_cast<T>(std::sin(angle));
      out[pos * d_model + 2 * i + 1] = static_cast<T>(std::cos(angle));
    }
  }
  return Tensor<T>::from({n, d_model}, std::move(out));
}

}  // namespace mdmer::nn
