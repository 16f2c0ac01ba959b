#pragma once

#include <cmath>

#include "mdmer/nn/ops.hpp"

namespace mdmer::nn {

/// softmax(Q K^T / sqrt(d)) V, where d is the key dimension.
template <typename T>
Tensor<T> scaled_dot_attention(const Tensor<T>& queries, const Tensor<T>& keys,
                               const Tensor<T>& values) {
  detail::require(queries.rank() == 2 && keys.rank() == 2 && values.rank() == 2,
                  "attention: rank-2 inputs required");
  detail::require(queries.dim(1) == keys.dim(1), "attention: key dimensions disagree");
  detail::require(keys.dim(0) == values.dim(0), "attention: key/value counts disagree");
  const T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(queries.dim(1))));
  Tensor<T> scores = scale(matmul(queries, transpose(keys)), inv_sqrt_d);
  return attention_apply(softmax_rows(scores), values);
}

/// Projection weights of one multi-head attention block. The per-head
/// [d_model x head_dim] projections are stored packed column-wise, head h
/// owning columns [h*head_dim, (h+1)*head_dim).
template <typename T>
struct AttentionParams {
  std::size_t heads = 1;
  std::size_t head_dim = 0;
  Tensor<T> w_query;   // [d_model x heads*head_dim]
  Tensor<T> w_key;     // [d_model x heads*head_dim]
  Tensor<T> w_value;   // [d_model x heads*head_dim]
  Tensor<T> w_output;  // [heads*head_dim x d_model]

  std::size_t d_model() const { return w_query.dim(0); }

  void check() const {
    if (heads == 0 || head_dim == 0 || heads * head_dim != d_model()) {
      throw ConfigError("attention heads * head_dim must equal d_model");
    }
    if (w_query.dim(1) != heads * head_dim || w_key.shape() != w_query.shape() ||
        w_value.shape() != w_query.shape() || w_output.dim(0) != heads * head_dim ||
        w_output.dim(1) != d_model()) {
      throw ConfigError("attention projection shapes are inconsistent");
    }
  }
};

/// Multi-head attention with queries from `f_alpha` and keys/values from
/// `f_beta`; self-attention is the f_alpha == f_beta special case.
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& f_alpha, const Tensor<T>& f_beta,
                               const AttentionParams<T>& p) {
  p.check();
  detail::require(f_alpha.rank() == 2 && f_alpha.dim(1) == p.d_model(),
                  "multi_head_attention: query input width must equal d_model");
  detail::require(f_beta.rank() == 2 && f_beta.dim(1) == p.d_model(),
                  "multi_head_attention: key/value input width must equal d_model");

  Tensor<T> q = matmul(f_alpha, p.w_query);
  Tensor<T> k = matmul(f_beta, p.w_key);
  Tensor<T> v = matmul(f_beta, p.w_value);

  const T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(p.head_dim)));
  std::vector<Tensor<T>> heads;
  heads.reserve(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    const std::size_t c0 = h * p.head_dim;
    Tensor<T> qh = slice_cols(q, c0, p.head_dim);
    Tensor<T> kh = slice_cols(k, c0, p.head_dim);
    Tensor<T> vh = slice_cols(v, c0, p.head_dim);
    Tensor<T> scores = scale(matmul(qh, transpose(kh)), inv_sqrt_d);
    heads.push_back(attention_apply(softmax_rows(scores), vh));
  }
  return matmul(p.heads == 1 ? heads.front() : concat_cols(heads), p.w_output);
}

}  // namespace mdmer::nn
