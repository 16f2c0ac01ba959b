#pragma once

#include <string>

#include "mdmer/nn/attention.hpp"
#include "mdmer/nn/init.hpp"
#include "mdmer/nn/ops.hpp"

namespace mdmer::nn {

/// Dropout switches for one forward pass. Masks are a pure function of
/// (seed, site, step); eval mode sets enabled = false.
struct DropoutContext {
  bool enabled = false;
  double rate = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

/// Parameters of one post-norm encoder layer of the original architecture:
/// self-attention -> residual -> layer norm -> position-wise FFN ->
/// residual -> layer norm.
template <typename T>
struct TransformerLayerParams {
  AttentionParams<T> attention;
  Tensor<T> ffn_w1;  // [d_model x ffn_dim]
  Tensor<T> ffn_b1;  // [ffn_dim]
  Tensor<T> ffn_w2;  // [ffn_dim x d_model]
  Tensor<T> ffn_b2;  // [d_model]
  Tensor<T> norm1_gain, norm1_bias;
  Tensor<T> norm2_gain, norm2_bias;
  std::size_t layer_index = 0;

  static TransformerLayerParams make(std::size_t d_model, std::size_t heads, std::size_t ffn_dim,
                                     std::size_t layer_index, std::uint64_t master_seed,
                                     const std::string& name_prefix, bool requires_grad = true) {
    if (heads == 0 || d_model % heads != 0) {
      throw ConfigError("transformer heads must divide d_model");
    }
    TransformerLayerParams p;
    p.layer_index = layer_index;
    auto make_tensor = [&](const std::string& name, std::vector<std::size_t> shape,
                           std::size_t fan_in, std::size_t fan_out) {
      Tensor<T> t = Tensor<T>::zeros(std::move(shape), requires_grad);
      SplitMix64 rng = named_rng(master_seed, name_prefix + "." + name);
      if (fan_in != 0) xavier_uniform_fill(t, fan_in, fan_out, rng);
      return t;
    };
    p.attention.heads = heads;
    p.attention.head_dim = d_model / heads;
    p.attention.w_query = make_tensor("attn.wq", {d_model, d_model}, d_model, d_model);
    p.attention.w_key = make_tensor("attn.wk", {d_model, d_model}, d_model, d_model);
    p.attention.w_value = make_tensor("attn.wv", {d_model, d_model}, d_model, d_model);
    p.attention.w_output = make_tensor("attn.wo", {d_model, d_model}, d_model, d_model);
    p.ffn_w1 = make_tensor("ffn.w1", {d_model, ffn_dim}, d_model, ffn_dim);
    p.ffn_b1 = make_tensor("ffn.b1", {ffn_dim}, 0, 0);
    p.ffn_w2 = make_tensor("ffn.w2", {ffn_dim, d_model}, ffn_dim, d_model);
    p.ffn_b2 = make_tensor("ffn.b2", {d_model}, 0, 0);
    p.norm1_gain = make_tensor("norm1.gain", {d_model}, 0, 0);
    p.norm1_bias = make_tensor("norm1.bias", {d_model}, 0, 0);
    p.norm2_gain = make_tensor("norm2.gain", {d_model}, 0, 0);
    p.norm2_bias = make_tensor("norm2.bias", {d_model}, 0, 0);
    for (auto& v : p.norm1_gain.value()) v = T(1);
    for (auto& v : p.norm2_gain.value()) v = T(1);
    return p;
  }
};

template <typename T>
Tensor<T> transformer_encoder_layer(const Tensor<T>& x, const TransformerLayerParams<T>& p,
                                    const DropoutContext& drop = {}) {
  Tensor<T> attn = multi_head_attention(x, x, p.attention);
  if (drop.enabled) {
    attn = dropout(attn, drop.rate, drop.seed, hash_mix(p.layer_index, 0), drop.step);
  }
  Tensor<T> h = layer_norm_rows(add(x, attn), p.norm1_gain, p.norm1_bias);

  Tensor<T> f = add_rowwise(matmul(h, p.ffn_w1), p.ffn_b1);
  f = add_rowwise(matmul(relu(f), p.ffn_w2), p.ffn_b2);
  if (drop.enabled) {
    f = dropout(f, drop.rate, drop.seed, hash_mix(p.layer_index, 1), drop.step);
  }
  return layer_norm_rows(add(h, f), p.norm2_gain, p.norm2_bias);
}

}  // namespace mdmer::nn
