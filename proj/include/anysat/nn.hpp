#pragma once

// Shared network building blocks over ParamTree leaves. Each block has a
// make_* builder that registers its parameters under a prefix and a forward
// that looks them up; student and teacher reuse the same builders so their
// trees stay name-compatible.

#include <random>
#include <string>

#include "anysat/params.hpp"

namespace anysat::nn {

void make_linear(ParamTree& tree, const std::string& prefix, size_t in, size_t out,
                 std::mt19937_64& rng);
void make_mlp(ParamTree& tree, const std::string& prefix, size_t in, size_t hidden, size_t out,
              std::mt19937_64& rng);
void make_layer_norm(ParamTree& tree, const std::string& prefix, size_t width);
void make_attention(ParamTree& tree, const std::string& prefix, size_t width,
                    std::mt19937_64& rng);
// Pre-norm residual self-attention block: ln1/attn + ln2/mlp(width -> 2*width).
void make_block(ParamTree& tree, const std::string& prefix, size_t width, std::mt19937_64& rng);
// Pre-norm residual cross-attention block (separate norms for query and kv).
void make_cross_block(ParamTree& tree, const std::string& prefix, size_t width,
                      std::mt19937_64& rng);

// x: (N, in) -> (N, out)
Tensor linear(const ParamTree& tree, const std::string& prefix, const Tensor& x);
// One gelu hidden layer.
Tensor mlp(const ParamTree& tree, const std::string& prefix, const Tensor& x);
// Normalizes over the last axis, then applies the learned affine.
Tensor layer_norm_affine(const ParamTree& tree, const std::string& prefix, const Tensor& x);
// Multi-head attention of q_in (Lq, E) against kv_in (L, E).
Tensor attention(const ParamTree& tree, const std::string& prefix, const Tensor& q_in,
                 const Tensor& kv_in, size_t heads);
Tensor block(const ParamTree& tree, const std::string& prefix, const Tensor& x, size_t heads);
Tensor cross_block(const ParamTree& tree, const std::string& prefix, const Tensor& q,
                   const Tensor& kv, size_t heads);

}  // namespace anysat::nn
