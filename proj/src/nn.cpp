#include "anysat/nn.hpp"

#include <cmath>

namespace anysat::nn {

void make_linear(ParamTree& tree, const std::string& prefix, size_t in, size_t out,
                 std::mt19937_64& rng) {
    linear_init(tree, prefix, in, out, rng);
}

void make_mlp(ParamTree& tree, const std::string& prefix, size_t in, size_t hidden, size_t out,
              std::mt19937_64& rng) {
    linear_init(tree, prefix + "/fc1", in, hidden, rng);
    linear_init(tree, prefix + "/fc2", hidden, out, rng);
}

void make_layer_norm(ParamTree& tree, const std::string& prefix, size_t width) {
    tree.create(prefix + "/gamma", Tensor::full({width}, 1.0, true));
    tree.create(prefix + "/beta", Tensor::zeros({width}, true));
}

void make_attention(ParamTree& tree, const std::string& prefix, size_t width,
                    std::mt19937_64& rng) {
    for (const char* leaf : {"/wq", "/wk", "/wv", "/wo"})
        linear_init(tree, prefix + leaf, width, width, rng);
}

void make_block(ParamTree& tree, const std::string& prefix, size_t width, std::mt19937_64& rng) {
    make_layer_norm(tree, prefix + "/ln1", width);
    make_attention(tree, prefix + "/attn", width, rng);
    make_layer_norm(tree, prefix + "/ln2", width);
    make_mlp(tree, prefix + "/mlp", width, 2 * width, width, rng);
}

void make_cross_block(ParamTree& tree, const std::string& prefix, size_t width,
                      std::mt19937_64& rng) {
    make_layer_norm(tree, prefix + "/lnq", width);
    make_layer_norm(tree, prefix + "/lnkv", width);
    make_attention(tree, prefix + "/attn", width, rng);
    make_layer_norm(tree, prefix + "/ln2", width);
    make_mlp(tree, prefix + "/mlp", width, 2 * width, width, rng);
}

Tensor linear(const ParamTree& tree, const std::string& prefix, const Tensor& x) {
    return add(matmul(x, tree.get(prefix + "/w")), tree.get(prefix + "/b"));
}

Tensor mlp(const ParamTree& tree, const std::string& prefix, const Tensor& x) {
    return linear(tree, prefix + "/fc2", gelu(linear(tree, prefix + "/fc1", x)));
}

Tensor layer_norm_affine(const ParamTree& tree, const std::string& prefix, const Tensor& x) {
    Tensor normed = layer_norm(x, x.rank() - 1);
    return add(mul(normed, tree.get(prefix + "/gamma")), tree.get(prefix + "/beta"));
}

Tensor attention(const ParamTree& tree, const std::string& prefix, const Tensor& q_in,
                 const Tensor& kv_in, size_t heads) {
    size_t width = q_in.dim(1);
    if (heads == 0 || width % heads != 0)
        throw ConfigError("attention: width " + std::to_string(width) +
                          " not divisible by head count " + std::to_string(heads));
    size_t dh = width / heads;
    Tensor q = linear(tree, prefix + "/wq", q_in);
    Tensor k = linear(tree, prefix + "/wk", kv_in);
    Tensor v = linear(tree, prefix + "/wv", kv_in);
    double scale_f = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> head_outs;
    head_outs.reserve(heads);
    for (size_t h = 0; h < heads; ++h) {
        Tensor qh = slice(q, 1, h * dh, dh);
        Tensor kh = slice(k, 1, h * dh, dh);
        Tensor vh = slice(v, 1, h * dh, dh);
        Tensor scores = scale(matmul(qh, transpose(kh)), scale_f);  // (Lq, L)
        Tensor attn = softmax(scores, 1);
        head_outs.push_back(matmul(attn, vh));  // (Lq, dh)
    }
    return linear(tree, prefix + "/wo", concat(head_outs, 1));
}

Tensor block(const ParamTree& tree, const std::string& prefix, const Tensor& x, size_t heads) {
    Tensor n1 = layer_norm_affine(tree, prefix + "/ln1", x);
    Tensor h = add(x, attention(tree, prefix + "/attn", n1, n1, heads));
    return add(h, mlp(tree, prefix + "/mlp", layer_norm_affine(tree, prefix + "/ln2", h)));
}

Tensor cross_block(const ParamTree& tree, const std::string& prefix, const Tensor& q,
                   const Tensor& kv, size_t heads) {
    Tensor h = add(q, attention(tree, prefix + "/attn", layer_norm_affine(tree, prefix + "/lnq", q),
                                layer_norm_affine(tree, prefix + "/lnkv", kv), heads));
    return add(h, mlp(tree, prefix + "/mlp", layer_norm_affine(tree, prefix + "/ln2", h)));
}

}  // namespace anysat::nn
