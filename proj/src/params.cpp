#include "anysat/params.hpp"

namespace anysat {

Tensor& ParamTree::create(const std::string& name, std::vector<size_t> shape) {
    return create(name, Tensor::zeros(std::move(shape), true));
}

Tensor& ParamTree::create(const std::string& name, Tensor value) {
    if (by_name_.count(name)) throw ConfigError("ParamTree: duplicate parameter name " + name);
    order_.push_back(name);
    auto [it, ok] = by_name_.emplace(name, std::move(value));
    return it->second;
}

Tensor ParamTree::get(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ConfigError("ParamTree: unknown parameter " + name);
    return it->second;
}

std::vector<std::pair<std::string, Tensor>> ParamTree::items() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(order_.size());
    for (const auto& n : order_) out.emplace_back(n, by_name_.at(n));
    return out;
}

std::vector<std::pair<std::string, Tensor>> ParamTree::items_with_prefix(
    const std::string& prefix) const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& n : order_)
        if (n.rfind(prefix, 0) == 0) out.emplace_back(n, by_name_.at(n));
    return out;
}

size_t ParamTree::total_scalars() const {
    size_t n = 0;
    for (const auto& [name, t] : by_name_) n += t.numel();
    return n;
}

void ParamTree::zero_grad() {
    for (auto& [name, t] : by_name_) t.zero_grad();
}

void ParamTree::ensure_grads() {
    // Allocates zero buffers for parameters backward() never reached;
    // existing gradients are left untouched.
    for (auto& [name, t] : by_name_) t.grad();
}

void ParamTree::set_requires_grad(bool rg) {
    for (auto& [name, t] : by_name_) t.impl()->requires_grad = rg;
}

ParamTree ParamTree::clone() const {
    ParamTree out;
    for (const auto& n : order_) {
        const Tensor& src = by_name_.at(n);
        out.create(n, Tensor::from(src.shape(), src.data(), src.requires_grad()));
    }
    return out;
}

Tensor normal_init(std::vector<size_t> shape, double stddev, std::mt19937_64& rng) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> data(n);
    for (double& v : data) v = dist(rng);
    return Tensor::from(std::move(shape), std::move(data), true);
}

void linear_init(ParamTree& tree, const std::string& prefix, size_t fan_in, size_t fan_out,
                 std::mt19937_64& rng) {
    tree.create(prefix + "/w",
                normal_init({fan_in, fan_out}, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng));
    tree.create(prefix + "/b", Tensor::zeros({fan_out}, true));
}

}  // namespace anysat
