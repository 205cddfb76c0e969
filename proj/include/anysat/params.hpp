#pragma once

// Named parameter tree. Leaf names are slash-separated paths
// ("combiner/block0/attn/wq"); student and teacher instantiate trees with
// identical names so EMA and checkpointing can walk them in lockstep.

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "anysat/tensor.hpp"

namespace anysat {

class ParamTree {
public:
    Tensor& create(const std::string& name, std::vector<size_t> shape);
    Tensor& create(const std::string& name, Tensor value);

    bool has(const std::string& name) const { return by_name_.count(name) > 0; }
    Tensor get(const std::string& name) const;
    const std::vector<std::string>& names() const { return order_; }
    size_t size() const { return order_.size(); }

    std::vector<std::pair<std::string, Tensor>> items() const;
    // Leaves whose name starts with `prefix`.
    std::vector<std::pair<std::string, Tensor>> items_with_prefix(const std::string& prefix) const;

    size_t total_scalars() const;
    void zero_grad();
    // Allocate (zeroed) grad buffers on every leaf so a later optimizer step
    // sees a grad even for leaves outside the current graph.
    void ensure_grads();
    void set_requires_grad(bool rg);

    // Deep copy: fresh leaves with copied values, no shared storage.
    ParamTree clone() const;

private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, Tensor> by_name_;
};

// Gaussian init helpers. All model parameters are created through these so
// a single rng stream fixes the whole tree.
Tensor normal_init(std::vector<size_t> shape, double stddev, std::mt19937_64& rng);
// weight (fan_in, fan_out) with std 1/sqrt(fan_in), plus zero bias.
void linear_init(ParamTree& tree, const std::string& prefix, size_t fan_in, size_t fan_out,
                 std::mt19937_64& rng);

}  // namespace anysat
