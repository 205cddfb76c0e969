#pragma once

// Dense double-precision tensors with reverse-mode differentiation.
// Define-by-run: every op records its parents and a backward closure;
// backward() walks the graph in reverse topological order.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "anysat/errors.hpp"

namespace anysat {

class Tensor {
public:
    struct Impl {
        std::vector<size_t> shape;
        std::vector<double> data;
        std::vector<double> grad;  // allocated lazily, same length as data
        bool requires_grad = false;
        std::vector<Tensor> parents;
        std::function<void(Impl&)> backward_fn;  // nullptr for leaves
        const char* op = "leaf";
    };

    Tensor() = default;

    static Tensor zeros(std::vector<size_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<size_t> shape, double value, bool requires_grad = false);
    static Tensor from(std::vector<size_t> shape, std::vector<double> data,
                       bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<size_t>& shape() const { return impl_->shape; }
    size_t rank() const { return impl_->shape.size(); }
    size_t dim(size_t i) const { return impl_->shape[i]; }
    size_t numel() const { return impl_->data.size(); }

    std::vector<double>& data() { return impl_->data; }
    const std::vector<double>& data() const { return impl_->data; }

    bool requires_grad() const { return impl_->requires_grad; }
    bool has_grad() const { return !impl_->grad.empty(); }
    std::vector<double>& grad();  // allocates zeros on first use
    void zero_grad();

    double item() const;  // scalar tensors only

    // Constant copy with no graph history.
    Tensor detach() const;

    Impl* impl() const { return impl_.get(); }

    static Tensor make(std::vector<size_t> shape, std::vector<double> data, bool requires_grad,
                       std::vector<Tensor> parents, std::function<void(Impl&)> backward_fn,
                       const char* op);

private:
    std::shared_ptr<Impl> impl_;
};

// Populates grads of every requires_grad leaf reachable from `root`.
// root must be scalar. A root with no differentiable history is a no-op.
void backward(const Tensor& root);

// --- elementwise / arithmetic -------------------------------------------
// add/sub/mul support broadcasting when one operand is a scalar or its
// shape is a trailing suffix of the other's; div broadcasts b only.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor neg(const Tensor& a);

Tensor gelu(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);

// --- shape ---------------------------------------------------------------
Tensor reshape(const Tensor& a, std::vector<size_t> shape);
Tensor transpose(const Tensor& a);  // 2-D only
Tensor concat(const std::vector<Tensor>& parts, size_t axis);
Tensor slice(const Tensor& a, size_t axis, size_t start, size_t len);
// 2-D a; picks rows (repeats allowed). Backward scatter-adds.
Tensor gather_rows(const Tensor& a, const std::vector<size_t>& rows);
// (..., 1) -> (..., n)
Tensor expand_last(const Tensor& a, size_t n);
// Stack (E,) vectors into (n, E).
Tensor stack_rows(const std::vector<Tensor>& rows);

// --- linear algebra / reductions ----------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);  // (m,k) x (k,n)
Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, size_t axis);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, size_t axis);
Tensor softmax(const Tensor& a, size_t axis);
// Pure normalization (zero mean / unit variance along axis); affine scale
// is applied by the caller.
Tensor layer_norm(const Tensor& a, size_t axis);

Tensor l2_norm(const Tensor& a);                            // scalar
Tensor cosine_similarity(const Tensor& a, const Tensor& b);  // scalar, vector inputs

// --- verification --------------------------------------------------------
struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    size_t coords_checked = 0;
};

// Central-difference check of backward() against f. `f` rebuilds the graph
// from the current parameter values on every call. max_coords_per_param == 0
// checks every coordinate; otherwise a deterministic subset per parameter.
GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<std::pair<std::string, Tensor>>& params, double h,
                           size_t max_coords_per_param = 0, uint64_t select_seed = 0);

}  // namespace anysat
