#include "anysat/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <unordered_set>

namespace anysat {
namespace {

size_t shape_numel(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<size_t>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
}

// True when small.shape is a trailing suffix of big.shape (scalars count).
bool is_suffix(const std::vector<size_t>& big, const std::vector<size_t>& small) {
    if (small.size() > big.size()) return false;
    for (size_t i = 0; i < small.size(); ++i)
        if (small[small.size() - 1 - i] != big[big.size() - 1 - i]) return false;
    return true;
}

struct AxisSplit {
    size_t outer, n, inner;
};

AxisSplit split_axis(const Tensor& a, size_t axis, const char* op) {
    const auto& s = a.shape();
    if (axis >= s.size())
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(s));
    AxisSplit sp{1, s[axis], 1};
    for (size_t i = 0; i < axis; ++i) sp.outer *= s[i];
    for (size_t i = axis + 1; i < s.size(); ++i) sp.inner *= s[i];
    return sp;
}

bool any_grad(const std::vector<Tensor>& ts) {
    for (const auto& t : ts)
        if (t.requires_grad()) return true;
    return false;
}

}  // namespace

Tensor Tensor::make(std::vector<size_t> shape, std::vector<double> data, bool requires_grad,
                    std::vector<Tensor> parents, std::function<void(Impl&)> backward_fn,
                    const char* op) {
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(data);
    t.impl_->requires_grad = requires_grad;
    t.impl_->parents = std::move(parents);
    t.impl_->backward_fn = std::move(backward_fn);
    t.impl_->op = op;
    return t;
}

Tensor Tensor::zeros(std::vector<size_t> shape, bool requires_grad) {
    size_t n = shape_numel(shape);
    return make(std::move(shape), std::vector<double>(n, 0.0), requires_grad, {}, nullptr, "leaf");
}

Tensor Tensor::full(std::vector<size_t> shape, double value, bool requires_grad) {
    size_t n = shape_numel(shape);
    return make(std::move(shape), std::vector<double>(n, value), requires_grad, {}, nullptr,
                "leaf");
}

Tensor Tensor::from(std::vector<size_t> shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size())
        throw ShapeError("Tensor::from: data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    return make(std::move(shape), std::move(data), requires_grad, {}, nullptr, "leaf");
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return make({}, {value}, requires_grad, {}, nullptr, "leaf");
}

std::vector<double>& Tensor::grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item: tensor has " + std::to_string(numel()) + " elements");
    return impl_->data[0];
}

Tensor Tensor::detach() const {
    return make(impl_->shape, impl_->data, false, {}, nullptr, "detach");
}

void backward(const Tensor& root) {
    if (root.numel() != 1)
        throw ShapeError("backward: root must be scalar, got shape " + shape_str(root.shape()));
    if (!root.requires_grad()) return;  // constant: nothing reachable

    // Iterative post-order DFS for reverse topological order.
    std::vector<Tensor::Impl*> order;
    std::unordered_set<Tensor::Impl*> visited;
    struct Frame {
        Tensor::Impl* node;
        size_t next_child;
    };
    std::vector<Frame> stack{{root.impl(), 0}};
    visited.insert(root.impl());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_child < f.node->parents.size()) {
            Tensor::Impl* child = f.node->parents[f.next_child++].impl();
            if (child->requires_grad && !visited.count(child)) {
                visited.insert(child);
                stack.push_back({child, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    for (Tensor::Impl* n : order)
        if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0);
    root.impl()->grad[0] = 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor::Impl* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

// --- binary elementwise ---------------------------------------------------

namespace {

enum class BinKind { Add, Sub, Mul, Div };

Tensor binary_op(const Tensor& a, const Tensor& b, BinKind kind, const char* name) {
    // Result takes the larger operand's shape; the smaller must be a
    // trailing suffix (tiled over the leading dims) or a scalar.
    const bool b_small = b.numel() <= a.numel();
    const Tensor& big = b_small ? a : b;
    const Tensor& small = b_small ? b : a;
    if (!is_suffix(big.shape(), small.shape()) ||
        (small.numel() != 0 && big.numel() % small.numel() != 0))
        shape_fail(name, a, b);
    if (!b_small && kind == BinKind::Div) shape_fail(name, a, b);

    const size_t n = big.numel();
    const size_t ns = std::max<size_t>(small.numel(), 1);
    std::vector<double> out(n);
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (size_t i = 0; i < n; ++i) {
        double av = b_small ? ad[i] : ad[i % ns];
        double bv = b_small ? bd[i % ns] : bd[i];
        switch (kind) {
            case BinKind::Add: out[i] = av + bv; break;
            case BinKind::Sub: out[i] = av - bv; break;
            case BinKind::Mul: out[i] = av * bv; break;
            case BinKind::Div: out[i] = av / bv; break;
        }
    }
    Tensor ta = a, tb = b;
    bool rg = a.requires_grad() || b.requires_grad();
    auto bw = [ta, tb, kind, b_small, ns](Tensor::Impl& self) mutable {
        const size_t n = self.data.size();
        const auto& g = self.grad;
        const auto& ad = ta.data();
        const auto& bd = tb.data();
        auto idx_a = [&](size_t i) { return b_small ? i : i % ns; };
        auto idx_b = [&](size_t i) { return b_small ? i % ns : i; };
        if (ta.requires_grad()) {
            auto& ga = ta.grad();
            for (size_t i = 0; i < n; ++i) {
                double d = 0.0;
                switch (kind) {
                    case BinKind::Add: d = g[i]; break;
                    case BinKind::Sub: d = g[i]; break;
                    case BinKind::Mul: d = g[i] * bd[idx_b(i)]; break;
                    case BinKind::Div: d = g[i] / bd[idx_b(i)]; break;
                }
                ga[idx_a(i)] += d;
            }
        }
        if (tb.requires_grad()) {
            auto& gb = tb.grad();
            for (size_t i = 0; i < n; ++i) {
                double d = 0.0;
                switch (kind) {
                    case BinKind::Add: d = g[i]; break;
                    case BinKind::Sub: d = -g[i]; break;
                    case BinKind::Mul: d = g[i] * ad[idx_a(i)]; break;
                    case BinKind::Div: {
                        double bv = bd[idx_b(i)];
                        d = -g[i] * ad[idx_a(i)] / (bv * bv);
                        break;
                    }
                }
                gb[idx_b(i)] += d;
            }
        }
    };
    return Tensor::make(big.shape(), std::move(out), rg, {a, b}, std::function<void(Tensor::Impl&)>(std::move(bw)),
                        name);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Div, "div"); }

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
    Tensor ta = a;
    bool rg = a.requires_grad();
    auto bw = [ta, c](Tensor::Impl& self) mutable {
        auto& ga = ta.grad();
        for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * c;
    };
    return Tensor::make(a.shape(), std::move(out), rg, {a}, std::function<void(Tensor::Impl&)>(std::move(bw)), "scale");
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

// --- unary elementwise ----------------------------------------------------

namespace {

// f(x) and df(x, y) where y = f(x).
Tensor unary_op(const Tensor& a, double (*f)(double), double (*df)(double, double),
                const char* name) {
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = f(a.data()[i]);
    Tensor ta = a;
    bool rg = a.requires_grad();
    auto bw = [ta, df](Tensor::Impl& self) mutable {
        auto& ga = ta.grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            ga[i] += self.grad[i] * df(ta.data()[i], self.data[i]);
    };
    return Tensor::make(a.shape(), std::move(out), rg, {a}, std::function<void(Tensor::Impl&)>(std::move(bw)), name);
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

Tensor gelu(const Tensor& a) {
    return unary_op(
        a, +[](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
        +[](double x, double) {
            double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            return cdf + x * pdf;
        },
        "gelu");
}

Tensor sin(const Tensor& a) {
    return unary_op(
        a, +[](double x) { return std::sin(x); }, +[](double x, double) { return std::cos(x); },
        "sin");
}

Tensor exp(const Tensor& a) {
    return unary_op(
        a, +[](double x) { return std::exp(x); }, +[](double, double y) { return y; }, "exp");
}

Tensor log(const Tensor& a) {
    return unary_op(
        a, +[](double x) { return std::log(x); }, +[](double x, double) { return 1.0 / x; },
        "log");
}

Tensor sqrt(const Tensor& a) {
    return unary_op(
        a, +[](double x) { return std::sqrt(x); },
        +[](double, double y) { return 0.5 / y; }, "sqrt");
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(
        a,
        +[](double x) {
            return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        },
        +[](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Tensor softplus(const Tensor& a) {
    return unary_op(
        a,
        +[](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
        +[](double x, double) {
            return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        },
        "softplus");
}

// --- shape ops ------------------------------------------------------------

Tensor reshape(const Tensor& a, std::vector<size_t> shape) {
    if (shape_numel(shape) != a.numel())
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
    Tensor ta = a;
    bool rg = a.requires_grad();
    auto bw = [ta](Tensor::Impl& self) mutable {
        auto& ga = ta.grad();
        for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
    };
    return Tensor::make(std::move(shape), a.data(), rg, {a}, std::function<void(Tensor::Impl&)>(std::move(bw)),
                        "reshape");
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose: expects rank 2, got " + shape_str(a.shape()));
    size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(m * n);
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
    Tensor ta = a;
    bool rg = a.requires_grad();
    auto bw = [ta, m, n](Tensor::Impl& self) mutable {
        auto& ga = ta.grad();
        for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j * m + i];
    };
    return Tensor::make({n, m}, std::move(out), rg, {a}, std::function<void(Tensor::Impl&)>(std::move(bw)),
                        "transpose");
}

Tensor concat(const std::vector<Tensor>& parts, size_t axis) {
    if (parts.empty()) throw ShapeError("concat: empty input list");
    const auto& s0 = parts[0].shape();
    AxisSplit sp0 = split_axis(parts[0], axis, "concat");
    size_t total_axis = 0;
    for (const auto& p : parts) {
        if (p.rank() != s0.size()) shape_fail("concat", parts[0], p);
        for (size_t i = 0; i < s0.size(); ++i)
            if (i != axis && p.shape()[i] != s0[i]) shape_fail("concat", parts[0], p);
        total_axis += p.dim(axis);
    }
    std::vector<size_t> shape = s0;
    shape[axis] = total_axis;
    std::vector<double> out(shape_numel(shape));
    size_t offset = 0;  // in axis units
    for (const auto& p : parts) {
        size_t pn = p.dim(axis);
        const auto& pd = p.data();
        for (size_t o = 0; o < sp0.outer; ++o)
            for (size_t k = 0; k < pn * sp0.inner; ++k)
                out[(o * total_axis + offset) * sp0.inner + k] = pd[o * pn * sp0.inner + k];
        offset += pn;
    }
    std::vector<Tensor> parents = parts;
    bool rg = any_grad(parts);
    auto bw = [parents, sp0, total_axis](Tensor::Impl& self) mutable {
        size_t offset = 0;
        for (auto& p : parents) {
            size_t axis_len = p.numel() / (sp0.outer * sp0.inner);
            if (p.requires_grad()) {
                auto& gp = p.grad();
                for (size_t o = 0; o < sp0.outer; ++o)
                    for (size_t k = 0; k < axis_len * sp0.inner; ++k)
                        gp[o * axis_len * sp0.inner + k] +=
                            self.grad[(o * total_axis + offset) * sp0.inner + k];
            }
            offset += axis_len;
        }
    };
    return Tensor::make(std::move(shape), std::move(out), rg, parts, std::function<void(Tensor::Impl&)>(std::move(bw)),
                        "concat");
}

Tensor slice(const Tensor& a, size_t axis, size_t start, size_t len) {
    AxisSplit sp = split_axis(a, axis, "slice");
    if (start + len > sp.n)
        throw ShapeError("slice: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") exceeds axis length " +
                         std::to_string(sp.n));
    std::vector<size_t> shape = a.shape();
    shape[axis] = len;
    std::vector<double> out(sp.outer * len * sp.inner);
    for (size_t o = 0; o < sp.outer; ++o)
        for (size_t k = 0; k < len * sp.inner; ++k)
            out[o * len * sp.inner + k] = a.data()[(o * sp.n + start) * sp.inner + k];
    Tensor ta = a;
    bool rg = a.requires_grad();
    auto bw = [ta, sp, start, len](Tensor::Impl& self) mutable {
        auto& ga = ta.grad();
        for (size_t o = 0; o < sp.outer; ++o)
            for (size_t k = 0; k < len * sp.inner; ++k)
                ga[(o * sp.n + start) * sp.inner + k] += self.grad[o * len * sp.inner + k];
    };
    return Tensor::make(std::move(shape), std::move(out), rg, {a}, std::function<void(Tensor::Impl&)>(std::move(bw)),
                        "slice");
}

Tensor gather_rows(const Tensor& a, const std::vector<size_t>& rows) {
    if (a.rank() != 2) throw ShapeError("gather_rows: expects rank 2, got " + shape_str(a.shape()));
    size_t m = a.dim(0), w = a.dim(1);
    for (size_t r : rows)
        if (r >= m)
            throw ShapeError("gather_rows: row " + std::to_string(r) + " out of range " +
                             std::to_string(m));
    std::vector<double> out(rows.size() * w);
    for (size_t i = 0; i < rows.size(); ++i)
        std::copy_n(a.data().begin() + rows[i] * w, w, out.begin() + i * w);
    Tensor ta = a;
    bool rg = a.requires_grad();
    auto bw = [ta, rows, w](Tensor::Impl& self) mutable {
        auto& ga = ta.grad();
        for (size_t i = 0; i < rows.size(); ++i)
            for (size_t j = 0; j < w; ++j) ga[rows[i] * w + j] += self.grad[i * w + j];
    };
    return Tensor::make({rows.size(), w}, std::move(out), rg, {a}, std::function<void(Tensor::Impl&)>(std::move(bw)),
                        "gather_rows");
}

Tensor expand_last(const Tensor& a, size_t n) {
    if (a.rank() == 0 || a.shape().back() != 1)
        throw ShapeError("expand_last: last dim must be 1, got " + shape_str(a.shape()));
    std::vector<size_t> shape = a.shape();
    shape.back() = n;
    std::vector<double> out(a.numel() * n);
    for (size_t i = 0; i < a.numel(); ++i)
        for (size_t j = 0; j < n; ++j) out[i * n + j] = a.data()[i];
    Tensor ta = a;
    bool rg = a.requires_grad();
    auto bw = [ta, n](Tensor::Impl& self) mutable {
        auto& ga = ta.grad();
        for (size_t i = 0; i < ga.size(); ++i)
            for (size_t j = 0; j < n; ++j) ga[i] += self.grad[i * n + j];
    };
    return Tensor::make(std::move(shape), std::move(out), rg, {a}, std::function<void(Tensor::Impl&)>(std::move(bw)),
                        "expand_last");
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: empty input list");
    std::vector<Tensor> reshaped;
    reshaped.reserve(rows.size());
    size_t w = rows[0].numel();
    for (const auto& r : rows) {
        if (r.numel() != w) shape_fail("stack_rows", rows[0], r);
        reshaped.push_back(reshape(r, {1, w}));
    }
    return concat(reshaped, 0);
}

// --- linear algebra / reductions -----------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_fail("matmul", a, b);
    size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n, 0.0);
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (size_t i = 0; i < m; ++i)
        for (size_t l = 0; l < k; ++l) {
            double av = ad[i * k + l];
            if (av == 0.0) continue;
            const double* brow = &bd[l * n];
            double* orow = &out[i * n];
            for (size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    Tensor ta = a, tb = b;
    bool rg = a.requires_grad() || b.requires_grad();
    auto bw = [ta, tb, m, k, n](Tensor::Impl& self) mutable {
        const auto& g = self.grad;
        if (ta.requires_grad()) {
            auto& ga = ta.grad();
            const auto& bd = tb.data();
            for (size_t i = 0; i < m; ++i)
                for (size_t l = 0; l < k; ++l) {
                    double s = 0.0;
                    for (size_t j = 0; j < n; ++j) s += g[i * n + j] * bd[l * n + j];
                    ga[i * k + l] += s;
                }
        }
        if (tb.requires_grad()) {
            auto& gb = tb.grad();
            const auto& ad = ta.data();
            for (size_t i = 0; i < m; ++i)
                for (size_t l = 0; l < k; ++l) {
                    double av = ad[i * k + l];
                    if (av == 0.0) continue;
                    for (size_t j = 0; j < n; ++j) gb[l * n + j] += av * g[i * n + j];
                }
        }
    };
    return Tensor::make({m, n}, std::move(out), rg, {a, b}, std::function<void(Tensor::Impl&)>(std::move(bw)),
                        "matmul");
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    Tensor ta = a;
    bool rg = a.requires_grad();
    auto bw = [ta](Tensor::Impl& self) mutable {
        auto& ga = ta.grad();
        for (double& g : ga) g += self.grad[0];
    };
    return Tensor::make({}, {s}, rg, {a}, std::function<void(Tensor::Impl&)>(std::move(bw)), "sum");
}

Tensor sum(const Tensor& a, size_t axis) {
    AxisSplit sp = split_axis(a, axis, "sum");
    std::vector<size_t> shape = a.shape();
    shape.erase(shape.begin() + axis);
    std::vector<double> out(sp.outer * sp.inner, 0.0);
    for (size_t o = 0; o < sp.outer; ++o)
        for (size_t t = 0; t < sp.n; ++t)
            for (size_t i = 0; i < sp.inner; ++i)
                out[o * sp.inner + i] += a.data()[(o * sp.n + t) * sp.inner + i];
    Tensor ta = a;
    bool rg = a.requires_grad();
    auto bw = [ta, sp](Tensor::Impl& self) mutable {
        auto& ga = ta.grad();
        for (size_t o = 0; o < sp.outer; ++o)
            for (size_t t = 0; t < sp.n; ++t)
                for (size_t i = 0; i < sp.inner; ++i)
                    ga[(o * sp.n + t) * sp.inner + i] += self.grad[o * sp.inner + i];
    };
    return Tensor::make(std::move(shape), std::move(out), rg, {a}, std::function<void(Tensor::Impl&)>(std::move(bw)),
                        "sum_axis");
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor mean(const Tensor& a, size_t axis) {
    AxisSplit sp = split_axis(a, axis, "mean");
    return scale(sum(a, axis), 1.0 / static_cast<double>(sp.n));
}

Tensor softmax(const Tensor& a, size_t axis) {
    AxisSplit sp = split_axis(a, axis, "softmax");
    std::vector<double> out(a.numel());
    const auto& ad = a.data();
    for (size_t o = 0; o < sp.outer; ++o)
        for (size_t i = 0; i < sp.inner; ++i) {
            double mx = -1e300;
            for (size_t t = 0; t < sp.n; ++t) mx = std::max(mx, ad[(o * sp.n + t) * sp.inner + i]);
            double z = 0.0;
            for (size_t t = 0; t < sp.n; ++t) {
                size_t idx = (o * sp.n + t) * sp.inner + i;
                out[idx] = std::exp(ad[idx] - mx);
                z += out[idx];
            }
            for (size_t t = 0; t < sp.n; ++t) out[(o * sp.n + t) * sp.inner + i] /= z;
        }
    Tensor ta = a;
    bool rg = a.requires_grad();
    auto bw = [ta, sp](Tensor::Impl& self) mutable {
        auto& ga = ta.grad();
        const auto& y = self.data;
        const auto& g = self.grad;
        for (size_t o = 0; o < sp.outer; ++o)
            for (size_t i = 0; i < sp.inner; ++i) {
                double dot = 0.0;
                for (size_t t = 0; t < sp.n; ++t) {
                    size_t idx = (o * sp.n + t) * sp.inner + i;
                    dot += g[idx] * y[idx];
                }
                for (size_t t = 0; t < sp.n; ++t) {
                    size_t idx = (o * sp.n + t) * sp.inner + i;
                    ga[idx] += y[idx] * (g[idx] - dot);
                }
            }
    };
    return Tensor::make(a.shape(), std::move(out), rg, {a}, std::function<void(Tensor::Impl&)>(std::move(bw)),
                        "softmax");
}

Tensor layer_norm(const Tensor& a, size_t axis) {
    constexpr double kEps = 1e-12;
    AxisSplit sp = split_axis(a, axis, "layer_norm");
    std::vector<double> out(a.numel());
    std::vector<double> inv_sigma(sp.outer * sp.inner);
    const auto& ad = a.data();
    for (size_t o = 0; o < sp.outer; ++o)
        for (size_t i = 0; i < sp.inner; ++i) {
            double mu = 0.0;
            for (size_t t = 0; t < sp.n; ++t) mu += ad[(o * sp.n + t) * sp.inner + i];
            mu /= static_cast<double>(sp.n);
            double var = 0.0;
            for (size_t t = 0; t < sp.n; ++t) {
                double d = ad[(o * sp.n + t) * sp.inner + i] - mu;
                var += d * d;
            }
            var /= static_cast<double>(sp.n);
            double is = 1.0 / std::sqrt(var + kEps);
            inv_sigma[o * sp.inner + i] = is;
            for (size_t t = 0; t < sp.n; ++t) {
                size_t idx = (o * sp.n + t) * sp.inner + i;
                out[idx] = (ad[idx] - mu) * is;
            }
        }
    Tensor ta = a;
    bool rg = a.requires_grad();
    auto bw = [ta, sp, inv_sigma](Tensor::Impl& self) mutable {
        auto& ga = ta.grad();
        const auto& y = self.data;  // normalized values
        const auto& g = self.grad;
        const double invn = 1.0 / static_cast<double>(sp.n);
        for (size_t o = 0; o < sp.outer; ++o)
            for (size_t i = 0; i < sp.inner; ++i) {
                double gmean = 0.0, gydot = 0.0;
                for (size_t t = 0; t < sp.n; ++t) {
                    size_t idx = (o * sp.n + t) * sp.inner + i;
                    gmean += g[idx];
                    gydot += g[idx] * y[idx];
                }
                gmean *= invn;
                gydot *= invn;
                double is = inv_sigma[o * sp.inner + i];
                for (size_t t = 0; t < sp.n; ++t) {
                    size_t idx = (o * sp.n + t) * sp.inner + i;
                    ga[idx] += is * (g[idx] - gmean - y[idx] * gydot);
                }
            }
    };
    return Tensor::make(a.shape(), std::move(out), rg, {a}, std::function<void(Tensor::Impl&)>(std::move(bw)),
                        "layer_norm");
}

Tensor l2_norm(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    double nrm = std::sqrt(s);
    Tensor ta = a;
    bool rg = a.requires_grad();
    auto bw = [ta, nrm](Tensor::Impl& self) mutable {
        if (nrm == 0.0) return;
        auto& ga = ta.grad();
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[0] * ta.data()[i] / nrm;
    };
    return Tensor::make({}, {nrm}, rg, {a}, std::function<void(Tensor::Impl&)>(std::move(bw)), "l2_norm");
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) shape_fail("cosine_similarity", a, b);
    const auto& ad = a.data();
    const auto& bd = b.data();
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < ad.size(); ++i) {
        dot += ad[i] * bd[i];
        na += ad[i] * ad[i];
        nb += bd[i] * bd[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    double c = dot / (na * nb);
    Tensor ta = a, tb = b;
    bool rg = a.requires_grad() || b.requires_grad();
    auto bw = [ta, tb, c, na, nb](Tensor::Impl& self) mutable {
        double g = self.grad[0];
        const auto& ad = ta.data();
        const auto& bd = tb.data();
        if (ta.requires_grad()) {
            auto& ga = ta.grad();
            for (size_t i = 0; i < ga.size(); ++i)
                ga[i] += g * (bd[i] / (na * nb) - c * ad[i] / (na * na));
        }
        if (tb.requires_grad()) {
            auto& gb = tb.grad();
            for (size_t i = 0; i < gb.size(); ++i)
                gb[i] += g * (ad[i] / (na * nb) - c * bd[i] / (nb * nb));
        }
    };
    return Tensor::make({}, {c}, rg, {a, b}, std::function<void(Tensor::Impl&)>(std::move(bw)), "cosine_similarity");
}

// --- grad_check -----------------------------------------------------------

GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<std::pair<std::string, Tensor>>& params, double h,
                           size_t max_coords_per_param, uint64_t select_seed) {
    if (h < 1e-7 || h > 1e-3)
        throw ConfigError("grad_check: h must lie in [1e-7, 1e-3], got " + std::to_string(h));

    for (const auto& [name, p] : params) {
        Tensor t = p;
        t.zero_grad();
    }
    Tensor root = f();
    if (!std::isfinite(root.item())) throw NumericError("grad_check: f is non-finite");
    backward(root);

    GradCheckReport report;
    std::mt19937_64 rng(select_seed);
    for (const auto& [name, p] : params) {
        Tensor t = p;
        size_t n = t.numel();
        std::vector<size_t> coords;
        if (max_coords_per_param == 0 || n <= max_coords_per_param) {
            coords.resize(n);
            for (size_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            for (size_t i = 0; i < max_coords_per_param; ++i)
                coords.push_back(rng() % n);
        }
        std::vector<double> analytic(t.grad().begin(), t.grad().end());
        for (size_t idx : coords) {
            double orig = t.data()[idx];
            t.data()[idx] = orig + h;
            double fp = f().item();
            t.data()[idx] = orig - h;
            double fm = f().item();
            t.data()[idx] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw NumericError("grad_check: perturbed f is non-finite at " + name);
            double numeric = (fp - fm) / (2.0 * h);
            double a = analytic[idx];
            double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
            ++report.coords_checked;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = name;
                report.worst_index = idx;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace anysat
