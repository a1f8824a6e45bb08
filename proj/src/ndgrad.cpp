#include "cosim/ndgrad.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace cosim::nd {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

using NodePtr = std::shared_ptr<detail::Node>;

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                     shape_string(b));
}

// Builds the output node. History is recorded only if some parent tracks
// gradients; otherwise the result is a constant leaf.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<NodePtr> parents,
                   std::function<void(detail::Node&)> fn) {
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool track = std::any_of(parents.begin(), parents.end(),
                             [](const NodePtr& p) { return p->requires_grad; });
    if (track) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward_fn = std::move(fn);
    }
    return Tensor(std::move(n));
}

enum class Bcast { Same, RowVector };

Bcast elementwise_mode(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) return Bcast::Same;
    if (a.rank() == 2 && b.rank() == 1 && a.shape()[1] == b.shape()[0]) return Bcast::RowVector;
    shape_fail(op, a.shape(), b.shape());
}

template <class Fwd>
std::vector<double> elementwise(const Tensor& a, const Tensor& b, Bcast mode, Fwd f) {
    auto av = a.data();
    auto bv = b.data();
    std::vector<double> out(av.size());
    if (mode == Bcast::Same) {
        for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i]);
    } else {
        const std::size_t k = bv.size();
        for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i % k]);
    }
    return out;
}

}  // namespace

std::string shape_string(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

// Tensor -------------------------------------------------------------------

Tensor::Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
    if (shape_numel(shape) != data.size())
        throw ShapeError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_string(shape));
    node_->shape = std::move(shape);
    node_->value = std::move(data);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) { return Tensor(Shape{}, {v}, requires_grad); }

Tensor Tensor::from_points(const Points& p, bool requires_grad) {
    std::vector<double> v(p.data(), p.data() + p.size());
    return Tensor(Shape{static_cast<std::size_t>(p.rows()), static_cast<std::size_t>(p.cols())},
                  std::move(v), requires_grad);
}

std::size_t Tensor::rows() const { return rank() == 2 ? shape()[0] : 1; }
std::size_t Tensor::cols() const {
    if (rank() == 2) return shape()[1];
    if (rank() == 1) return shape()[0];
    return 1;
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
    return node_->value[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
}

std::span<const double> Tensor::grad() const {
    if (node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0);
    return node_->grad;
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

Tensor Tensor::detach() const { return Tensor(shape(), node_->value, false); }

Tensor Tensor::clone(bool requires_grad) const { return Tensor(shape(), node_->value, requires_grad); }

Points Tensor::to_points() const {
    Points p(static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols()));
    std::copy(node_->value.begin(), node_->value.end(), p.data());
    return p;
}

// Primitives ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || (b.rank() != 1 && b.rank() != 2) || a.shape()[1] != b.shape()[0])
        shape_fail("matmul", a.shape(), b.shape());
    const auto m = static_cast<Eigen::Index>(a.shape()[0]);
    const auto k = static_cast<Eigen::Index>(a.shape()[1]);
    const auto n = static_cast<Eigen::Index>(b.rank() == 2 ? b.shape()[1] : 1);
    std::vector<double> out(static_cast<std::size_t>(m * n));
    MapM(out.data(), m, n).noalias() = MapC(a.data().data(), m, k) * MapC(b.data().data(), k, n);
    Shape shape = b.rank() == 2 ? Shape{a.shape()[0], b.shape()[1]} : Shape{a.shape()[0]};
    auto pa = a.node();
    auto pb = b.node();
    return make_result(std::move(shape), std::move(out), {pa, pb},
                       [pa, pb, m, k, n](detail::Node& self) {
                           MapC g(self.grad.data(), m, n);
                           if (pa->requires_grad)
                               MapM(pa->grad_buffer().data(), m, k).noalias() +=
                                   g * MapC(pb->value.data(), k, n).transpose();
                           if (pb->requires_grad)
                               MapM(pb->grad_buffer().data(), k, n).noalias() +=
                                   MapC(pa->value.data(), m, k).transpose() * g;
                       });
}

namespace {

// Reduces a gradient shaped like `a` down to the [k] operand of a row broadcast.
void accumulate_broadcast(std::vector<double>& dst, std::span<const double> src, Bcast mode) {
    if (mode == Bcast::Same) {
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
    } else {
        const std::size_t k = dst.size();
        for (std::size_t i = 0; i < src.size(); ++i) dst[i % k] += src[i];
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    auto mode = elementwise_mode("add", a, b);
    auto out = elementwise(a, b, mode, [](double x, double y) { return x + y; });
    auto pa = a.node();
    auto pb = b.node();
    return make_result(a.shape(), std::move(out), {pa, pb}, [pa, pb, mode](detail::Node& self) {
        if (pa->requires_grad) accumulate_broadcast(pa->grad_buffer(), self.grad, Bcast::Same);
        if (pb->requires_grad) accumulate_broadcast(pb->grad_buffer(), self.grad, mode);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    auto mode = elementwise_mode("sub", a, b);
    auto out = elementwise(a, b, mode, [](double x, double y) { return x - y; });
    auto pa = a.node();
    auto pb = b.node();
    return make_result(a.shape(), std::move(out), {pa, pb}, [pa, pb, mode](detail::Node& self) {
        if (pa->requires_grad) accumulate_broadcast(pa->grad_buffer(), self.grad, Bcast::Same);
        if (pb->requires_grad) {
            std::vector<double> neg(self.grad.size());
            std::transform(self.grad.begin(), self.grad.end(), neg.begin(), std::negate<>());
            accumulate_broadcast(pb->grad_buffer(), neg, mode);
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    auto mode = elementwise_mode("mul", a, b);
    auto out = elementwise(a, b, mode, [](double x, double y) { return x * y; });
    auto pa = a.node();
    auto pb = b.node();
    return make_result(a.shape(), std::move(out), {pa, pb}, [pa, pb, mode](detail::Node& self) {
        const std::size_t n = self.grad.size();
        const std::size_t k = pb->value.size();
        if (pa->requires_grad) {
            auto& ga = pa->grad_buffer();
            for (std::size_t i = 0; i < n; ++i)
                ga[i] += self.grad[i] * pb->value[mode == Bcast::Same ? i : i % k];
        }
        if (pb->requires_grad) {
            auto& gb = pb->grad_buffer();
            for (std::size_t i = 0; i < n; ++i)
                gb[mode == Bcast::Same ? i : i % k] += self.grad[i] * pa->value[i];
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= c;
    auto pa = a.node();
    return make_result(a.shape(), std::move(out), {pa}, [pa, c](detail::Node& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * self.grad[i];
    });
}

Tensor scale_rows(const Tensor& a, std::span<const double> factors) {
    if (a.rank() != 2 || factors.size() != a.shape()[0])
        shape_fail("scale_rows", a.shape(), Shape{factors.size()});
    const std::size_t r = a.shape()[0];
    const std::size_t c = a.shape()[1];
    std::vector<double> f(factors.begin(), factors.end());
    std::vector<double> out(a.numel());
    auto av = a.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = av[i * c + j] * f[i];
    auto pa = a.node();
    return make_result(a.shape(), std::move(out), {pa},
                       [pa, f = std::move(f), r, c](detail::Node& self) {
                           auto& g = pa->grad_buffer();
                           for (std::size_t i = 0; i < r; ++i)
                               for (std::size_t j = 0; j < c; ++j)
                                   g[i * c + j] += f[i] * self.grad[i * c + j];
                       });
}

Tensor silu(const Tensor& a) {
    auto av = a.data();
    std::vector<double> out(av.size());
    std::vector<double> sig(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) {
        sig[i] = 1.0 / (1.0 + std::exp(-av[i]));
        out[i] = av[i] * sig[i];
    }
    auto pa = a.node();
    return make_result(a.shape(), std::move(out), {pa},
                       [pa, sig = std::move(sig)](detail::Node& self) {
                           auto& g = pa->grad_buffer();
                           for (std::size_t i = 0; i < g.size(); ++i) {
                               const double x = pa->value[i];
                               g[i] += self.grad[i] * sig[i] * (1.0 + x * (1.0 - sig[i]));
                           }
                       });
}

Tensor tanh(const Tensor& a) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v = std::tanh(v);
    auto pa = a.node();
    return make_result(a.shape(), out, {pa}, [pa, out](detail::Node& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (1.0 - out[i] * out[i]);
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    auto pa = a.node();
    return make_result(Shape{}, {s}, {pa}, [pa](detail::Node& self) {
        auto& g = pa->grad_buffer();
        for (auto& v : g) v += self.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw ShapeError("mean of empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sq_norm(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    auto pa = a.node();
    return make_result(Shape{}, {s}, {pa}, [pa](detail::Node& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * pa->value[i] * self.grad[0];
    });
}

Tensor concat(const Tensor& a, const Tensor& b) {
    if (a.rank() == 1 && b.rank() == 1) {
        std::vector<double> out(a.data().begin(), a.data().end());
        out.insert(out.end(), b.data().begin(), b.data().end());
        auto pa = a.node();
        auto pb = b.node();
        const std::size_t na = a.numel();
        return make_result(Shape{out.size()}, std::move(out), {pa, pb},
                           [pa, pb, na](detail::Node& self) {
                               if (pa->requires_grad) {
                                   auto& g = pa->grad_buffer();
                                   for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                               }
                               if (pb->requires_grad) {
                                   auto& g = pb->grad_buffer();
                                   for (std::size_t i = 0; i < g.size(); ++i)
                                       g[i] += self.grad[na + i];
                               }
                           });
    }
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[0] != b.shape()[0])
        shape_fail("concat", a.shape(), b.shape());
    const std::size_t r = a.shape()[0];
    const std::size_t ca = a.shape()[1];
    const std::size_t cb = b.shape()[1];
    const std::size_t c = ca + cb;
    std::vector<double> out(r * c);
    auto av = a.data();
    auto bv = b.data();
    for (std::size_t i = 0; i < r; ++i) {
        std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(i * ca), ca,
                    out.begin() + static_cast<std::ptrdiff_t>(i * c));
        std::copy_n(bv.begin() + static_cast<std::ptrdiff_t>(i * cb), cb,
                    out.begin() + static_cast<std::ptrdiff_t>(i * c + ca));
    }
    auto pa = a.node();
    auto pb = b.node();
    return make_result(Shape{r, c}, std::move(out), {pa, pb},
                       [pa, pb, r, ca, cb, c](detail::Node& self) {
                           if (pa->requires_grad) {
                               auto& g = pa->grad_buffer();
                               for (std::size_t i = 0; i < r; ++i)
                                   for (std::size_t j = 0; j < ca; ++j)
                                       g[i * ca + j] += self.grad[i * c + j];
                           }
                           if (pb->requires_grad) {
                               auto& g = pb->grad_buffer();
                               for (std::size_t i = 0; i < r; ++i)
                                   for (std::size_t j = 0; j < cb; ++j)
                                       g[i * cb + j] += self.grad[i * c + ca + j];
                           }
                       });
}

// Reverse pass ---------------------------------------------------------------

std::vector<NodePtr> build_tape(const Tensor& root) {
    // Iterative post-order DFS; the result lists every reachable tracking node
    // after all of its parents, so reversing it gives a valid reverse sweep.
    std::vector<NodePtr> order;
    std::unordered_set<const detail::Node*> seen;
    std::vector<std::pair<NodePtr, std::size_t>> stack;
    if (!root.requires_grad()) return order;
    stack.emplace_back(root.node(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            const auto& p = node->parents[next++];
            if (p->requires_grad && seen.insert(p.get()).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

void backward(const Tensor& loss) {
    if (loss.numel() != 1)
        throw ShapeError("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
    if (!loss.requires_grad()) throw ValidationError("backward on a loss that tracks no gradients");
    auto tape = build_tape(loss);
    loss.node()->grad_buffer()[0] += 1.0;
    for (auto it = tape.rbegin(); it != tape.rend(); ++it) {
        auto& n = **it;
        if (n.is_leaf()) continue;
        if (!n.grad.empty()) n.backward_fn(n);
    }
    // Consume the tape: interior nodes drop history and scratch gradients.
    for (auto& n : tape) {
        if (n->is_leaf()) continue;
        n->backward_fn = nullptr;
        n->parents.clear();
        n->grad.clear();
        n->requires_grad = false;
    }
}

// Adam -----------------------------------------------------------------------

AdamState::AdamState(std::span<const Tensor> params, AdamOptions opts) : options(opts) {
    for (const auto& p : params) {
        m.emplace_back(p.numel(), 0.0);
        v.emplace_back(p.numel(), 0.0);
    }
}

void adam_step(std::span<Tensor> params, AdamState& state, double lr) {
    if (!(lr > 0.0)) throw ValidationError("adam_step: learning rate must be positive");
    if (state.m.size() != params.size())
        throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                         " tensors but " + std::to_string(params.size()) + " were given");
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (state.m[p].size() != params[p].numel())
            throw ShapeError("adam_step: moment buffer size mismatch for parameter " +
                             std::to_string(p));
        for (double g : params[p].grad())
            if (!std::isfinite(g))
                throw NumericalError("adam_step: non-finite gradient in parameter " +
                                     std::to_string(p) + " at step " +
                                     std::to_string(state.step + 1));
    }
    const auto& o = state.options;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(o.beta1, t);
    const double bc2 = 1.0 - std::pow(o.beta2, t);
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto g = params[p].grad();
        auto w = params[p].data_mut();
        auto& m = state.m[p];
        auto& v = state.v[p];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
            v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + o.eps);
        }
    }
}

void zero_grads(std::span<Tensor> params) {
    for (auto& p : params) p.zero_grad();
}

}  // namespace cosim::nd
