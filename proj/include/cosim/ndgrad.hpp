#pragma once

// Minimal define-by-run reverse-mode autodiff over dense float64 tensors.
//
// Tensors are cheap shared handles onto a graph node. An operation whose
// inputs track gradients records itself (parents + backward closure) on the
// node it produces; backward() linearizes the recorded graph into a tape in
// topological order, runs it in reverse once, and releases it.
//
// Broadcasting is limited to a rank-1 operand of shape [k] against a rank-2
// operand of shape [N, k] (the leading batch dimension).

#include "cosim/common.hpp"

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cosim::nd {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& s);
std::size_t shape_numel(const Shape& s);

class ShapeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until a gradient reaches this node
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;  // pushes this->grad into parents

    bool is_leaf() const { return !backward_fn; }
    std::vector<double>& grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

}  // namespace detail

class Tensor {
public:
    Tensor();
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor from_points(const Points& p, bool requires_grad = false);

    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->value.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const { return node_->value; }
    /// Mutable view of the values; only meaningful on leaves (parameters, inputs).
    std::span<double> data_mut() { return node_->value; }
    double item() const;
    double at(std::size_t i, std::size_t j) const { return node_->value[i * cols() + j]; }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool on);
    bool is_leaf() const { return node_->is_leaf(); }

    bool has_grad() const { return !node_->grad.empty(); }
    /// Gradient buffer; zeros if nothing has been accumulated yet.
    std::span<const double> grad() const;
    void zero_grad();

    /// Same values, no history, not tracking.
    Tensor detach() const;
    /// Deep copy of values; the copy is a fresh leaf with the given tracking flag.
    Tensor clone(bool requires_grad) const;

    Points to_points() const;

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

    // internal
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

// Primitives ---------------------------------------------------------------

/// [m,k] x [k,n] -> [m,n]; [m,k] x [k] -> [m].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
/// Multiplies row i of a rank-2 tensor by the constant factors[i].
Tensor scale_rows(const Tensor& a, std::span<const double> factors);
Tensor silu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sq_norm(const Tensor& a);
/// Column-wise concatenation of two rank-2 tensors with equal row counts
/// (or plain concatenation of two rank-1 tensors).
Tensor concat(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }

/// Reverse pass from a scalar loss. Leaf gradients accumulate (+=); the
/// recorded graph behind `loss` is released afterwards.
void backward(const Tensor& loss);

/// Flattened reverse-order tape of the graph behind `root` (testing aid).
std::vector<std::shared_ptr<detail::Node>> build_tape(const Tensor& root);

// Optimizer ----------------------------------------------------------------

struct AdamOptions {
    double beta1 = 0.0;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamOptions options;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::size_t step = 0;

    AdamState() = default;
    AdamState(std::span<const Tensor> params, AdamOptions opts);
};

/// One bias-corrected Adam update using the gradients held by `params`.
/// Throws NumericalError (and leaves params untouched) if any gradient is
/// non-finite.
void adam_step(std::span<Tensor> params, AdamState& state, double lr);

void zero_grads(std::span<Tensor> params);

}  // namespace cosim::nd
