#pragma once

#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "qdavpr/parameters.hpp"
#include "qdavpr/types.hpp"

// Minimal reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every intermediate value of one forward pass. Ops are free
// functions taking and returning Var handles; calling Tape::backward on a 1x1
// result sweeps the tape in reverse and accumulates into Parameter::grad.

namespace qdavpr::ad {

template <typename Scalar>
class Tape;

template <typename Scalar>
struct Var {
    Tape<Scalar>* tape = nullptr;
    int id = -1;

    [[nodiscard]] const Mat<Scalar>& value() const { return tape->value(id); }
    [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
    [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
    [[nodiscard]] bool valid() const { return tape != nullptr && id >= 0; }
};

template <typename Scalar>
class Tape {
public:
    using Matrix = Mat<Scalar>;
    // Receives the gradient of the node it belongs to.
    using BackwardFn = std::function<void(Tape&, const Matrix&)>;

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<Scalar> constant(Matrix value);
    /// Leaf bound to a parameter; repeated calls for the same parameter share one node.
    Var<Scalar> parameter(Parameter<Scalar>& p);

    /// Records a computed node. `inputs` decide whether the node needs a gradient.
    Var<Scalar> record(Matrix value, std::initializer_list<Var<Scalar>> inputs, BackwardFn fn);
    Var<Scalar> record(Matrix value, std::span<const Var<Scalar>> inputs, BackwardFn fn);

    [[nodiscard]] const Matrix& value(int id) const { return nodes_[id].value; }
    [[nodiscard]] bool requires_grad(int id) const { return nodes_[id].requires_grad; }
    [[nodiscard]] bool requires_grad(Var<Scalar> v) const { return requires_grad(v.id); }
    [[nodiscard]] bool grad_enabled() const { return grad_enabled_; }
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }

    /// Adds `g` to the gradient buffer of `v` (no-op for constants).
    template <typename Derived>
    void accumulate(Var<Scalar> v, const Eigen::MatrixBase<Derived>& g) {
        Node& n = nodes_[v.id];
        if (!n.requires_grad) return;
        if (!n.has_grad) {
            n.grad = g;
            n.has_grad = true;
        } else {
            n.grad += g;
        }
    }

    /// Gradient buffer of a node after backward(); zero if nothing reached it.
    [[nodiscard]] Matrix grad(Var<Scalar> v) const;

    void backward(Var<Scalar> root, Scalar seed = Scalar(1));

private:
    struct Node {
        Matrix value;
        Matrix grad;
        BackwardFn backward;
        Parameter<Scalar>* param = nullptr;
        bool requires_grad = false;
        bool has_grad = false;
    };

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter<Scalar>*, int> param_nodes_;
    bool grad_enabled_;
};

// ---- elementwise / structural ------------------------------------------------

template <typename S> Var<S> add(Var<S> a, Var<S> b);
template <typename S> Var<S> sub(Var<S> a, Var<S> b);
template <typename S> Var<S> scale(Var<S> a, S factor);
/// a (R x C) + bias (1 x C) broadcast over rows.
template <typename S> Var<S> add_row(Var<S> a, Var<S> bias);
template <typename S> Var<S> relu(Var<S> a);
template <typename S> Var<S> reshape(Var<S> a, Eigen::Index rows, Eigen::Index cols);
template <typename S> Var<S> slice_cols(Var<S> a, Eigen::Index start, Eigen::Index count);
template <typename S> Var<S> slice_rows(Var<S> a, Eigen::Index start, Eigen::Index count);
template <typename S> Var<S> concat_cols(std::span<const Var<S>> parts);
template <typename S> Var<S> concat_rows(std::span<const Var<S>> parts);
template <typename S> Var<S> mean_rows(Var<S> a);
template <typename S> Var<S> sum_all(std::span<const Var<S>> scalars);

// ---- linear algebra ----------------------------------------------------------

template <typename S> Var<S> matmul(Var<S> a, Var<S> b);
/// a * b^T
template <typename S> Var<S> matmul_nt(Var<S> a, Var<S> b);
/// x * W^T + b, W stored (out x in).
template <typename S> Var<S> linear(Var<S> x, Var<S> weight, Var<S> bias);

// ---- normalisation -----------------------------------------------------------

template <typename S> Var<S> softmax_rows(Var<S> a);
template <typename S> Var<S> layer_norm(Var<S> x, Var<S> gamma, Var<S> beta, S eps = S(1e-5));
/// Each row divided by max(||row||, eps).
template <typename S> Var<S> normalize_rows(Var<S> a, S eps = S(1e-12));
/// Whole matrix divided by max(||a||_F, eps).
template <typename S> Var<S> normalize_all(Var<S> a, S eps = S(1e-12));

// ---- spatial -----------------------------------------------------------------

/// 3x3 convolution, stride 1, zero "same" padding, on a token grid (N x Cin).
/// weight is Cout x (9 * Cin) with column (ky * 3 + kx) * Cin + c.
template <typename S> Var<S> conv3x3(Var<S> x, Grid grid, Var<S> weight, Var<S> bias);
/// 2x2 average pooling with stride 2 (floor), returns the pooled token grid.
template <typename S> Var<S> avg_pool2x2(Var<S> x, Grid grid);
[[nodiscard]] inline Grid pooled_grid(Grid g) { return {g.height / 2, g.width / 2}; }

// ---- gradient reversal and losses ---------------------------------------------

/// Identity forward; backward multiplies the incoming gradient by `lambda`.
template <typename S> Var<S> grl(Var<S> a, S lambda);
/// Mean softmax cross-entropy over rows of `logits`.
template <typename S> Var<S> cross_entropy(Var<S> logits, std::span<const int> labels);
/// Attaches an externally computed scalar loss with a known gradient w.r.t. `input`.
template <typename S> Var<S> external_loss(Var<S> input, S value, Mat<S> grad);

}  // namespace qdavpr::ad
