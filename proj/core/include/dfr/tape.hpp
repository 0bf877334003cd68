// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode tape. Each primitive appends one node holding the forward
// value and a closure that scatters the node's gradient into its inputs.
// Nodes are appended after their inputs, so the tape is topologically
// ordered by construction and backward() is a single reverse sweep that
// visits each node exactly once.
//
// Tie rules: max reductions select the lowest index among equal maxima,
// min_elem routes the gradient to the first operand on ties. Both are
// deterministic by construction.

#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dfr/rng.hpp"
#include "dfr/tensor.hpp"

namespace dfr::diff {

/// Handle to a node on a Tape. Only valid for the tape that produced it.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // ---- node creation -------------------------------------------------

    /// Record a leaf. Gradient is tracked when t.requires_grad is set.
    Var leaf(Tensor t);

    /// Record a non-differentiable constant.
    Var constant(Tensor t);
    Var constant_scalar(Real v) { return constant(Tensor::scalar(v)); }

    /// Register a named parameter leaf. Repeated registration of the same
    /// tensor on this tape returns the original handle, so gradients from
    /// every use accumulate in one place.
    Var param(const std::string& name, const Tensor& storage);

    // ---- primitives ------------------------------------------------------

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    /// y = scale * a + shift, elementwise.
    Var affine(Var a, Real scale, Real shift);
    Var scale(Var a, Real k) { return affine(a, k, 0.0); }

    /// [N,F] + [F], the bias-broadcast add.
    Var add_rowvec(Var m, Var v);

    /// 2D x 2D matrix product, or 2D x 1D matrix-vector product.
    Var matmul(Var a, Var b);
    /// a [N,D] times b [M,D] transposed -> [N,M].
    Var matmul_nt(Var a, Var b);

    /// Concatenate 2D blocks with equal row counts along columns.
    Var concat_cols(const std::vector<Var>& parts);

    /// [F] -> [N,F], each row a copy.
    Var broadcast_rows(Var v, int n);
    /// [N] -> [N,S], each column a copy.
    Var repeat_cols(Var v, int s);

    Var min_elem(Var a, Var b);

    Var relu(Var a);
    Var leaky_relu(Var a, Real slope);
    Var sigmoid(Var a);

    /// Row-wise softmax; a 1D input is treated as a single row.
    Var softmax(Var a);

    /// y = target_norm * x / max(||x||, 1e-12) for a 1D vector.
    Var l2_normalize(Var a, Real target_norm);

    /// Column-wise max of a 2D tensor -> [cols].
    Var colwise_max(Var m);
    /// Max over all elements -> scalar.
    Var max_all(Var a);

    Var sum_all(Var a);
    Var mean_all(Var a);

    /// Mean squared error -> scalar.
    Var mse(Var pred, Var target);
    /// Binary cross entropy with probability clamp -> scalar mean.
    Var bce(Var prob, Var target);
    /// -log softmax(logits)[target] for a 1D logits vector -> scalar.
    Var cross_entropy_logits(Var logits, int target);

    /// Select flat elements; backward scatter-adds into the source.
    Var gather(Var a, std::vector<int> flat_indices);
    /// Select rows of a 2D tensor.
    Var select_rows(Var m, std::vector<int> rows);
    /// Same values, new shape of equal element count.
    Var reshape(Var a, std::vector<int> shape);

    // ---- execution -------------------------------------------------------

    /// Reverse sweep from a scalar loss. Gradients of reachable nodes are
    /// accumulated; leaves that never influenced the loss keep zero grads.
    void backward(Var loss);

    const Tensor& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
    /// Gradient of a node after backward(); zeros if the node was unreachable.
    Tensor grad_of(Var v) const;

    /// Named gradients for every registered parameter, in registration
    /// order. Unreached parameters report zero gradients.
    std::vector<std::pair<std::string, Tensor>> param_grads() const;

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool grad_ready = false;
        bool requires_grad = false;
        std::function<void(Tape&, const Node&)> backprop;
    };

    Var push(Tensor value, bool requires_grad, std::function<void(Tape&, const Node&)> fn);
    Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
    const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(v.id)]; }
    Tensor& grad_buffer(int id);
    void check_var(Var v, const char* prim) const;

    std::vector<Node> nodes_;
    std::map<const void*, Var> param_vars_;
    std::vector<std::pair<std::string, Var>> param_order_;
};

/// Fill a tensor with draws from N(0, stddev^2).
Tensor randn(std::vector<int> shape, Rng& rng, Real stddev);

}  // namespace dfr::diff
