#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "gdflow/array.hpp"

namespace gdflow::ad {

class Tape;

// Lightweight handle to a node on a tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Array& value() const;
    const Shape& shape() const;
    bool requires_grad() const;
};

// Records the forward graph in topological order; backward() replays it in
// reverse. Gradients are cleared and re-accumulated on every call, so running
// backward twice over the same tape yields identical results.
class Tape {
public:
    struct Node {
        Array value;
        Array grad;
        bool requires_grad = false;
        bool grad_live = false;
        std::function<void(Tape&)> backprop;
    };

    Var leaf(Array value, bool requires_grad);
    Var constant(Array value) { return leaf(std::move(value), false); }

    Var record(Array value, bool requires_grad, std::function<void(Tape&)> backprop);

    void backward(const Var& root);

    const Array& value(const Var& v) const { return nodes_[check(v)].value; }
    // Gradient of the last backward() root w.r.t. v; zeros if untouched.
    const Array& grad(const Var& v);

    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    // Accumulation buffer for node `id`, zero-initialized on first touch.
    Array& grad_buf(int id);

    std::size_t size() const { return nodes_.size(); }

private:
    std::size_t check(const Var& v) const;
    std::vector<Node> nodes_;
    bool ran_backward_ = false;
};

inline const Array& Var::value() const { return tape->value(*this); }
inline const Shape& Var::shape() const { return tape->value(*this).shape(); }
inline bool Var::requires_grad() const { return tape->node(id).requires_grad; }

// ---- Operation suite ------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);

// x[..., C] + v[C], broadcast over leading axes.
Var add_bias(Var x, Var v);
// x[..., C] * v[C], broadcast over leading axes.
Var scale_cols(Var x, Var v);

Var matmul(Var a, Var b);
// Rank-2 transpose.
Var transpose(Var a);
// Batched matmul (B,m,k)x(B,k,n); either operand may be rank-2 and is then
// shared across the batch.
Var bmm(Var a, Var b);

Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var relu(Var a);
Var softmax_last(Var a);
Var clamp(Var a, double lo, double hi, long* saturation_count = nullptr);

Var sum_all(Var a);
Var mean_all(Var a);
Var sum_last(Var a);

Var reshape(Var a, Shape shape);
Var concat(Var a, Var b, int axis);
Var slice(Var a, int axis, int start, int stop);
Var flip_last(Var a);

// out[r,i] = sum_j F[r, i*dc + j] * V[r, j]  with F (R, h*dc), V (R, dc).
Var contract_field(Var f, Var v);

// Fused dense layer plus field contraction:
//   M[r] = act[r] * W + bias   (h_out x dc matrix per row, never stored)
//   out[r,i] = sum_j M[r, i*dc + j] * V[r, j]
// Equivalent to contract_field(add_bias(matmul(act, W), bias), V) without
// materializing the (R, h_out*dc) activation.
Var fused_linear_contract(Var act, Var w, Var bias, Var v);

// Linear-interpolation q-quantile of a rank-1 input. Gradient goes to the
// participating order statistics, split equally across exact ties.
Var quantile(Var a, double q);

} // namespace gdflow::ad
