#include "gdflow/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace gdflow::ad {

namespace {

void require_same_tape(const Var& a, const Var& b, const char* op) {
    if (a.tape != b.tape)
        throw NumericError(std::string(op) + ": operands live on different tapes");
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (!(a.value().same_shape(b.value())))
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

Shape drop_last(const Shape& s) {
    Shape out(s.begin(), s.end() - 1);
    return out;
}

// Rows/cols view of an array treated as (leading..., C).
std::pair<std::size_t, int> rows_cols(const Array& a, const char* op) {
    if (a.rank() < 1) throw ShapeError(std::string(op) + ": rank-0 input");
    int c = a.dim(a.rank() - 1);
    return {a.size() / static_cast<std::size_t>(c), c};
}

} // namespace

std::size_t Tape::check(const Var& v) const {
    if (v.tape != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
        throw NumericError("Tape: invalid variable handle");
    return static_cast<std::size_t>(v.id);
}

Var Tape::leaf(Array value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Array value, bool requires_grad, std::function<void(Tape&)> backprop) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Array& Tape::grad_buf(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.grad_live) {
        n.grad = Array(n.value.shape());
        n.grad_live = true;
    }
    return n.grad;
}

const Array& Tape::grad(const Var& v) {
    std::size_t i = check(v);
    if (!nodes_[i].requires_grad)
        throw NumericError("Tape::grad: variable does not require grad");
    if (!ran_backward_) throw NumericError("Tape::grad: backward has not run");
    if (!nodes_[i].grad_live) grad_buf(v.id);
    return nodes_[i].grad;
}

void Tape::backward(const Var& root) {
    std::size_t r = check(root);
    if (nodes_[r].value.size() != 1)
        throw NumericError("backward: root must be a scalar");
    if (!nodes_[r].requires_grad)
        throw NumericError("backward: root does not require grad");
    for (Node& n : nodes_) {
        n.grad = Array();
        n.grad_live = false;
    }
    grad_buf(root.id)[0] = 1.0;
    for (std::size_t i = r + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.grad_live && n.backprop) n.backprop(*this);
    }
    ran_backward_ = true;
}

// ---- helpers for op bodies -------------------------------------------------

namespace {

// Unary elementwise op. dfdx receives (x, y) and returns dy/dx.
template <typename F, typename D>
Var unary(Var a, const char* name, F&& f, D&& dfdx) {
    const Array& x = a.value();
    Array y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
    check_finite(y, name);
    int aid = a.id;
    int yid = static_cast<int>(a.tape->size());
    return a.tape->record(std::move(y), a.requires_grad(), [aid, yid, dfdx](Tape& t) {
        const Array& g = t.node(yid).grad;
        if (!t.node(aid).requires_grad) return;
        const Array& xv = t.node(aid).value;
        const Array& yv = t.node(yid).value;
        Array& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(xv[i], yv[i]);
    });
}

} // namespace

Var add(Var a, Var b) {
    require_same_tape(a, b, "add");
    require_same_shape(a, b, "add");
    const Array &x = a.value(), &y = b.value();
    Array out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
    check_finite(out, "add");
    int aid = a.id, bid = b.id;
    int oid = static_cast<int>(a.tape->size());
    return a.tape->record(std::move(out), a.requires_grad() || b.requires_grad(),
                          [aid, bid, oid](Tape& t) {
                              const Array& g = t.node(oid).grad;
                              for (int id : {aid, bid}) {
                                  if (!t.node(id).requires_grad) continue;
                                  Array& gi = t.grad_buf(id);
                                  for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
                              }
                          });
}

Var sub(Var a, Var b) {
    require_same_tape(a, b, "sub");
    require_same_shape(a, b, "sub");
    const Array &x = a.value(), &y = b.value();
    Array out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
    check_finite(out, "sub");
    int aid = a.id, bid = b.id;
    int oid = static_cast<int>(a.tape->size());
    return a.tape->record(std::move(out), a.requires_grad() || b.requires_grad(),
                          [aid, bid, oid](Tape& t) {
                              const Array& g = t.node(oid).grad;
                              if (t.node(aid).requires_grad) {
                                  Array& ga = t.grad_buf(aid);
                                  for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                              }
                              if (t.node(bid).requires_grad) {
                                  Array& gb = t.grad_buf(bid);
                                  for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                              }
                          });
}

Var mul(Var a, Var b) {
    require_same_tape(a, b, "mul");
    require_same_shape(a, b, "mul");
    const Array &x = a.value(), &y = b.value();
    Array out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
    check_finite(out, "mul");
    int aid = a.id, bid = b.id;
    int oid = static_cast<int>(a.tape->size());
    return a.tape->record(std::move(out), a.requires_grad() || b.requires_grad(),
                          [aid, bid, oid](Tape& t) {
                              const Array& g = t.node(oid).grad;
                              const Array& xv = t.node(aid).value;
                              const Array& yv = t.node(bid).value;
                              if (t.node(aid).requires_grad) {
                                  Array& ga = t.grad_buf(aid);
                                  for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * yv[i];
                              }
                              if (t.node(bid).requires_grad) {
                                  Array& gb = t.grad_buf(bid);
                                  for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * xv[i];
                              }
                          });
}

Var neg(Var a) {
    return unary(a, "neg", [](double x) { return -x; },
                 [](double, double) { return -1.0; });
}

Var scale(Var a, double c) {
    return unary(a, "scale", [c](double x) { return c * x; },
                 [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
    return unary(a, "add_scalar", [c](double x) { return x + c; },
                 [](double, double) { return 1.0; });
}

Var add_bias(Var x, Var v) {
    require_same_tape(x, v, "add_bias");
    const Array &xv = x.value(), &vv = v.value();
    auto [rows, cols] = rows_cols(xv, "add_bias");
    if (vv.rank() != 1 || vv.dim(0) != cols)
        throw ShapeError("add_bias: bias shape " + shape_str(vv.shape()) +
                         " does not match last axis " + std::to_string(cols));
    Array out(xv.shape());
    for (std::size_t r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            out[r * cols + c] = xv[r * cols + c] + vv[static_cast<std::size_t>(c)];
    check_finite(out, "add_bias");
    int xid = x.id, vid = v.id;
    int oid = static_cast<int>(x.tape->size());
    return x.tape->record(std::move(out), x.requires_grad() || v.requires_grad(),
                          [xid, vid, oid, rows = rows, cols = cols](Tape& t) {
                              const Array& g = t.node(oid).grad;
                              if (t.node(xid).requires_grad) {
                                  Array& gx = t.grad_buf(xid);
                                  for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                              }
                              if (t.node(vid).requires_grad) {
                                  Array& gv = t.grad_buf(vid);
                                  for (std::size_t r = 0; r < rows; ++r)
                                      for (int c = 0; c < cols; ++c)
                                          gv[static_cast<std::size_t>(c)] += g[r * cols + c];
                              }
                          });
}

Var scale_cols(Var x, Var v) {
    require_same_tape(x, v, "scale_cols");
    const Array &xv = x.value(), &vv = v.value();
    auto [rows, cols] = rows_cols(xv, "scale_cols");
    if (vv.rank() != 1 || vv.dim(0) != cols)
        throw ShapeError("scale_cols: vector shape " + shape_str(vv.shape()) +
                         " does not match last axis " + std::to_string(cols));
    Array out(xv.shape());
    for (std::size_t r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            out[r * cols + c] = xv[r * cols + c] * vv[static_cast<std::size_t>(c)];
    check_finite(out, "scale_cols");
    int xid = x.id, vid = v.id;
    int oid = static_cast<int>(x.tape->size());
    return x.tape->record(std::move(out), x.requires_grad() || v.requires_grad(),
                          [xid, vid, oid, rows = rows, cols = cols](Tape& t) {
                              const Array& g = t.node(oid).grad;
                              const Array& xval = t.node(xid).value;
                              const Array& vval = t.node(vid).value;
                              if (t.node(xid).requires_grad) {
                                  Array& gx = t.grad_buf(xid);
                                  for (std::size_t r = 0; r < rows; ++r)
                                      for (int c = 0; c < cols; ++c)
                                          gx[r * cols + c] +=
                                              g[r * cols + c] * vval[static_cast<std::size_t>(c)];
                              }
                              if (t.node(vid).requires_grad) {
                                  Array& gv = t.grad_buf(vid);
                                  for (std::size_t r = 0; r < rows; ++r)
                                      for (int c = 0; c < cols; ++c)
                                          gv[static_cast<std::size_t>(c)] +=
                                              g[r * cols + c] * xval[r * cols + c];
                              }
                          });
}

Var matmul(Var a, Var b) {
    require_same_tape(a, b, "matmul");
    const Array &x = a.value(), &y = b.value();
    if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != y.dim(0))
        throw ShapeError("matmul: incompatible shapes " + shape_str(x.shape()) + " x " +
                         shape_str(y.shape()));
    int m = x.dim(0), k = x.dim(1), n = y.dim(1);
    Array out({m, n});
    kern::matmul(x.data(), y.data(), out.data(), m, k, n, false);
    check_finite(out, "matmul");
    int aid = a.id, bid = b.id;
    int oid = static_cast<int>(a.tape->size());
    return a.tape->record(std::move(out), a.requires_grad() || b.requires_grad(),
                          [aid, bid, oid, m, k, n](Tape& t) {
                              const Array& g = t.node(oid).grad;
                              const Array& xv = t.node(aid).value;
                              const Array& yv = t.node(bid).value;
                              if (t.node(aid).requires_grad)
                                  kern::matmul_a_bt(g.data(), yv.data(),
                                                    t.grad_buf(aid).data(), m, n, k);
                              if (t.node(bid).requires_grad)
                                  kern::matmul_at_b(xv.data(), g.data(),
                                                    t.grad_buf(bid).data(), m, k, n);
                          });
}

Var transpose(Var a) {
    const Array& x = a.value();
    if (x.rank() != 2)
        throw ShapeError("transpose expects rank-2, got " + shape_str(x.shape()));
    int m = x.dim(0), n = x.dim(1);
    Array out({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<std::size_t>(j) * m + i] = x[static_cast<std::size_t>(i) * n + j];
    int aid = a.id;
    int oid = static_cast<int>(a.tape->size());
    return a.tape->record(std::move(out), a.requires_grad(), [aid, oid, m, n](Tape& t) {
        if (!t.node(aid).requires_grad) return;
        const Array& g = t.node(oid).grad;
        Array& ga = t.grad_buf(aid);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                ga[static_cast<std::size_t>(i) * n + j] +=
                    g[static_cast<std::size_t>(j) * m + i];
    });
}

Var bmm(Var a, Var b) {
    require_same_tape(a, b, "bmm");
    const Array &x = a.value(), &y = b.value();
    bool xa = x.rank() == 3, yb = y.rank() == 3;
    if ((x.rank() != 2 && !xa) || (y.rank() != 2 && !yb) || (!xa && !yb))
        throw ShapeError("bmm: expected a rank-3 operand, got " + shape_str(x.shape()) +
                         " x " + shape_str(y.shape()));
    int batch = xa ? x.dim(0) : y.dim(0);
    if (xa && yb && x.dim(0) != y.dim(0))
        throw ShapeError("bmm: batch mismatch " + shape_str(x.shape()) + " x " +
                         shape_str(y.shape()));
    int m = x.dim(xa ? 1 : 0), k = x.dim(xa ? 2 : 1);
    int kb = y.dim(yb ? 1 : 0), n = y.dim(yb ? 2 : 1);
    if (k != kb)
        throw ShapeError("bmm: inner dimension mismatch " + shape_str(x.shape()) + " x " +
                         shape_str(y.shape()));
    Array out({batch, m, n});
    const std::size_t xs = xa ? static_cast<std::size_t>(m) * k : 0;
    const std::size_t ys = yb ? static_cast<std::size_t>(k) * n : 0;
    const std::size_t os = static_cast<std::size_t>(m) * n;
    for (int bi = 0; bi < batch; ++bi)
        kern::matmul(x.data() + xs * bi, y.data() + ys * bi, out.data() + os * bi, m, k, n,
                     false);
    check_finite(out, "bmm");
    int aid = a.id, bid = b.id;
    int oid = static_cast<int>(a.tape->size());
    return a.tape->record(
        std::move(out), a.requires_grad() || b.requires_grad(),
        [aid, bid, oid, batch, m, k, n, xs, ys, os](Tape& t) {
            const Array& g = t.node(oid).grad;
            const Array& xv = t.node(aid).value;
            const Array& yv = t.node(bid).value;
            if (t.node(aid).requires_grad) {
                Array& ga = t.grad_buf(aid);
                for (int bi = 0; bi < batch; ++bi)
                    kern::matmul_a_bt(g.data() + os * bi, yv.data() + ys * bi,
                                      ga.data() + xs * bi, m, n, k);
            }
            if (t.node(bid).requires_grad) {
                Array& gb = t.grad_buf(bid);
                for (int bi = 0; bi < batch; ++bi)
                    kern::matmul_at_b(xv.data() + xs * bi, g.data() + os * bi,
                                      gb.data() + ys * bi, m, k, n);
            }
        });
}

Var tanh(Var a) {
    return unary(a, "tanh", [](double x) { return std::tanh(x); },
                 [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
    return unary(a, "sigmoid",
                 [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                                              : std::exp(x) / (1.0 + std::exp(x)); },
                 [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var a) {
    return unary(a, "exp", [](double x) { return std::exp(x); },
                 [](double, double y) { return y; });
}

Var log(Var a) {
    return unary(a, "log", [](double x) { return std::log(x); },
                 [](double x, double) { return 1.0 / x; });
}

Var relu(Var a) {
    return unary(a, "relu", [](double x) { return x > 0 ? x : 0.0; },
                 [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var clamp(Var a, double lo, double hi, long* saturation_count) {
    if (lo > hi) throw NumericError("clamp: lo > hi");
    const Array& x = a.value();
    long sat = 0;
    Array y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double v = x[i];
        if (v < lo) {
            y[i] = lo;
            ++sat;
        } else if (v > hi) {
            y[i] = hi;
            ++sat;
        } else {
            y[i] = v;
        }
    }
    if (saturation_count) *saturation_count += sat;
    check_finite(y, "clamp");
    int aid = a.id;
    int oid = static_cast<int>(a.tape->size());
    return a.tape->record(std::move(y), a.requires_grad(), [aid, oid, lo, hi](Tape& t) {
        const Array& g = t.node(oid).grad;
        if (!t.node(aid).requires_grad) return;
        const Array& xv = t.node(aid).value;
        Array& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xv[i] >= lo && xv[i] <= hi) ga[i] += g[i];
    });
}

Var softmax_last(Var a) {
    const Array& x = a.value();
    auto [rows, cols] = rows_cols(x, "softmax_last");
    Array y(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * cols;
        double* yr = y.data() + r * cols;
        double mx = xr[0];
        for (int c = 1; c < cols; ++c) mx = std::max(mx, xr[c]);
        double s = 0.0;
        for (int c = 0; c < cols; ++c) {
            yr[c] = std::exp(xr[c] - mx);
            s += yr[c];
        }
        for (int c = 0; c < cols; ++c) yr[c] /= s;
    }
    check_finite(y, "softmax_last");
    int aid = a.id;
    int oid = static_cast<int>(a.tape->size());
    return a.tape->record(std::move(y), a.requires_grad(),
                          [aid, oid, rows = rows, cols = cols](Tape& t) {
                              const Array& g = t.node(oid).grad;
                              if (!t.node(aid).requires_grad) return;
                              const Array& yv = t.node(oid).value;
                              Array& ga = t.grad_buf(aid);
                              for (std::size_t r = 0; r < rows; ++r) {
                                  const double* gr = g.data() + r * cols;
                                  const double* yr = yv.data() + r * cols;
                                  double dot = 0.0;
                                  for (int c = 0; c < cols; ++c) dot += gr[c] * yr[c];
                                  double* gar = ga.data() + r * cols;
                                  for (int c = 0; c < cols; ++c)
                                      gar[c] += yr[c] * (gr[c] - dot);
                              }
                          });
}

Var sum_all(Var a) {
    const Array& x = a.value();
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
    Array out = Array::scalar(s);
    check_finite(out, "sum_all");
    int aid = a.id;
    int oid = static_cast<int>(a.tape->size());
    return a.tape->record(std::move(out), a.requires_grad(), [aid, oid](Tape& t) {
        const Array& g = t.node(oid).grad;
        if (!t.node(aid).requires_grad) return;
        Array& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
    });
}

Var mean_all(Var a) {
    const Array& x = a.value();
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
    double inv = 1.0 / static_cast<double>(x.size());
    Array out = Array::scalar(s * inv);
    check_finite(out, "mean_all");
    int aid = a.id;
    int oid = static_cast<int>(a.tape->size());
    return a.tape->record(std::move(out), a.requires_grad(), [aid, oid, inv](Tape& t) {
        const Array& g = t.node(oid).grad;
        if (!t.node(aid).requires_grad) return;
        Array& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0] * inv;
    });
}

Var sum_last(Var a) {
    const Array& x = a.value();
    auto [rows, cols] = rows_cols(x, "sum_last");
    Array out(drop_last(x.shape()));
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        const double* xr = x.data() + r * cols;
        for (int c = 0; c < cols; ++c) s += xr[c];
        out[r] = s;
    }
    check_finite(out, "sum_last");
    int aid = a.id;
    int oid = static_cast<int>(a.tape->size());
    return a.tape->record(std::move(out), a.requires_grad(),
                          [aid, oid, rows = rows, cols = cols](Tape& t) {
                              const Array& g = t.node(oid).grad;
                              if (!t.node(aid).requires_grad) return;
                              Array& ga = t.grad_buf(aid);
                              for (std::size_t r = 0; r < rows; ++r)
                                  for (int c = 0; c < cols; ++c) ga[r * cols + c] += g[r];
                          });
}

Var reshape(Var a, Shape shape) {
    const Array& x = a.value();
    if (shape_numel(shape) != x.size())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
    Array out(std::move(shape), x.vec());
    int aid = a.id;
    int oid = static_cast<int>(a.tape->size());
    return a.tape->record(std::move(out), a.requires_grad(), [aid, oid](Tape& t) {
        const Array& g = t.node(oid).grad;
        if (!t.node(aid).requires_grad) return;
        Array& ga = t.grad_buf(aid);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

namespace {

// outer/inner extents around `axis`.
struct AxisSplit {
    std::size_t outer = 1, inner = 1;
    int extent = 0;
};

AxisSplit split_axis(const Shape& s, int axis, const char* op) {
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for " + shape_str(s));
    AxisSplit out;
    for (int i = 0; i < axis; ++i) out.outer *= static_cast<std::size_t>(s[i]);
    out.extent = s[static_cast<std::size_t>(axis)];
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i)
        out.inner *= static_cast<std::size_t>(s[i]);
    return out;
}

} // namespace

Var concat(Var a, Var b, int axis) {
    require_same_tape(a, b, "concat");
    const Array &x = a.value(), &y = b.value();
    if (x.rank() != y.rank()) throw ShapeError("concat: rank mismatch");
    for (int i = 0; i < x.rank(); ++i)
        if (i != axis && x.dim(i) != y.dim(i))
            throw ShapeError("concat: shapes differ off-axis: " + shape_str(x.shape()) +
                             " vs " + shape_str(y.shape()));
    AxisSplit sx = split_axis(x.shape(), axis, "concat");
    AxisSplit sy = split_axis(y.shape(), axis, "concat");
    Shape oshape = x.shape();
    oshape[static_cast<std::size_t>(axis)] = sx.extent + sy.extent;
    Array out(oshape);
    const std::size_t ax = static_cast<std::size_t>(sx.extent) * sx.inner;
    const std::size_t ay = static_cast<std::size_t>(sy.extent) * sy.inner;
    for (std::size_t o = 0; o < sx.outer; ++o) {
        std::memcpy(out.data() + o * (ax + ay), x.data() + o * ax, ax * sizeof(double));
        std::memcpy(out.data() + o * (ax + ay) + ax, y.data() + o * ay, ay * sizeof(double));
    }
    int aid = a.id, bid = b.id;
    int oid = static_cast<int>(a.tape->size());
    return a.tape->record(std::move(out), a.requires_grad() || b.requires_grad(),
                          [aid, bid, oid, sx, ax, ay](Tape& t) {
                              const Array& g = t.node(oid).grad;
                              if (t.node(aid).requires_grad) {
                                  Array& ga = t.grad_buf(aid);
                                  for (std::size_t o = 0; o < sx.outer; ++o)
                                      for (std::size_t i = 0; i < ax; ++i)
                                          ga[o * ax + i] += g[o * (ax + ay) + i];
                              }
                              if (t.node(bid).requires_grad) {
                                  Array& gb = t.grad_buf(bid);
                                  for (std::size_t o = 0; o < sx.outer; ++o)
                                      for (std::size_t i = 0; i < ay; ++i)
                                          gb[o * ay + i] += g[o * (ax + ay) + ax + i];
                              }
                          });
}

Var slice(Var a, int axis, int start, int stop) {
    const Array& x = a.value();
    AxisSplit s = split_axis(x.shape(), axis, "slice");
    if (start < 0 || stop > s.extent || start >= stop)
        throw ShapeError("slice: bad range [" + std::to_string(start) + ", " +
                         std::to_string(stop) + ") on extent " + std::to_string(s.extent));
    Shape oshape = x.shape();
    oshape[static_cast<std::size_t>(axis)] = stop - start;
    Array out(oshape);
    const std::size_t span = static_cast<std::size_t>(stop - start) * s.inner;
    const std::size_t stride = static_cast<std::size_t>(s.extent) * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o)
        std::memcpy(out.data() + o * span, x.data() + o * stride + start * s.inner,
                    span * sizeof(double));
    int aid = a.id;
    int oid = static_cast<int>(a.tape->size());
    return a.tape->record(std::move(out), a.requires_grad(),
                          [aid, oid, s, start, span, stride](Tape& t) {
                              const Array& g = t.node(oid).grad;
                              if (!t.node(aid).requires_grad) return;
                              Array& ga = t.grad_buf(aid);
                              for (std::size_t o = 0; o < s.outer; ++o)
                                  for (std::size_t i = 0; i < span; ++i)
                                      ga[o * stride + start * s.inner + i] += g[o * span + i];
                          });
}

Var flip_last(Var a) {
    const Array& x = a.value();
    auto [rows, cols] = rows_cols(x, "flip_last");
    Array out(x.shape());
    for (std::size_t r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            out[r * cols + static_cast<std::size_t>(cols - 1 - c)] = x[r * cols + c];
    int aid = a.id;
    int oid = static_cast<int>(a.tape->size());
    return a.tape->record(std::move(out), a.requires_grad(),
                          [aid, oid, rows = rows, cols = cols](Tape& t) {
                              const Array& g = t.node(oid).grad;
                              if (!t.node(aid).requires_grad) return;
                              Array& ga = t.grad_buf(aid);
                              for (std::size_t r = 0; r < rows; ++r)
                                  for (int c = 0; c < cols; ++c)
                                      ga[r * cols + c] +=
                                          g[r * cols + static_cast<std::size_t>(cols - 1 - c)];
                          });
}

Var contract_field(Var f, Var v) {
    require_same_tape(f, v, "contract_field");
    const Array &fv = f.value(), &vv = v.value();
    if (fv.rank() != 2 || vv.rank() != 2 || fv.dim(0) != vv.dim(0))
        throw ShapeError("contract_field: expected (R, h*dc) and (R, dc), got " +
                         shape_str(fv.shape()) + " and " + shape_str(vv.shape()));
    int rows = fv.dim(0), dc = vv.dim(1);
    if (fv.dim(1) % dc != 0)
        throw ShapeError("contract_field: field width " + std::to_string(fv.dim(1)) +
                         " not a multiple of contraction dim " + std::to_string(dc));
    int h = fv.dim(1) / dc;
    Array out({rows, h});
    for (int r = 0; r < rows; ++r) {
        const double* fr = fv.data() + static_cast<std::size_t>(r) * h * dc;
        const double* vr = vv.data() + static_cast<std::size_t>(r) * dc;
        double* orow = out.data() + static_cast<std::size_t>(r) * h;
        for (int i = 0; i < h; ++i) {
            double acc = 0.0;
            for (int j = 0; j < dc; ++j) acc += fr[i * dc + j] * vr[j];
            orow[i] = acc;
        }
    }
    check_finite(out, "contract_field");
    int fid = f.id, vid = v.id;
    int oid = static_cast<int>(f.tape->size());
    return f.tape->record(
        std::move(out), f.requires_grad() || v.requires_grad(),
        [fid, vid, oid, rows, h, dc](Tape& t) {
            const Array& g = t.node(oid).grad;
            const Array& fval = t.node(fid).value;
            const Array& vval = t.node(vid).value;
            if (t.node(fid).requires_grad) {
                Array& gf = t.grad_buf(fid);
                for (int r = 0; r < rows; ++r) {
                    const double* gr = g.data() + static_cast<std::size_t>(r) * h;
                    const double* vr = vval.data() + static_cast<std::size_t>(r) * dc;
                    double* gfr = gf.data() + static_cast<std::size_t>(r) * h * dc;
                    for (int i = 0; i < h; ++i)
                        for (int j = 0; j < dc; ++j) gfr[i * dc + j] += gr[i] * vr[j];
                }
            }
            if (t.node(vid).requires_grad) {
                Array& gv = t.grad_buf(vid);
                for (int r = 0; r < rows; ++r) {
                    const double* gr = g.data() + static_cast<std::size_t>(r) * h;
                    const double* fr = fval.data() + static_cast<std::size_t>(r) * h * dc;
                    double* gvr = gv.data() + static_cast<std::size_t>(r) * dc;
                    for (int i = 0; i < h; ++i)
                        for (int j = 0; j < dc; ++j) gvr[j] += fr[i * dc + j] * gr[i];
                }
            }
        });
}

namespace {
constexpr int kFusedBlock = 64;
}

Var fused_linear_contract(Var act, Var w, Var bias, Var v) {
    require_same_tape(act, w, "fused_linear_contract");
    require_same_tape(act, bias, "fused_linear_contract");
    require_same_tape(act, v, "fused_linear_contract");
    const Array &av = act.value(), &wv = w.value(), &bv = bias.value(), &vv = v.value();
    if (av.rank() != 2 || wv.rank() != 2 || bv.rank() != 1 || vv.rank() != 2 ||
        av.dim(1) != wv.dim(0) || wv.dim(1) != bv.dim(0) || av.dim(0) != vv.dim(0))
        throw ShapeError("fused_linear_contract: incompatible shapes " +
                         shape_str(av.shape()) + ", " + shape_str(wv.shape()) + ", " +
                         shape_str(bv.shape()) + ", " + shape_str(vv.shape()));
    int rows = av.dim(0), hin = av.dim(1), width = wv.dim(1), dc = vv.dim(1);
    if (width % dc != 0)
        throw ShapeError("fused_linear_contract: layer width " + std::to_string(width) +
                         " not a multiple of contraction dim " + std::to_string(dc));
    int h = width / dc;
    Array out({rows, h});
    std::vector<double> mblk(static_cast<std::size_t>(kFusedBlock) * width);
    for (int r0 = 0; r0 < rows; r0 += kFusedBlock) {
        int rb = std::min(kFusedBlock, rows - r0);
        for (int r = 0; r < rb; ++r)
            for (int c = 0; c < width; ++c)
                mblk[static_cast<std::size_t>(r) * width + c] = bv[static_cast<std::size_t>(c)];
        kern::matmul(av.data() + static_cast<std::size_t>(r0) * hin, wv.data(), mblk.data(),
                     rb, hin, width, true);
        for (int r = 0; r < rb; ++r) {
            const double* mr = mblk.data() + static_cast<std::size_t>(r) * width;
            const double* vr = vv.data() + static_cast<std::size_t>(r0 + r) * dc;
            double* orow = out.data() + static_cast<std::size_t>(r0 + r) * h;
            for (int i = 0; i < h; ++i) {
                double acc = 0.0;
                for (int j = 0; j < dc; ++j) acc += mr[i * dc + j] * vr[j];
                orow[i] = acc;
            }
        }
    }
    check_finite(out, "fused_linear_contract");
    int aid = act.id, wid = w.id, bid = bias.id, vid = v.id;
    int oid = static_cast<int>(act.tape->size());
    bool rg = act.requires_grad() || w.requires_grad() || bias.requires_grad() ||
              v.requires_grad();
    return act.tape->record(
        std::move(out), rg,
        [aid, wid, bid, vid, oid, rows, hin, width, dc, h](Tape& t) {
            const Array& g = t.node(oid).grad;
            const Array& aval = t.node(aid).value;
            const Array& wval = t.node(wid).value;
            const Array& bval = t.node(bid).value;
            const Array& vval = t.node(vid).value;
            const bool need_a = t.node(aid).requires_grad;
            const bool need_w = t.node(wid).requires_grad;
            const bool need_b = t.node(bid).requires_grad;
            const bool need_v = t.node(vid).requires_grad;
            std::vector<double> gblk(static_cast<std::size_t>(kFusedBlock) * width);
            std::vector<double> mblk;
            if (need_v) mblk.resize(static_cast<std::size_t>(kFusedBlock) * width);
            for (int r0 = 0; r0 < rows; r0 += kFusedBlock) {
                int rb = std::min(kFusedBlock, rows - r0);
                // G[r, i*dc+j] = g[r,i] * V[r,j]: gradient w.r.t. the virtual M.
                for (int r = 0; r < rb; ++r) {
                    const double* gr = g.data() + static_cast<std::size_t>(r0 + r) * h;
                    const double* vr = vval.data() + static_cast<std::size_t>(r0 + r) * dc;
                    double* dst = gblk.data() + static_cast<std::size_t>(r) * width;
                    for (int i = 0; i < h; ++i)
                        for (int j = 0; j < dc; ++j) dst[i * dc + j] = gr[i] * vr[j];
                }
                if (need_a)
                    kern::matmul_a_bt(gblk.data(), wval.data(),
                                      t.grad_buf(aid).data() +
                                          static_cast<std::size_t>(r0) * hin,
                                      rb, width, hin);
                if (need_w)
                    kern::matmul_at_b(aval.data() + static_cast<std::size_t>(r0) * hin,
                                      gblk.data(), t.grad_buf(wid).data(), rb, hin, width);
                if (need_b) {
                    Array& gb = t.grad_buf(bid);
                    for (int r = 0; r < rb; ++r) {
                        const double* src = gblk.data() + static_cast<std::size_t>(r) * width;
                        for (int c = 0; c < width; ++c) gb[static_cast<std::size_t>(c)] += src[c];
                    }
                }
                if (need_v) {
                    for (int r = 0; r < rb; ++r)
                        for (int c = 0; c < width; ++c)
                            mblk[static_cast<std::size_t>(r) * width + c] =
                                bval[static_cast<std::size_t>(c)];
                    kern::matmul(aval.data() + static_cast<std::size_t>(r0) * hin, wval.data(),
                                 mblk.data(), rb, hin, width, true);
                    Array& gv = t.grad_buf(vid);
                    for (int r = 0; r < rb; ++r) {
                        const double* gr = g.data() + static_cast<std::size_t>(r0 + r) * h;
                        const double* mr = mblk.data() + static_cast<std::size_t>(r) * width;
                        double* gvr = gv.data() + static_cast<std::size_t>(r0 + r) * dc;
                        for (int i = 0; i < h; ++i)
                            for (int j = 0; j < dc; ++j) gvr[j] += mr[i * dc + j] * gr[i];
                    }
                }
            }
        });
}

Var quantile(Var a, double q) {
    const Array& x = a.value();
    if (x.rank() != 1) throw ShapeError("quantile: expected rank-1 input");
    if (x.size() == 0) throw NumericError("quantile: empty input");
    if (q < 0.0 || q > 1.0) throw NumericError("quantile: q outside [0, 1]");
    check_finite(x, "quantile");
    std::vector<double> sorted = x.vec();
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    double pos = q * static_cast<double>(m - 1);
    std::size_t i0 = static_cast<std::size_t>(pos);
    if (i0 >= m - 1) i0 = m - 1;
    double frac = pos - static_cast<double>(i0);
    double lo = sorted[i0];
    double hi = (i0 + 1 < m) ? sorted[i0 + 1] : lo;
    Array out = Array::scalar(lo + frac * (hi - lo));
    int aid = a.id;
    int oid = static_cast<int>(a.tape->size());
    return a.tape->record(std::move(out), a.requires_grad(),
                          [aid, oid, lo, hi, frac](Tape& t) {
                              const Array& g = t.node(oid).grad;
                              if (!t.node(aid).requires_grad) return;
                              const Array& xv = t.node(aid).value;
                              double wlo = 1.0 - frac, whi = frac;
                              if (lo == hi) {
                                  wlo += whi;
                                  whi = 0.0;
                              }
                              std::size_t nlo = 0, nhi = 0;
                              for (std::size_t i = 0; i < xv.size(); ++i) {
                                  if (xv[i] == lo) ++nlo;
                                  if (whi != 0.0 && xv[i] == hi) ++nhi;
                              }
                              Array& ga = t.grad_buf(aid);
                              for (std::size_t i = 0; i < xv.size(); ++i) {
                                  if (xv[i] == lo) ga[i] += g[0] * wlo / static_cast<double>(nlo);
                                  if (whi != 0.0 && xv[i] == hi)
                                      ga[i] += g[0] * whi / static_cast<double>(nhi);
                              }
                          });
}

} // namespace gdflow::ad
