#include "smtc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace smtc::ad {

using kernels::BinaryOp;

namespace {

template <typename T>
Tape<T>& tape_of(const Var<T>& v) {
    if (!v.valid()) throw ContractError("operation on an unbound value");
    return *v.tape();
}

template <typename T, typename Fwd, typename Deriv>
Var<T> unary(Var<T> x, Fwd fwd, Deriv deriv, const char* name) {
    Tape<T>& tape = tape_of(x);
    const Tensor<T>& xv = x.value();
    Tensor<T> y(xv.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = fwd(xv[i]);
    const int xi = x.id();
    Tensor<T> ycopy = tape.grad_enabled() && x.requires_grad() ? y : Tensor<T>();
    return tape.record(
        std::move(y), {x},
        [xi, deriv, ycopy = std::move(ycopy)](Tape<T>& t, const Tensor<T>& g) {
            const Tensor<T>& xv = t.value(xi);
            Tensor<T> dx(xv.shape());
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = g[i] * deriv(xv[i], ycopy[i]);
            t.accumulate(xi, std::move(dx));
        },
        name);
}

template <typename T>
Var<T> binary_op(BinaryOp op, Var<T> a, Var<T> b, const char* name) {
    Tape<T>& tape = tape_of(a);
    Tensor<T> y = kernels::binary(op, a.value(), b.value());
    const int ai = a.id(), bi = b.id();
    return tape.record(
        std::move(y), {a, b},
        [op, ai, bi](Tape<T>& t, const Tensor<T>& g) {
            const Tensor<T>& av = t.value(ai);
            const Tensor<T>& bv = t.value(bi);
            if (t.requires_grad(ai)) {
                switch (op) {
                case BinaryOp::add:
                case BinaryOp::sub: t.accumulate(ai, kernels::sum_to_shape(g, av.shape())); break;
                case BinaryOp::mul:
                    t.accumulate(ai, kernels::sum_to_shape(kernels::binary(BinaryOp::mul, g, bv), av.shape()));
                    break;
                case BinaryOp::div:
                    t.accumulate(ai, kernels::sum_to_shape(kernels::binary(BinaryOp::div, g, bv), av.shape()));
                    break;
                }
            }
            if (t.requires_grad(bi)) {
                switch (op) {
                case BinaryOp::add: t.accumulate(bi, kernels::sum_to_shape(g, bv.shape())); break;
                case BinaryOp::sub: {
                    Tensor<T> ng = g;
                    for (auto& v : ng.data()) v = -v;
                    t.accumulate(bi, kernels::sum_to_shape(ng, bv.shape()));
                    break;
                }
                case BinaryOp::mul:
                    t.accumulate(bi, kernels::sum_to_shape(kernels::binary(BinaryOp::mul, g, av), bv.shape()));
                    break;
                case BinaryOp::div: {
                    // d(a/b)/db = -a / b^2
                    Tensor<T> q = kernels::binary(BinaryOp::div, kernels::binary(BinaryOp::mul, g, av),
                                                  kernels::binary(BinaryOp::mul, bv, bv));
                    for (auto& v : q.data()) v = -v;
                    t.accumulate(bi, kernels::sum_to_shape(q, bv.shape()));
                    break;
                }
                }
            }
        },
        name);
}

// Batched view of a rank-2 or rank-3 value as [G, rows, cols].
struct Batched {
    std::int64_t g, r, c;
};

Batched batched(const Shape& s, const char* what) {
    if (s.size() == 2) return {1, s[0], s[1]};
    if (s.size() == 3) return {s[0], s[1], s[2]};
    throw DimensionError(std::string(what) + ": expected rank 2 or 3, got " + shape_str(s));
}

} // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    return binary_op(BinaryOp::add, a, b, "add");
}
template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    return binary_op(BinaryOp::sub, a, b, "sub");
}
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    return binary_op(BinaryOp::mul, a, b, "mul");
}
template <typename T>
Var<T> div(Var<T> a, Var<T> b) {
    return binary_op(BinaryOp::div, a, b, "div");
}

template <typename T>
Var<T> scale(Var<T> x, T c) {
    return unary(x, [c](T v) { return v * c; }, [c](T, T) { return c; }, "scale");
}

template <typename T>
Var<T> add_scalar(Var<T> x, T c) {
    return unary(x, [c](T v) { return v + c; }, [](T, T) { return T(1); }, "add_scalar");
}

template <typename T>
Var<T> relu(Var<T> x) {
    return unary(
        x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); }, "relu");
}

template <typename T>
Var<T> gelu(Var<T> x) {
    constexpr T inv_sqrt2 = T(0.70710678118654752440);
    constexpr T inv_sqrt2pi = T(0.39894228040143267794);
    return unary(
        x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
        [](T v, T) { return T(0.5) * (T(1) + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(T(-0.5) * v * v); },
        "gelu");
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
    return unary(
        x,
        [](T v) {
            if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
            const T e = std::exp(v);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); }, "sigmoid");
}

template <typename T>
Var<T> log(Var<T> x) {
    return unary(x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; }, "log");
}

template <typename T>
Var<T> exp(Var<T> x) {
    return unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; }, "exp");
}

template <typename T>
Var<T> pow(Var<T> x, T p) {
    return unary(
        x, [p](T v) { return std::pow(v, p); }, [p](T v, T) { return p * std::pow(v, p - T(1)); }, "pow");
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    Tape<T>& tape = tape_of(a);
    const Batched ba = batched(a.shape(), "matmul"), bb = batched(b.shape(), "matmul");
    if (a.rank() != b.rank() || ba.g != bb.g || ba.c != bb.r) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    Shape os = a.rank() == 2 ? Shape{ba.r, bb.c} : Shape{ba.g, ba.r, bb.c};
    Tensor<T> y(os);
    for (std::int64_t g = 0; g < ba.g; ++g) {
        kernels::gemm(false, false, ba.r, bb.c, ba.c, a.value().data().data() + g * ba.r * ba.c,
                      b.value().data().data() + g * bb.r * bb.c, y.data().data() + g * ba.r * bb.c, false);
    }
    const int ai = a.id(), bi = b.id();
    return tape.record(
        std::move(y), {a, b},
        [ai, bi, ba, bb](Tape<T>& t, const Tensor<T>& gr) {
            const Tensor<T>& av = t.value(ai);
            const Tensor<T>& bv = t.value(bi);
            if (t.requires_grad(ai)) {
                Tensor<T> da(av.shape());
                for (std::int64_t g = 0; g < ba.g; ++g)
                    kernels::gemm(false, true, ba.r, ba.c, bb.c, gr.data().data() + g * ba.r * bb.c,
                                  bv.data().data() + g * bb.r * bb.c, da.data().data() + g * ba.r * ba.c, false);
                t.accumulate(ai, std::move(da));
            }
            if (t.requires_grad(bi)) {
                Tensor<T> db(bv.shape());
                for (std::int64_t g = 0; g < ba.g; ++g)
                    kernels::gemm(true, false, bb.r, bb.c, ba.r, av.data().data() + g * ba.r * ba.c,
                                  gr.data().data() + g * ba.r * bb.c, db.data().data() + g * bb.r * bb.c, false);
                t.accumulate(bi, std::move(db));
            }
        },
        "matmul");
}

template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
    Tape<T>& tape = tape_of(a);
    const Batched ba = batched(a.shape(), "matmul_nt"), bb = batched(b.shape(), "matmul_nt");
    if (a.rank() != b.rank() || ba.g != bb.g || ba.c != bb.c) {
        throw DimensionError("matmul_nt: incompatible shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    }
    Shape os = a.rank() == 2 ? Shape{ba.r, bb.r} : Shape{ba.g, ba.r, bb.r};
    Tensor<T> y(os);
    for (std::int64_t g = 0; g < ba.g; ++g) {
        kernels::gemm(false, true, ba.r, bb.r, ba.c, a.value().data().data() + g * ba.r * ba.c,
                      b.value().data().data() + g * bb.r * bb.c, y.data().data() + g * ba.r * bb.r, false);
    }
    const int ai = a.id(), bi = b.id();
    return tape.record(
        std::move(y), {a, b},
        [ai, bi, ba, bb](Tape<T>& t, const Tensor<T>& gr) {
            const Tensor<T>& av = t.value(ai);
            const Tensor<T>& bv = t.value(bi);
            if (t.requires_grad(ai)) {
                Tensor<T> da(av.shape());
                for (std::int64_t g = 0; g < ba.g; ++g)
                    kernels::gemm(false, false, ba.r, ba.c, bb.r, gr.data().data() + g * ba.r * bb.r,
                                  bv.data().data() + g * bb.r * bb.c, da.data().data() + g * ba.r * ba.c, false);
                t.accumulate(ai, std::move(da));
            }
            if (t.requires_grad(bi)) {
                Tensor<T> db(bv.shape());
                for (std::int64_t g = 0; g < ba.g; ++g)
                    kernels::gemm(true, false, bb.r, bb.c, ba.r, gr.data().data() + g * ba.r * bb.r,
                                  av.data().data() + g * ba.r * ba.c, db.data().data() + g * bb.r * bb.c, false);
                t.accumulate(bi, std::move(db));
            }
        },
        "matmul_nt");
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, const Var<T>* bias) {
    Tape<T>& tape = tape_of(x);
    const Tensor<T>& w = weight.value();
    if (w.rank() != 2 || x.rank() < 1 || x.dim(-1) != w.dim(1)) {
        throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                             shape_str(w.shape()));
    }
    const std::int64_t k = w.dim(1), d = w.dim(0);
    const std::int64_t rows = static_cast<std::int64_t>(x.value().size()) / k;
    Shape os = x.shape();
    os.back() = d;
    Tensor<T> y(os);
    kernels::gemm(false, true, rows, d, k, x.value().data().data(), w.data().data(), y.data().data(), false);
    std::vector<Var<T>> inputs{x, weight};
    int bi = -1;
    if (bias) {
        if (bias->value().size() != static_cast<std::size_t>(d)) {
            throw DimensionError("linear: bias " + shape_str(bias->shape()) + " for " + std::to_string(d) + " outputs");
        }
        const Tensor<T>& bv = bias->value();
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t j = 0; j < d; ++j) y[r * d + j] += bv[j];
        inputs.push_back(*bias);
        bi = bias->id();
    }
    const int xi = x.id(), wi = weight.id();
    return tape.record(
        std::move(y), inputs,
        [xi, wi, bi, rows, d, k](Tape<T>& t, const Tensor<T>& g) {
            if (t.requires_grad(xi)) {
                Tensor<T> dx(t.value(xi).shape());
                kernels::gemm(false, false, rows, k, d, g.data().data(), t.value(wi).data().data(), dx.data().data(),
                              false);
                t.accumulate(xi, std::move(dx));
            }
            if (t.requires_grad(wi)) {
                Tensor<T> dw(t.value(wi).shape());
                kernels::gemm(true, false, d, k, rows, g.data().data(), t.value(xi).data().data(), dw.data().data(),
                              false);
                t.accumulate(wi, std::move(dw));
            }
            if (bi >= 0 && t.requires_grad(bi)) {
                Tensor<T> db(t.value(bi).shape());
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t j = 0; j < d; ++j) db[j] += g[r * d + j];
                t.accumulate(bi, std::move(db));
            }
        },
        "linear");
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, const Var<T>* bias, const kernels::Conv2dParams& p) {
    Tape<T>& tape = tape_of(x);
    Tensor<T> y = kernels::conv2d(x.value(), w.value(), bias ? &bias->value() : nullptr, p);
    std::vector<Var<T>> inputs{x, w};
    const int bi = bias ? bias->id() : -1;
    if (bias) inputs.push_back(*bias);
    const int xi = x.id(), wi = w.id();
    return tape.record(
        std::move(y), inputs,
        [xi, wi, bi, p](Tape<T>& t, const Tensor<T>& g) {
            const Tensor<T>& xv = t.value(xi);
            const Tensor<T>& wv = t.value(wi);
            Tensor<T> dx, dw, db;
            if (t.requires_grad(xi)) dx = Tensor<T>(xv.shape());
            if (t.requires_grad(wi)) dw = Tensor<T>(wv.shape());
            if (bi >= 0 && t.requires_grad(bi)) db = Tensor<T>(t.value(bi).shape());
            kernels::conv2d_backward(xv, wv, g, p, t.requires_grad(xi) ? &dx : nullptr,
                                     t.requires_grad(wi) ? &dw : nullptr,
                                     (bi >= 0 && t.requires_grad(bi)) ? &db : nullptr);
            if (t.requires_grad(xi)) t.accumulate(xi, std::move(dx));
            if (t.requires_grad(wi)) t.accumulate(wi, std::move(dw));
            if (bi >= 0 && t.requires_grad(bi)) t.accumulate(bi, std::move(db));
        },
        "conv2d");
}

template <typename T>
Var<T> resize_bilinear(Var<T> x, std::int64_t out_h, std::int64_t out_w) {
    Tape<T>& tape = tape_of(x);
    Tensor<T> y = kernels::resize_bilinear(x.value(), out_h, out_w);
    const int xi = x.id();
    return tape.record(
        std::move(y), {x},
        [xi](Tape<T>& t, const Tensor<T>& g) {
            Tensor<T> dx(t.value(xi).shape());
            kernels::resize_bilinear_backward(g, dx);
            t.accumulate(xi, std::move(dx));
        },
        "resize_bilinear");
}

template <typename T>
Var<T> softmax(Var<T> x, int axis) {
    Tape<T>& tape = tape_of(x);
    axis = kernels::normalize_axis(axis, x.rank());
    Tensor<T> y = kernels::softmax(x.value(), axis);
    Tensor<T> ys = x.requires_grad() ? y : Tensor<T>();
    const int xi = x.id();
    return tape.record(
        std::move(y), {x},
        [xi, axis, ys = std::move(ys)](Tape<T>& t, const Tensor<T>& g) {
            const Shape& s = ys.shape();
            std::int64_t outer = 1, inner = 1;
            for (int i = 0; i < axis; ++i) outer *= s[i];
            for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
            const std::int64_t len = s[axis];
            Tensor<T> dx(s);
            for (std::int64_t o = 0; o < outer; ++o) {
                for (std::int64_t in = 0; in < inner; ++in) {
                    const std::int64_t base = o * len * inner + in;
                    T dot = 0;
                    for (std::int64_t i = 0; i < len; ++i) dot += g[base + i * inner] * ys[base + i * inner];
                    for (std::int64_t i = 0; i < len; ++i) {
                        const std::int64_t at = base + i * inner;
                        dx[at] = ys[at] * (g[at] - dot);
                    }
                }
            }
            t.accumulate(xi, std::move(dx));
        },
        "softmax");
}

template <typename T>
Var<T> layernorm(Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
    Tape<T>& tape = tape_of(x);
    Tensor<T> y = kernels::layernorm(x.value(), gamma.value(), beta.value(), eps);
    const int xi = x.id(), gi = gamma.id(), bi = beta.id();
    return tape.record(
        std::move(y), {x, gamma, beta},
        [xi, gi, bi, eps](Tape<T>& t, const Tensor<T>& g) {
            const Tensor<T>& xv = t.value(xi);
            const Tensor<T>& gv = t.value(gi);
            const std::int64_t c = xv.dim(-1);
            const std::int64_t rows = static_cast<std::int64_t>(xv.size()) / c;
            Tensor<T> dx(xv.shape()), dg(gv.shape()), db(gv.shape());
            std::vector<T> xhat(static_cast<std::size_t>(c)), dxhat(static_cast<std::size_t>(c));
            for (std::int64_t r = 0; r < rows; ++r) {
                const T* src = xv.data().data() + r * c;
                const T* gr = g.data().data() + r * c;
                T mean = 0;
                for (std::int64_t i = 0; i < c; ++i) mean += src[i];
                mean /= static_cast<T>(c);
                T var = 0;
                for (std::int64_t i = 0; i < c; ++i) var += (src[i] - mean) * (src[i] - mean);
                var /= static_cast<T>(c);
                const T rstd = T(1) / std::sqrt(var + eps);
                T m1 = 0, m2 = 0;
                for (std::int64_t i = 0; i < c; ++i) {
                    xhat[i] = (src[i] - mean) * rstd;
                    dxhat[i] = gr[i] * gv[i];
                    m1 += dxhat[i];
                    m2 += dxhat[i] * xhat[i];
                    dg[i] += gr[i] * xhat[i];
                    db[i] += gr[i];
                }
                m1 /= static_cast<T>(c);
                m2 /= static_cast<T>(c);
                for (std::int64_t i = 0; i < c; ++i) dx[r * c + i] = rstd * (dxhat[i] - m1 - xhat[i] * m2);
            }
            t.accumulate(xi, std::move(dx));
            t.accumulate(gi, std::move(dg));
            t.accumulate(bi, std::move(db));
        },
        "layernorm");
}

namespace {

template <typename T>
Var<T> reduce_op(Var<T> x, int axis, kernels::ReduceKind kind, bool keepdim, const char* name) {
    Tape<T>& tape = tape_of(x);
    axis = kernels::normalize_axis(axis, x.rank());
    Tensor<T> y = kernels::reduce(x.value(), axis, kind, keepdim);
    std::vector<std::int64_t> winners;
    if (kind == kernels::ReduceKind::max && x.requires_grad()) winners = kernels::argmax_along(x.value(), axis);
    const int xi = x.id();
    return tape.record(
        std::move(y), {x},
        [xi, axis, kind, winners = std::move(winners)](Tape<T>& t, const Tensor<T>& g) {
            const Tensor<T>& xv = t.value(xi);
            Tensor<T> dx(xv.shape());
            if (kind == kernels::ReduceKind::max) {
                for (std::size_t i = 0; i < winners.size(); ++i) dx[winners[i]] += g[i];
            } else {
                Shape ks = xv.shape();
                ks[axis] = 1;
                Tensor<T> gk = g.reshaped(ks);
                dx = kernels::broadcast_to(gk, xv.shape());
                if (kind == kernels::ReduceKind::mean) {
                    const T inv = T(1) / static_cast<T>(xv.shape()[axis]);
                    for (auto& v : dx.data()) v *= inv;
                }
            }
            t.accumulate(xi, std::move(dx));
        },
        name);
}

} // namespace

template <typename T>
Var<T> sum(Var<T> x, int axis, bool keepdim) {
    return reduce_op(x, axis, kernels::ReduceKind::sum, keepdim, "sum");
}
template <typename T>
Var<T> mean(Var<T> x, int axis, bool keepdim) {
    return reduce_op(x, axis, kernels::ReduceKind::mean, keepdim, "mean");
}
template <typename T>
Var<T> max(Var<T> x, int axis, bool keepdim) {
    return reduce_op(x, axis, kernels::ReduceKind::max, keepdim, "max");
}

template <typename T>
Var<T> sum_all(Var<T> x) {
    Tape<T>& tape = tape_of(x);
    Tensor<T> y = kernels::reduce_all(x.value(), kernels::ReduceKind::sum);
    const int xi = x.id();
    return tape.record(
        std::move(y), {x},
        [xi](Tape<T>& t, const Tensor<T>& g) { t.accumulate(xi, Tensor<T>(t.value(xi).shape(), g[0])); }, "sum_all");
}

template <typename T>
Var<T> mean_all(Var<T> x) {
    Tape<T>& tape = tape_of(x);
    Tensor<T> y = kernels::reduce_all(x.value(), kernels::ReduceKind::mean);
    const int xi = x.id();
    const T inv = T(1) / static_cast<T>(x.value().size());
    return tape.record(
        std::move(y), {x},
        [xi, inv](Tape<T>& t, const Tensor<T>& g) { t.accumulate(xi, Tensor<T>(t.value(xi).shape(), g[0] * inv)); },
        "mean_all");
}

template <typename T>
Var<T> concat(Var<T> a, Var<T> b, int axis) {
    Tape<T>& tape = tape_of(a);
    axis = kernels::normalize_axis(axis, a.rank());
    Tensor<T> y = kernels::concat(a.value(), b.value(), axis);
    const int ai = a.id(), bi = b.id();
    const std::int64_t na = a.shape()[axis], nb = b.shape()[axis];
    return tape.record(
        std::move(y), {a, b},
        [ai, bi, axis, na, nb](Tape<T>& t, const Tensor<T>& g) {
            if (t.requires_grad(ai)) t.accumulate(ai, kernels::slice(g, axis, 0, na));
            if (t.requires_grad(bi)) t.accumulate(bi, kernels::slice(g, axis, na, na + nb));
        },
        "concat");
}

template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
    if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
        throw DimensionError("concat_channels: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    return concat(a, b, 1);
}

template <typename T>
Var<T> slice(Var<T> x, int axis, std::int64_t begin, std::int64_t end) {
    Tape<T>& tape = tape_of(x);
    axis = kernels::normalize_axis(axis, x.rank());
    Tensor<T> y = kernels::slice(x.value(), axis, begin, end);
    const int xi = x.id();
    return tape.record(
        std::move(y), {x},
        [xi, axis, begin](Tape<T>& t, const Tensor<T>& g) {
            const Shape& s = t.value(xi).shape();
            Tensor<T> dx(s);
            std::int64_t outer = 1, inner = 1;
            for (int i = 0; i < axis; ++i) outer *= s[i];
            for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
            const std::int64_t len = s[axis], n = g.shape()[axis];
            for (std::int64_t o = 0; o < outer; ++o)
                std::copy_n(g.data().data() + o * n * inner, n * inner,
                            dx.data().data() + o * len * inner + begin * inner);
            t.accumulate(xi, std::move(dx));
        },
        "slice");
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
    Tape<T>& tape = tape_of(x);
    Tensor<T> y = x.value().reshaped(std::move(shape));
    const int xi = x.id();
    return tape.record(
        std::move(y), {x},
        [xi](Tape<T>& t, const Tensor<T>& g) { t.accumulate(xi, g.reshaped(t.value(xi).shape())); }, "reshape");
}

template <typename T>
Var<T> permute(Var<T> x, const std::vector<int>& perm) {
    Tape<T>& tape = tape_of(x);
    Tensor<T> y = kernels::permute(x.value(), perm);
    std::vector<int> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<int>(i);
    const int xi = x.id();
    return tape.record(
        std::move(y), {x}, [xi, inv](Tape<T>& t, const Tensor<T>& g) { t.accumulate(xi, kernels::permute(g, inv)); },
        "permute");
}

template <typename T>
Var<T> detach(Var<T> x) {
    return tape_of(x).constant(x.value());
}

template <typename T>
Var<T> cosine_channel(Var<T> a, Var<T> b, T eps) {
    Tape<T>& tape = tape_of(a);
    if (!(eps > T(0))) throw ContractError("cosine_channel: eps must be positive");
    Tensor<T> y = kernels::cosine_channel(a.value(), b.value(), eps);
    const int ai = a.id(), bi = b.id();
    return tape.record(
        std::move(y), {a, b},
        [ai, bi, eps](Tape<T>& t, const Tensor<T>& g) {
            const Tensor<T>& av = t.value(ai);
            const Tensor<T>& bv = t.value(bi);
            const std::int64_t batch = av.dim(0), c = av.dim(1), hw = av.dim(2) * av.dim(3);
            Tensor<T> da(av.shape()), db(bv.shape());
            for (std::int64_t n = 0; n < batch; ++n) {
                for (std::int64_t p = 0; p < hw; ++p) {
                    T dot = 0, sa = 0, sb = 0;
                    for (std::int64_t k = 0; k < c; ++k) {
                        const std::int64_t at = (n * c + k) * hw + p;
                        dot += av[at] * bv[at];
                        sa += av[at] * av[at];
                        sb += bv[at] * bv[at];
                    }
                    const T na = std::sqrt(sa), nb = std::sqrt(sb);
                    const T gp = g[n * hw + p];
                    if (na * nb > eps) {
                        const T inv = T(1) / (na * nb);
                        const T cosv = dot * inv;
                        for (std::int64_t k = 0; k < c; ++k) {
                            const std::int64_t at = (n * c + k) * hw + p;
                            da[at] = gp * (bv[at] * inv - cosv * av[at] / sa);
                            db[at] = gp * (av[at] * inv - cosv * bv[at] / sb);
                        }
                    } else {
                        for (std::int64_t k = 0; k < c; ++k) {
                            const std::int64_t at = (n * c + k) * hw + p;
                            da[at] = gp * bv[at] / eps;
                            db[at] = gp * av[at] / eps;
                        }
                    }
                }
            }
            t.accumulate(ai, std::move(da));
            t.accumulate(bi, std::move(db));
        },
        "cosine_channel");
}

namespace {

template <typename T>
T softplus(T z) {
    // log(1 + e^z) without overflow
    return std::max(z, T(0)) + std::log1p(std::exp(-std::abs(z)));
}

template <typename T>
T stable_sigmoid(T z) {
    if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
    const T e = std::exp(z);
    return e / (T(1) + e);
}

template <typename T>
void check_target(const Tensor<T>& logits, const Tensor<T>& target, const char* what, bool binary) {
    if (logits.shape() != target.shape()) {
        throw DimensionError(std::string(what) + ": logits " + shape_str(logits.shape()) + " vs target " +
                             shape_str(target.shape()));
    }
    if (!binary) return;
    for (T v : target.data())
        if (v != T(0) && v != T(1)) throw ContractError(std::string(what) + ": target must be binary {0,1}");
}

} // namespace

template <typename T>
Var<T> bce_with_logits(Var<T> logits, const Tensor<T>& target) {
    Tape<T>& tape = tape_of(logits);
    const Tensor<T>& l = logits.value();
    check_target(l, target, "bce_with_logits", false);
    Tensor<T> y(l.shape());
    // Binary targets go through the true-class logit so loss(l, 1) == loss(-l, 0) bitwise.
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (target[i] == T(1))
            y[i] = softplus(-l[i]);
        else if (target[i] == T(0))
            y[i] = softplus(l[i]);
        else
            y[i] = softplus(l[i]) - l[i] * target[i];
    }
    const int li = logits.id();
    return tape.record(
        std::move(y), {logits},
        [li, target](Tape<T>& t, const Tensor<T>& g) {
            const Tensor<T>& lv = t.value(li);
            Tensor<T> dl(lv.shape());
            for (std::size_t i = 0; i < dl.size(); ++i) dl[i] = g[i] * (stable_sigmoid(lv[i]) - target[i]);
            t.accumulate(li, std::move(dl));
        },
        "bce_with_logits");
}

template <typename T>
Var<T> focal_with_logits(Var<T> logits, const Tensor<T>& target, T gamma, T alpha, bool class_balance) {
    Tape<T>& tape = tape_of(logits);
    const Tensor<T>& l = logits.value();
    check_target(l, target, "focal_with_logits", true);
    // z is the logit of the true class, p = sigmoid(z) its probability.
    auto terms = [gamma, alpha, class_balance](T logit, T y, T& loss, T& dlogit) {
        const T s = y == T(1) ? T(1) : T(-1);
        const T z = s * logit;
        const T logp = -softplus(-z);
        const T p = stable_sigmoid(z);
        const T q = stable_sigmoid(-z);
        const T at = class_balance ? (y == T(1) ? alpha : T(1) - alpha) : T(1);
        const T qg = gamma == T(0) ? T(1) : std::pow(q, gamma);
        loss = -at * qg * logp;
        dlogit = s * at * qg * (gamma * p * logp - q);
    };
    Tensor<T> y(l.shape());
    for (std::size_t i = 0; i < y.size(); ++i) {
        T d;
        terms(l[i], target[i], y[i], d);
    }
    const int li = logits.id();
    return tape.record(
        std::move(y), {logits},
        [li, target, terms](Tape<T>& t, const Tensor<T>& g) {
            const Tensor<T>& lv = t.value(li);
            Tensor<T> dl(lv.shape());
            for (std::size_t i = 0; i < dl.size(); ++i) {
                T loss, d;
                terms(lv[i], target[i], loss, d);
                dl[i] = g[i] * d;
            }
            t.accumulate(li, std::move(dl));
        },
        "focal_with_logits");
}

template <typename T>
Var<T> to_tokens(Var<T> x) {
    if (x.rank() != 4) throw DimensionError("to_tokens expects NCHW, got " + shape_str(x.shape()));
    const std::int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    return reshape(permute(x, {0, 2, 3, 1}), Shape{b, h * w, c});
}

template <typename T>
Var<T> from_tokens(Var<T> tokens, std::int64_t h, std::int64_t w) {
    if (tokens.rank() != 3 || tokens.dim(1) != h * w) {
        throw DimensionError("from_tokens: " + shape_str(tokens.shape()) + " is not a " + std::to_string(h) + "x" +
                             std::to_string(w) + " token grid");
    }
    const std::int64_t b = tokens.dim(0), c = tokens.dim(2);
    return permute(reshape(tokens, Shape{b, h, w, c}), {0, 3, 1, 2});
}

#define SMTC_INSTANTIATE(T)                                                                                            \
    template Var<T> add<T>(Var<T>, Var<T>);                                                                            \
    template Var<T> sub<T>(Var<T>, Var<T>);                                                                            \
    template Var<T> mul<T>(Var<T>, Var<T>);                                                                            \
    template Var<T> div<T>(Var<T>, Var<T>);                                                                            \
    template Var<T> scale<T>(Var<T>, T);                                                                               \
    template Var<T> add_scalar<T>(Var<T>, T);                                                                          \
    template Var<T> relu<T>(Var<T>);                                                                                   \
    template Var<T> gelu<T>(Var<T>);                                                                                   \
    template Var<T> sigmoid<T>(Var<T>);                                                                                \
    template Var<T> log<T>(Var<T>);                                                                                    \
    template Var<T> exp<T>(Var<T>);                                                                                    \
    template Var<T> pow<T>(Var<T>, T);                                                                                 \
    template Var<T> matmul<T>(Var<T>, Var<T>);                                                                         \
    template Var<T> matmul_nt<T>(Var<T>, Var<T>);                                                                      \
    template Var<T> linear<T>(Var<T>, Var<T>, const Var<T>*);                                                          \
    template Var<T> conv2d<T>(Var<T>, Var<T>, const Var<T>*, const kernels::Conv2dParams&);                            \
    template Var<T> resize_bilinear<T>(Var<T>, std::int64_t, std::int64_t);                                           \
    template Var<T> softmax<T>(Var<T>, int);                                                                           \
    template Var<T> layernorm<T>(Var<T>, Var<T>, Var<T>, T);                                                           \
    template Var<T> sum<T>(Var<T>, int, bool);                                                                         \
    template Var<T> mean<T>(Var<T>, int, bool);                                                                        \
    template Var<T> max<T>(Var<T>, int, bool);                                                                         \
    template Var<T> sum_all<T>(Var<T>);                                                                                \
    template Var<T> mean_all<T>(Var<T>);                                                                               \
    template Var<T> concat<T>(Var<T>, Var<T>, int);                                                                    \
    template Var<T> concat_channels<T>(Var<T>, Var<T>);                                                                \
    template Var<T> slice<T>(Var<T>, int, std::int64_t, std::int64_t);                                                 \
    template Var<T> reshape<T>(Var<T>, Shape);                                                                         \
    template Var<T> permute<T>(Var<T>, const std::vector<int>&);                                                       \
    template Var<T> detach<T>(Var<T>);                                                                                 \
    template Var<T> cosine_channel<T>(Var<T>, Var<T>, T);                                                              \
    template Var<T> bce_with_logits<T>(Var<T>, const Tensor<T>&);                                                      \
    template Var<T> focal_with_logits<T>(Var<T>, const Tensor<T>&, T, T, bool);                                        \
    template Var<T> to_tokens<T>(Var<T>);                                                                              \
    template Var<T> from_tokens<T>(Var<T>, std::int64_t, std::int64_t);

SMTC_INSTANTIATE(float)
SMTC_INSTANTIATE(double)
SMTC_INSTANTIATE(long double)

#undef SMTC_INSTANTIATE

} // namespace smtc::ad
