#include "smtc/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace smtc::kernels {

int normalize_axis(int axis, int rank) {
    int a = axis < 0 ? axis + rank : axis;
    if (a < 0 || a >= rank) {
        throw DimensionError("axis " + std::to_string(axis) + " invalid for rank " + std::to_string(rank));
    }
    return a;
}

namespace {

template <typename T>
std::vector<T> transpose_copy(const T* src, std::int64_t rows, std::int64_t cols) {
    std::vector<T> out(static_cast<std::size_t>(rows * cols));
    constexpr std::int64_t blk = 32;
    for (std::int64_t i0 = 0; i0 < rows; i0 += blk) {
        for (std::int64_t j0 = 0; j0 < cols; j0 += blk) {
            std::int64_t i1 = std::min(rows, i0 + blk), j1 = std::min(cols, j0 + blk);
            for (std::int64_t i = i0; i < i1; ++i)
                for (std::int64_t j = j0; j < j1; ++j) out[j * rows + i] = src[i * cols + j];
        }
    }
    return out;
}

// Inner-product (row) sizes.
struct Split {
    std::int64_t outer = 1, len = 1, inner = 1;
};

Split split_at(const Shape& s, int axis) {
    Split r;
    for (int i = 0; i < axis; ++i) r.outer *= s[i];
    r.len = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

std::vector<std::int64_t> strides_of(const Shape& s) {
    std::vector<std::int64_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
    return st;
}

} // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c,
          bool accumulate) {
    std::vector<T> at_buf, bt_buf;
    if (trans_a) {
        at_buf = transpose_copy(a, k, m);
        a = at_buf.data();
    }
    if (trans_b) {
        bt_buf = transpose_copy(b, n, k);
        b = bt_buf.data();
    }
    if (!accumulate) std::fill(c, c + m * n, T(0));
    constexpr std::int64_t col_block = 512;
    for (std::int64_t j0 = 0; j0 < n; j0 += col_block) {
        const std::int64_t j1 = std::min(n, j0 + col_block);
        for (std::int64_t i = 0; i < m; ++i) {
            T* crow = c + i * n;
            const T* arow = a + i * k;
            for (std::int64_t p = 0; p < k; ++p) {
                const T av = arow[p];
                if (av == T(0)) continue;
                const T* brow = b + p * n;
                for (std::int64_t j = j0; j < j1; ++j) crow[j] += av * brow[j];
            }
        }
    }
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    Tensor<T> c({a.dim(0), b.dim(1)});
    gemm(false, false, a.dim(0), b.dim(1), a.dim(1), a.data().data(), b.data().data(), c.data().data(), false);
    return c;
}

Shape conv2d_output_shape(const Shape& x, const Shape& w, const Conv2dParams& p) {
    if (x.size() != 4 || w.size() != 4) {
        throw DimensionError("conv2d expects NCHW input and KCkk weight, got " + shape_str(x) + " and " + shape_str(w));
    }
    if (p.groups < 1 || x[1] % p.groups != 0 || w[0] % p.groups != 0 || w[1] * p.groups != x[1]) {
        throw DimensionError("conv2d: channel mismatch between input " + shape_str(x) + " and weight " + shape_str(w) +
                             " with groups " + std::to_string(p.groups));
    }
    if (w[2] % 2 == 0 || w[3] % 2 == 0) throw DimensionError("conv2d: kernel extents must be odd, got " + shape_str(w));
    if (p.stride < 1 || p.padding < 0) throw DimensionError("conv2d: invalid stride/padding");
    std::int64_t ho = (x[2] + 2 * p.padding - w[2]) / p.stride + 1;
    std::int64_t wo = (x[3] + 2 * p.padding - w[3]) / p.stride + 1;
    if (ho < 1 || wo < 1) throw DimensionError("conv2d: empty output for input " + shape_str(x));
    return {x[0], w[0], ho, wo};
}

namespace {

// col[(c*kh + i)*kw + j, oy*wo + ox] = x[c, oy*s - p + i, ox*s - p + j]
template <typename T>
void im2col(const T* x, std::int64_t channels, std::int64_t h, std::int64_t w, std::int64_t kh, std::int64_t kw,
            int stride, int pad, std::int64_t ho, std::int64_t wo, T* col) {
    for (std::int64_t c = 0; c < channels; ++c) {
        const T* xc = x + c * h * w;
        for (std::int64_t i = 0; i < kh; ++i) {
            for (std::int64_t j = 0; j < kw; ++j) {
                T* row = col + ((c * kh + i) * kw + j) * ho * wo;
                for (std::int64_t oy = 0; oy < ho; ++oy) {
                    const std::int64_t iy = oy * stride - pad + i;
                    T* dst = row + oy * wo;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + wo, T(0));
                        continue;
                    }
                    const T* src = xc + iy * w;
                    for (std::int64_t ox = 0; ox < wo; ++ox) {
                        const std::int64_t ix = ox * stride - pad + j;
                        dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const T* col, std::int64_t channels, std::int64_t h, std::int64_t w, std::int64_t kh, std::int64_t kw,
            int stride, int pad, std::int64_t ho, std::int64_t wo, T* x) {
    for (std::int64_t c = 0; c < channels; ++c) {
        T* xc = x + c * h * w;
        for (std::int64_t i = 0; i < kh; ++i) {
            for (std::int64_t j = 0; j < kw; ++j) {
                const T* row = col + ((c * kh + i) * kw + j) * ho * wo;
                for (std::int64_t oy = 0; oy < ho; ++oy) {
                    const std::int64_t iy = oy * stride - pad + i;
                    if (iy < 0 || iy >= h) continue;
                    const T* src = row + oy * wo;
                    T* dst = xc + iy * w;
                    for (std::int64_t ox = 0; ox < wo; ++ox) {
                        const std::int64_t ix = ox * stride - pad + j;
                        if (ix >= 0 && ix < w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

bool is_pointwise(const Shape& w, const Conv2dParams& p) {
    return w[2] == 1 && w[3] == 1 && p.stride == 1 && p.padding == 0;
}

} // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, const Conv2dParams& p) {
    const Shape os = conv2d_output_shape(x.shape(), w.shape(), p);
    const std::int64_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::int64_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::int64_t ho = os[2], wo = os[3];
    const std::int64_t g = p.groups, cg = cin / g, kg = cout / g;
    const std::int64_t ckk = cg * kh * kw;
    if (bias && (bias->rank() != 1 || bias->dim(0) != cout)) {
        throw DimensionError("conv2d: bias shape " + shape_str(bias->shape()) + " does not match " +
                             std::to_string(cout) + " output channels");
    }
    Tensor<T> out(os);
    const bool pointwise = is_pointwise(w.shape(), p);
    std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(ckk * ho * wo));
    for (std::int64_t b = 0; b < batch; ++b) {
        for (std::int64_t gi = 0; gi < g; ++gi) {
            const T* xg = x.data().data() + (b * cin + gi * cg) * h * wd;
            const T* src = xg;
            if (!pointwise) {
                im2col(xg, cg, h, wd, kh, kw, p.stride, p.padding, ho, wo, col.data());
                src = col.data();
            }
            T* og = out.data().data() + (b * cout + gi * kg) * ho * wo;
            gemm(false, false, kg, ho * wo, ckk, w.data().data() + gi * kg * ckk, src, og, false);
        }
        if (bias) {
            for (std::int64_t k = 0; k < cout; ++k) {
                T* o = out.data().data() + (b * cout + k) * ho * wo;
                const T bv = (*bias)[k];
                for (std::int64_t i = 0; i < ho * wo; ++i) o[i] += bv;
            }
        }
    }
    return out;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& grad_out, const Conv2dParams& p,
                     Tensor<T>* dx, Tensor<T>* dw, Tensor<T>* db) {
    const std::int64_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::int64_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::int64_t ho = grad_out.dim(2), wo = grad_out.dim(3);
    const std::int64_t g = p.groups, cg = cin / g, kg = cout / g;
    const std::int64_t ckk = cg * kh * kw;
    const bool pointwise = is_pointwise(w.shape(), p);
    std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(ckk * ho * wo));
    std::vector<T> dcol(pointwise ? 0 : static_cast<std::size_t>(ckk * ho * wo));
    for (std::int64_t b = 0; b < batch; ++b) {
        for (std::int64_t gi = 0; gi < g; ++gi) {
            const T* xg = x.data().data() + (b * cin + gi * cg) * h * wd;
            const T* go = grad_out.data().data() + (b * cout + gi * kg) * ho * wo;
            const T* wg = w.data().data() + gi * kg * ckk;
            if (dw) {
                const T* src = xg;
                if (!pointwise) {
                    im2col(xg, cg, h, wd, kh, kw, p.stride, p.padding, ho, wo, col.data());
                    src = col.data();
                }
                gemm(false, true, kg, ckk, ho * wo, go, src, dw->data().data() + gi * kg * ckk, true);
            }
            if (dx) {
                T* dxg = dx->data().data() + (b * cin + gi * cg) * h * wd;
                if (pointwise) {
                    gemm(true, false, ckk, ho * wo, kg, wg, go, dxg, true);
                } else {
                    gemm(true, false, ckk, ho * wo, kg, wg, go, dcol.data(), false);
                    col2im(dcol.data(), cg, h, wd, kh, kw, p.stride, p.padding, ho, wo, dxg);
                }
            }
        }
        if (db) {
            for (std::int64_t k = 0; k < cout; ++k) {
                const T* go = grad_out.data().data() + (b * cout + k) * ho * wo;
                T s = 0;
                for (std::int64_t i = 0; i < ho * wo; ++i) s += go[i];
                (*db)[k] += s;
            }
        }
    }
}

namespace {

struct Tap {
    std::int64_t i0, i1;
    double frac;
};

std::vector<Tap> bilinear_taps(std::int64_t in, std::int64_t out) {
    std::vector<Tap> taps(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::int64_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        if (src < 0) src = 0;
        std::int64_t i0 = static_cast<std::int64_t>(std::floor(src));
        if (i0 > in - 1) i0 = in - 1;
        const std::int64_t i1 = std::min(i0 + 1, in - 1);
        taps[o] = {i0, i1, i1 == i0 ? 0.0 : src - static_cast<double>(i0)};
    }
    return taps;
}

} // namespace

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, std::int64_t out_h, std::int64_t out_w) {
    if (x.rank() != 4) throw DimensionError("resize_bilinear expects NCHW, got " + shape_str(x.shape()));
    if (out_h < 1 || out_w < 1) throw DimensionError("resize_bilinear: target extents must be >= 1");
    const std::int64_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    const auto ty = bilinear_taps(h, out_h);
    const auto tx = bilinear_taps(w, out_w);
    Tensor<T> out({x.dim(0), x.dim(1), out_h, out_w});
    for (std::int64_t pl = 0; pl < planes; ++pl) {
        const T* src = x.data().data() + pl * h * w;
        T* dst = out.data().data() + pl * out_h * out_w;
        for (std::int64_t oy = 0; oy < out_h; ++oy) {
            const Tap& a = ty[oy];
            const T* r0 = src + a.i0 * w;
            const T* r1 = src + a.i1 * w;
            const T fy = static_cast<T>(a.frac);
            for (std::int64_t ox = 0; ox < out_w; ++ox) {
                const Tap& b = tx[ox];
                const T fx = static_cast<T>(b.frac);
                // lerp form keeps constant fields exact
                const T top = r0[b.i0] + fx * (r0[b.i1] - r0[b.i0]);
                const T bot = r1[b.i0] + fx * (r1[b.i1] - r1[b.i0]);
                dst[oy * out_w + ox] = top + fy * (bot - top);
            }
        }
    }
    return out;
}

template <typename T>
void resize_bilinear_backward(const Tensor<T>& grad_out, Tensor<T>& dx) {
    const std::int64_t planes = dx.dim(0) * dx.dim(1), h = dx.dim(2), w = dx.dim(3);
    const std::int64_t out_h = grad_out.dim(2), out_w = grad_out.dim(3);
    const auto ty = bilinear_taps(h, out_h);
    const auto tx = bilinear_taps(w, out_w);
    for (std::int64_t pl = 0; pl < planes; ++pl) {
        T* d = dx.data().data() + pl * h * w;
        const T* g = grad_out.data().data() + pl * out_h * out_w;
        for (std::int64_t oy = 0; oy < out_h; ++oy) {
            const Tap& a = ty[oy];
            const T fy = static_cast<T>(a.frac);
            for (std::int64_t ox = 0; ox < out_w; ++ox) {
                const Tap& b = tx[ox];
                const T fx = static_cast<T>(b.frac);
                const T gv = g[oy * out_w + ox];
                const T gt = gv * (T(1) - fy), gb = gv * fy;
                d[a.i0 * w + b.i0] += gt * (T(1) - fx);
                d[a.i0 * w + b.i1] += gt * fx;
                d[a.i1 * w + b.i0] += gb * (T(1) - fx);
                d[a.i1 * w + b.i1] += gb * fx;
            }
        }
    }
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
    axis = normalize_axis(axis, x.rank());
    const Split s = split_at(x.shape(), axis);
    Tensor<T> y(x.shape());
    const T* src = x.data().data();
    T* dst = y.data().data();
    for (std::int64_t o = 0; o < s.outer; ++o) {
        for (std::int64_t in = 0; in < s.inner; ++in) {
            const std::int64_t base = o * s.len * s.inner + in;
            T mx = -std::numeric_limits<T>::infinity();
            for (std::int64_t i = 0; i < s.len; ++i) mx = std::max(mx, src[base + i * s.inner]);
            T sum = 0;
            for (std::int64_t i = 0; i < s.len; ++i) {
                const T e = std::exp(src[base + i * s.inner] - mx);
                dst[base + i * s.inner] = e;
                sum += e;
            }
            const T inv = T(1) / sum;
            for (std::int64_t i = 0; i < s.len; ++i) dst[base + i * s.inner] *= inv;
        }
    }
    return y;
}

template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    const std::int64_t c = x.dim(-1);
    if (gamma.size() != static_cast<std::size_t>(c) || beta.size() != static_cast<std::size_t>(c)) {
        throw DimensionError("layernorm: gamma/beta of shape " + shape_str(gamma.shape()) +
                             " do not match normalized extent " + std::to_string(c));
    }
    const std::int64_t rows = static_cast<std::int64_t>(x.size()) / c;
    Tensor<T> y(x.shape());
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* src = x.data().data() + r * c;
        T* dst = y.data().data() + r * c;
        T mean = 0;
        for (std::int64_t i = 0; i < c; ++i) mean += src[i];
        mean /= static_cast<T>(c);
        T var = 0;
        for (std::int64_t i = 0; i < c; ++i) var += (src[i] - mean) * (src[i] - mean);
        var /= static_cast<T>(c);
        const T rstd = T(1) / std::sqrt(var + eps);
        for (std::int64_t i = 0; i < c; ++i) dst[i] = (src[i] - mean) * rstd * gamma[i] + beta[i];
    }
    return y;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (std::size_t i = 0; i < r; ++i) {
        const std::int64_t ea = i < r - a.size() ? 1 : a[i - (r - a.size())];
        const std::int64_t eb = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (ea != eb && ea != 1 && eb != 1) {
            throw DimensionError("cannot broadcast shapes " + shape_str(a) + " and " + shape_str(b));
        }
        out[i] = ea == 1 ? eb : ea;
    }
    return out;
}

namespace {

// Strides of `s` aligned to an output of rank `r`, zero on broadcast extents.
std::vector<std::int64_t> broadcast_strides(const Shape& s, const Shape& out) {
    const std::size_t r = out.size();
    std::vector<std::int64_t> st(r, 0);
    const auto own = strides_of(s);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const std::size_t oi = i + (r - s.size());
        st[oi] = s[i] == 1 ? 0 : own[i];
    }
    return st;
}

template <typename T, typename F>
void for_each_broadcast(const Shape& out, const std::vector<std::int64_t>& sa, const std::vector<std::int64_t>& sb,
                        F&& f) {
    const std::int64_t total = numel(out);
    if (total == 0) return;
    const int r = static_cast<int>(out.size());
    if (r == 0) {
        f(0, 0, 0);
        return;
    }
    std::vector<std::int64_t> idx(r, 0);
    std::int64_t oa = 0, ob = 0;
    const std::int64_t last = out[r - 1];
    for (std::int64_t o = 0; o < total; o += last) {
        for (std::int64_t j = 0; j < last; ++j) f(o + j, oa + j * sa[r - 1], ob + j * sb[r - 1]);
        for (int d = r - 2; d >= 0; --d) {
            ++idx[d];
            oa += sa[d];
            ob += sb[d];
            if (idx[d] < out[d]) break;
            oa -= sa[d] * out[d];
            ob -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

} // namespace

template <typename T>
Tensor<T> binary(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b) {
    const Shape out_shape = broadcast_shape(a.shape(), b.shape());
    Tensor<T> out(out_shape);
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    T* po = out.data().data();
    auto apply = [op](T x, T y) -> T {
        switch (op) {
        case BinaryOp::add: return x + y;
        case BinaryOp::sub: return x - y;
        case BinaryOp::mul: return x * y;
        case BinaryOp::div: return x / y;
        }
        return T(0);
    };
    if (a.shape() == b.shape()) {
        for (std::size_t i = 0; i < out.size(); ++i) po[i] = apply(pa[i], pb[i]);
        return out;
    }
    const auto sa = broadcast_strides(a.shape(), out_shape);
    const auto sb = broadcast_strides(b.shape(), out_shape);
    for_each_broadcast<T>(out_shape, sa, sb,
                          [&](std::int64_t o, std::int64_t ia, std::int64_t ib) { po[o] = apply(pa[ia], pb[ib]); });
    return out;
}

template <typename T>
Tensor<T> sum_to_shape(const Tensor<T>& g, const Shape& target) {
    if (g.shape() == target) return g;
    Tensor<T> out(target);
    const auto st = broadcast_strides(target, g.shape());
    const std::vector<std::int64_t> unit = strides_of(g.shape());
    const T* pg = g.data().data();
    T* po = out.data().data();
    for_each_broadcast<T>(g.shape(), unit, st, [&](std::int64_t o, std::int64_t, std::int64_t it) { po[it] += pg[o]; });
    return out;
}

template <typename T>
Tensor<T> broadcast_to(const Tensor<T>& x, const Shape& target) {
    if (x.shape() == target) return x;
    if (broadcast_shape(x.shape(), target) != target) {
        throw DimensionError("cannot broadcast " + shape_str(x.shape()) + " to " + shape_str(target));
    }
    Tensor<T> out(target);
    const auto sx = broadcast_strides(x.shape(), target);
    const std::vector<std::int64_t> unit = strides_of(target);
    const T* px = x.data().data();
    T* po = out.data().data();
    for_each_broadcast<T>(target, unit, sx, [&](std::int64_t o, std::int64_t, std::int64_t ix) { po[o] = px[ix]; });
    return out;
}

template <typename T>
Tensor<T> reduce(const Tensor<T>& x, int axis, ReduceKind kind, bool keepdim) {
    axis = normalize_axis(axis, x.rank());
    const Split s = split_at(x.shape(), axis);
    Shape os = x.shape();
    if (keepdim)
        os[axis] = 1;
    else
        os.erase(os.begin() + axis);
    Tensor<T> out(os);
    const T* src = x.data().data();
    T* dst = out.data().data();
    for (std::int64_t o = 0; o < s.outer; ++o) {
        for (std::int64_t in = 0; in < s.inner; ++in) {
            const std::int64_t base = o * s.len * s.inner + in;
            T acc = kind == ReduceKind::max ? -std::numeric_limits<T>::infinity() : T(0);
            for (std::int64_t i = 0; i < s.len; ++i) {
                const T v = src[base + i * s.inner];
                if (kind == ReduceKind::max)
                    acc = std::max(acc, v);
                else
                    acc += v;
            }
            if (kind == ReduceKind::mean) acc /= static_cast<T>(s.len);
            dst[o * s.inner + in] = acc;
        }
    }
    return out;
}

template <typename T>
Tensor<T> reduce_all(const Tensor<T>& x, ReduceKind kind) {
    T acc = kind == ReduceKind::max ? -std::numeric_limits<T>::infinity() : T(0);
    for (T v : x.data()) {
        if (kind == ReduceKind::max)
            acc = std::max(acc, v);
        else
            acc += v;
    }
    if (kind == ReduceKind::mean) acc /= static_cast<T>(x.size());
    return Tensor<T>::scalar(acc);
}

template <typename T>
std::vector<std::int64_t> argmax_along(const Tensor<T>& x, int axis) {
    axis = normalize_axis(axis, x.rank());
    const Split s = split_at(x.shape(), axis);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(s.outer * s.inner));
    const T* src = x.data().data();
    for (std::int64_t o = 0; o < s.outer; ++o) {
        for (std::int64_t in = 0; in < s.inner; ++in) {
            const std::int64_t base = o * s.len * s.inner + in;
            std::int64_t best = base;
            for (std::int64_t i = 1; i < s.len; ++i) {
                const std::int64_t at = base + i * s.inner;
                if (src[at] > src[best]) best = at;
            }
            idx[o * s.inner + in] = best;
        }
    }
    return idx;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& perm) {
    const int r = x.rank();
    if (static_cast<int>(perm.size()) != r) throw DimensionError("permute: rank mismatch for " + shape_str(x.shape()));
    std::vector<bool> seen(r, false);
    Shape os(r);
    for (int i = 0; i < r; ++i) {
        if (perm[i] < 0 || perm[i] >= r || seen[perm[i]]) throw DimensionError("permute: invalid permutation");
        seen[perm[i]] = true;
        os[i] = x.shape()[perm[i]];
    }
    Tensor<T> out(os);
    if (out.size() == 0) return out;
    const auto in_st = strides_of(x.shape());
    std::vector<std::int64_t> st(r);
    for (int i = 0; i < r; ++i) st[i] = in_st[perm[i]];
    const std::vector<std::int64_t> unit = strides_of(os);
    const T* src = x.data().data();
    T* dst = out.data().data();
    for_each_broadcast<T>(os, unit, st, [&](std::int64_t o, std::int64_t, std::int64_t i) { dst[o] = src[i]; });
    return out;
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, int axis) {
    if (a.rank() != b.rank()) {
        throw DimensionError("concat: rank mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    axis = normalize_axis(axis, a.rank());
    for (int i = 0; i < a.rank(); ++i) {
        if (i != axis && a.shape()[i] != b.shape()[i]) {
            throw DimensionError("concat: extents differ off the concat axis: " + shape_str(a.shape()) + " vs " +
                                 shape_str(b.shape()));
        }
    }
    Shape os = a.shape();
    os[axis] += b.shape()[axis];
    Tensor<T> out(os);
    const Split sa = split_at(a.shape(), axis), sb = split_at(b.shape(), axis);
    const std::int64_t ca = sa.len * sa.inner, cb = sb.len * sb.inner;
    for (std::int64_t o = 0; o < sa.outer; ++o) {
        T* dst = out.data().data() + o * (ca + cb);
        std::copy_n(a.data().data() + o * ca, ca, dst);
        std::copy_n(b.data().data() + o * cb, cb, dst + ca);
    }
    return out;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::int64_t begin, std::int64_t end) {
    axis = normalize_axis(axis, x.rank());
    if (begin < 0 || end < begin || end > x.shape()[axis]) {
        throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for " +
                             shape_str(x.shape()));
    }
    const Split s = split_at(x.shape(), axis);
    Shape os = x.shape();
    os[axis] = end - begin;
    Tensor<T> out(os);
    const std::int64_t chunk = (end - begin) * s.inner;
    for (std::int64_t o = 0; o < s.outer; ++o) {
        std::copy_n(x.data().data() + o * s.len * s.inner + begin * s.inner, chunk, out.data().data() + o * chunk);
    }
    return out;
}

template <typename T>
Tensor<T> cosine_channel(const Tensor<T>& a, const Tensor<T>& b, T eps) {
    if (a.shape() != b.shape() || a.rank() != 4) {
        throw DimensionError("cosine_channel: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const std::int64_t batch = a.dim(0), c = a.dim(1), hw = a.dim(2) * a.dim(3);
    Tensor<T> out({batch, 1, a.dim(2), a.dim(3)});
    for (std::int64_t n = 0; n < batch; ++n) {
        for (std::int64_t p = 0; p < hw; ++p) {
            T dot = 0, na = 0, nb = 0;
            for (std::int64_t k = 0; k < c; ++k) {
                const T va = a[(n * c + k) * hw + p], vb = b[(n * c + k) * hw + p];
                dot += va * vb;
                na += va * va;
                nb += vb * vb;
            }
            out[n * hw + p] = dot / std::max(std::sqrt(na) * std::sqrt(nb), eps);
        }
    }
    return out;
}

#define SMTC_INSTANTIATE(T)                                                                                            \
    template void gemm<T>(bool, bool, std::int64_t, std::int64_t, std::int64_t, const T*, const T*, T*, bool);         \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                                                  \
    template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, const Conv2dParams&);           \
    template void conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Conv2dParams&,        \
                                     Tensor<T>*, Tensor<T>*, Tensor<T>*);                                              \
    template Tensor<T> resize_bilinear<T>(const Tensor<T>&, std::int64_t, std::int64_t);                               \
    template void resize_bilinear_backward<T>(const Tensor<T>&, Tensor<T>&);                                           \
    template Tensor<T> softmax<T>(const Tensor<T>&, int);                                                              \
    template Tensor<T> layernorm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                          \
    template Tensor<T> binary<T>(BinaryOp, const Tensor<T>&, const Tensor<T>&);                                        \
    template Tensor<T> sum_to_shape<T>(const Tensor<T>&, const Shape&);                                                \
    template Tensor<T> broadcast_to<T>(const Tensor<T>&, const Shape&);                                                \
    template Tensor<T> reduce<T>(const Tensor<T>&, int, ReduceKind, bool);                                             \
    template Tensor<T> reduce_all<T>(const Tensor<T>&, ReduceKind);                                                    \
    template std::vector<std::int64_t> argmax_along<T>(const Tensor<T>&, int);                                         \
    template Tensor<T> permute<T>(const Tensor<T>&, const std::vector<int>&);                                          \
    template Tensor<T> concat<T>(const Tensor<T>&, const Tensor<T>&, int);                                             \
    template Tensor<T> slice<T>(const Tensor<T>&, int, std::int64_t, std::int64_t);                                    \
    template Tensor<T> cosine_channel<T>(const Tensor<T>&, const Tensor<T>&, T);

SMTC_INSTANTIATE(float)
SMTC_INSTANTIATE(double)
SMTC_INSTANTIATE(long double)

#undef SMTC_INSTANTIATE

} // namespace smtc::kernels
