#pragma once

// Pure dense kernels over Tensor values. Every function here is free of
// hidden state and safe to call concurrently on distinct outputs.

#include <cstdint>
#include <vector>

#include "smtc/tensor.hpp"

namespace smtc::kernels {

// C[m,n] = (accumulate ? C : 0) + op(A) * op(B); A is m x k (or k x m when
// trans_a), B is k x n (or n x k when trans_b).
template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c,
          bool accumulate);

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

struct Conv2dParams {
    int stride = 1;
    int padding = 0;
    int groups = 1;
};

Shape conv2d_output_shape(const Shape& x, const Shape& w, const Conv2dParams& p);

// Cross-correlation, NCHW input, weight [K, C/groups, kh, kw].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, const Conv2dParams& p);

// Accumulates into dx / dw / db when the pointer is non-null.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& grad_out, const Conv2dParams& p,
                     Tensor<T>* dx, Tensor<T>* dw, Tensor<T>* db);

// Bilinear resampling with align_corners = false; constants are reproduced exactly.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, std::int64_t out_h, std::int64_t out_w);

template <typename T>
void resize_bilinear_backward(const Tensor<T>& grad_out, Tensor<T>& dx);

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis);

// Normalizes over the last axis.
template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps);

Shape broadcast_shape(const Shape& a, const Shape& b);

enum class BinaryOp { add, sub, mul, div };

template <typename T>
Tensor<T> binary(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b);

// Sums `g` down to `target` by collapsing broadcast extents.
template <typename T>
Tensor<T> sum_to_shape(const Tensor<T>& g, const Shape& target);

// Expands `x` to `target` following broadcast rules.
template <typename T>
Tensor<T> broadcast_to(const Tensor<T>& x, const Shape& target);

enum class ReduceKind { sum, mean, max };

template <typename T>
Tensor<T> reduce(const Tensor<T>& x, int axis, ReduceKind kind, bool keepdim);

template <typename T>
Tensor<T> reduce_all(const Tensor<T>& x, ReduceKind kind);

// For max reductions: flat input index of the (first) winner per output slot.
template <typename T>
std::vector<std::int64_t> argmax_along(const Tensor<T>& x, int axis);

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& perm);

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, int axis);

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::int64_t begin, std::int64_t end);

template <typename T>
Tensor<T> cosine_channel(const Tensor<T>& a, const Tensor<T>& b, T eps);

int normalize_axis(int axis, int rank);

} // namespace smtc::kernels
