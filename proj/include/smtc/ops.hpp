#pragma once

// Differentiable operations over tape-recorded values.

#include <vector>

#include "smtc/autodiff.hpp"
#include "smtc/kernels.hpp"

namespace smtc::ad {

template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> div(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> x, T c);
template <typename T> Var<T> add_scalar(Var<T> x, T c);

template <typename T> Var<T> relu(Var<T> x);
// Exact (erf) form.
template <typename T> Var<T> gelu(Var<T> x);
template <typename T> Var<T> sigmoid(Var<T> x);
template <typename T> Var<T> log(Var<T> x);
template <typename T> Var<T> exp(Var<T> x);
template <typename T> Var<T> pow(Var<T> x, T p);

// 2-D product; 3-D inputs are treated as batched products over the leading extent.
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
// a * b^T on the last two extents (2-D or batched 3-D).
template <typename T> Var<T> matmul_nt(Var<T> a, Var<T> b);
// x[..., k] * W[d, k]^T (+ bias[d]).
template <typename T> Var<T> linear(Var<T> x, Var<T> weight, const Var<T>* bias);

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, const Var<T>* bias, const kernels::Conv2dParams& p);
template <typename T> Var<T> resize_bilinear(Var<T> x, std::int64_t out_h, std::int64_t out_w);
template <typename T> Var<T> softmax(Var<T> x, int axis);
template <typename T> Var<T> layernorm(Var<T> x, Var<T> gamma, Var<T> beta, T eps);

template <typename T> Var<T> sum(Var<T> x, int axis, bool keepdim);
template <typename T> Var<T> mean(Var<T> x, int axis, bool keepdim);
template <typename T> Var<T> max(Var<T> x, int axis, bool keepdim);
template <typename T> Var<T> sum_all(Var<T> x);
template <typename T> Var<T> mean_all(Var<T> x);

template <typename T> Var<T> concat(Var<T> a, Var<T> b, int axis);
template <typename T> Var<T> concat_channels(Var<T> a, Var<T> b);
template <typename T> Var<T> slice(Var<T> x, int axis, std::int64_t begin, std::int64_t end);
template <typename T> Var<T> reshape(Var<T> x, Shape shape);
template <typename T> Var<T> permute(Var<T> x, const std::vector<int>& perm);
template <typename T> Var<T> detach(Var<T> x);

template <typename T> Var<T> cosine_channel(Var<T> a, Var<T> b, T eps);

// Per-element stable binary cross-entropy from logits.
template <typename T> Var<T> bce_with_logits(Var<T> logits, const Tensor<T>& target);
// Per-element focal term -a_t (1 - p_t)^gamma log p_t from logits.
template <typename T>
Var<T> focal_with_logits(Var<T> logits, const Tensor<T>& target, T gamma, T alpha, bool class_balance);

// NCHW <-> tokens [B, H*W, C].
template <typename T> Var<T> to_tokens(Var<T> x);
template <typename T> Var<T> from_tokens(Var<T> tokens, std::int64_t h, std::int64_t w);

} // namespace smtc::ad
