#pragma once

// Parameter registration and forward helpers shared by the model modules.
// Layers hold parameter indices only, so one layout serves float and double stores.

#include <cstdint>
#include <string>

#include "smtc/autodiff.hpp"
#include "smtc/ops.hpp"

namespace smtc {

// Deterministic initializer: each parameter draws from its own stream keyed by
// (seed, name), so values do not depend on registration order or precision.
class Initializer {
public:
    explicit Initializer(std::uint64_t seed) : seed_(seed) {}

    template <typename T>
    Tensor<T> normal(const std::string& name, Shape shape, double stddev) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
};

std::uint64_t name_hash(const std::string& name);

struct LinearIdx {
    std::size_t w = 0, b = 0;
    bool has_bias = true;
};

struct ConvIdx {
    std::size_t w = 0, b = 0;
    kernels::Conv2dParams p;
};

struct NormIdx {
    std::size_t gamma = 0, beta = 0;
};

template <typename T>
LinearIdx add_linear(ParameterStore<T>& s, const Initializer& init, const std::string& name, std::int64_t in,
                     std::int64_t out, ParamGroup g, bool bias = true, double stddev = 0.02);

// He-style init with fan-out = k*k*out/groups.
template <typename T>
ConvIdx add_conv(ParameterStore<T>& s, const Initializer& init, const std::string& name, std::int64_t in,
                 std::int64_t out, std::int64_t k, kernels::Conv2dParams p, ParamGroup g);

template <typename T>
NormIdx add_norm(ParameterStore<T>& s, const std::string& name, std::int64_t c, ParamGroup g);

template <typename T>
Var<T> apply(Tape<T>& t, const LinearIdx& l, Var<T> x);
template <typename T>
Var<T> apply(Tape<T>& t, const ConvIdx& c, Var<T> x);
template <typename T>
Var<T> apply(Tape<T>& t, const NormIdx& n, Var<T> x);

// Channel layernorm on NCHW maps (normalizes each pixel's channel vector).
template <typename T>
Var<T> channel_norm(Tape<T>& t, const NormIdx& n, Var<T> x);

inline constexpr double kNormEps = 1e-6;

} // namespace smtc
