#include "smtc/layers.hpp"

#include <cmath>

#include "smtc/rng.hpp"

namespace smtc {

std::uint64_t name_hash(const std::string& name) {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

template <typename T>
Tensor<T> Initializer::normal(const std::string& name, Shape shape, double stddev) const {
    Tensor<T> t(std::move(shape));
    CounterRng rng(seed_, name_hash(name));
    for (auto& v : t.data()) v = static_cast<T>(rng.normal(0.0, stddev));
    return t;
}

template <typename T>
LinearIdx add_linear(ParameterStore<T>& s, const Initializer& init, const std::string& name, std::int64_t in,
                     std::int64_t out, ParamGroup g, bool bias, double stddev) {
    LinearIdx l;
    l.w = s.add(name + ".w", init.normal<T>(name + ".w", {out, in}, stddev), g);
    l.has_bias = bias;
    if (bias) l.b = s.add(name + ".b", Tensor<T>({out}), g);
    return l;
}

template <typename T>
ConvIdx add_conv(ParameterStore<T>& s, const Initializer& init, const std::string& name, std::int64_t in,
                 std::int64_t out, std::int64_t k, kernels::Conv2dParams p, ParamGroup g) {
    ConvIdx c;
    c.p = p;
    const double fan_out = static_cast<double>(k * k * out) / p.groups;
    c.w = s.add(name + ".w", init.normal<T>(name + ".w", {out, in / p.groups, k, k}, std::sqrt(2.0 / fan_out)), g);
    c.b = s.add(name + ".b", Tensor<T>({out}), g);
    return c;
}

template <typename T>
NormIdx add_norm(ParameterStore<T>& s, const std::string& name, std::int64_t c, ParamGroup g) {
    NormIdx n;
    n.gamma = s.add(name + ".gamma", Tensor<T>({c}, T(1)), g);
    n.beta = s.add(name + ".beta", Tensor<T>({c}), g);
    return n;
}

template <typename T>
Var<T> apply(Tape<T>& t, const LinearIdx& l, Var<T> x) {
    if (!l.has_bias) return ad::linear(x, t.param(l.w), static_cast<const Var<T>*>(nullptr));
    Var<T> b = t.param(l.b);
    return ad::linear(x, t.param(l.w), &b);
}

template <typename T>
Var<T> apply(Tape<T>& t, const ConvIdx& c, Var<T> x) {
    Var<T> b = t.param(c.b);
    return ad::conv2d(x, t.param(c.w), &b, c.p);
}

template <typename T>
Var<T> apply(Tape<T>& t, const NormIdx& n, Var<T> x) {
    return ad::layernorm(x, t.param(n.gamma), t.param(n.beta), static_cast<T>(kNormEps));
}

template <typename T>
Var<T> channel_norm(Tape<T>& t, const NormIdx& n, Var<T> x) {
    const auto h = x.dim(2), w = x.dim(3);
    return ad::from_tokens(apply(t, n, ad::to_tokens(x)), h, w);
}

#define SMTC_INSTANTIATE(T)                                                                                    \
    template Tensor<T> Initializer::normal<T>(const std::string&, Shape, double) const;                       \
    template LinearIdx add_linear<T>(ParameterStore<T>&, const Initializer&, const std::string&, std::int64_t, \
                                     std::int64_t, ParamGroup, bool, double);                                  \
    template ConvIdx add_conv<T>(ParameterStore<T>&, const Initializer&, const std::string&, std::int64_t,     \
                                 std::int64_t, std::int64_t, kernels::Conv2dParams, ParamGroup);               \
    template NormIdx add_norm<T>(ParameterStore<T>&, const std::string&, std::int64_t, ParamGroup);            \
    template Var<T> apply<T>(Tape<T>&, const LinearIdx&, Var<T>);                                              \
    template Var<T> apply<T>(Tape<T>&, const ConvIdx&, Var<T>);                                                \
    template Var<T> apply<T>(Tape<T>&, const NormIdx&, Var<T>);                                                \
    template Var<T> channel_norm<T>(Tape<T>&, const NormIdx&, Var<T>);

SMTC_INSTANTIATE(float)
SMTC_INSTANTIATE(double)
SMTC_INSTANTIATE(long double)

} // namespace smtc
