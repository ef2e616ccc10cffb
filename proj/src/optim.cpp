#include "smtc/optim.hpp"

#include <cmath>
#include <string>

namespace smtc {

template <typename T>
AdamWState<T> AdamWState<T>::init(const ParameterStore<T>& params, const AdamWConfig& hp) {
    AdamWState s;
    s.hp = hp;
    for (const auto& p : params) {
        s.first_moment.emplace_back(p.value.shape());
        s.second_moment.emplace_back(p.value.shape());
    }
    return s;
}

template <typename T>
void adamw_step(ParameterStore<T>& params, const std::vector<Tensor<T>>& grads, AdamWState<T>& state) {
    if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
        state.second_moment.size() != params.size()) {
        throw DimensionError("adamw_step: " + std::to_string(grads.size()) + " gradients / " +
                             std::to_string(state.first_moment.size()) + " moments for " +
                             std::to_string(params.size()) + " parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Shape& s = params[i].value.shape();
        if (grads[i].shape() != s || state.first_moment[i].shape() != s || state.second_moment[i].shape() != s) {
            throw DimensionError("adamw_step: shape mismatch for parameter '" + params[i].name + "' " + shape_str(s) +
                                 " vs gradient " + shape_str(grads[i].shape()));
        }
    }
    const auto& hp = state.hp;
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const T bc1 = static_cast<T>(1.0 - std::pow(hp.beta1, t));
    const T bc2 = static_cast<T>(1.0 - std::pow(hp.beta2, t));
    const T lr = static_cast<T>(hp.lr), b1 = static_cast<T>(hp.beta1), b2 = static_cast<T>(hp.beta2);
    const T eps = static_cast<T>(hp.eps);
    const T decay = static_cast<T>(1.0 - hp.lr * hp.weight_decay);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i].value.data();
        auto g = grads[i].data();
        auto m = state.first_moment[i].data();
        auto v = state.second_moment[i].data();
        for (std::size_t j = 0; j < p.size(); ++j) {
            if (hp.weight_decay != 0.0) p[j] *= decay;
            m[j] = b1 * m[j] + (T(1) - b1) * g[j];
            v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
            const T mhat = m[j] / bc1;
            const T vhat = v[j] / bc2;
            p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

template struct AdamWState<float>;
template struct AdamWState<double>;
template void adamw_step<float>(ParameterStore<float>&, const std::vector<Tensor<float>>&, AdamWState<float>&);
template void adamw_step<double>(ParameterStore<double>&, const std::vector<Tensor<double>>&, AdamWState<double>&);

} // namespace smtc
