#pragma once

#include <cstdint>
#include <vector>

#include "smtc/autodiff.hpp"

namespace smtc {

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

template <typename T>
struct AdamWState {
    AdamWConfig hp;
    std::int64_t step_count = 0;
    std::vector<Tensor<T>> first_moment;
    std::vector<Tensor<T>> second_moment;

    static AdamWState init(const ParameterStore<T>& params, const AdamWConfig& hp);
};

// Decoupled weight decay (p *= 1 - lr*wd) followed by the bias-corrected Adam update.
template <typename T>
void adamw_step(ParameterStore<T>& params, const std::vector<Tensor<T>>& grads, AdamWState<T>& state);

extern template struct AdamWState<float>;
extern template struct AdamWState<double>;

} // namespace smtc
