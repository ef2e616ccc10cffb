#pragma once

#include "smtc/ops.hpp"

namespace smtc {

struct LossWeights {
    double alpha = 20.0;  // focal
    double beta = 10.0;   // bce
    double gamma = 1.0;   // dice
    double omega = 0.3;   // round-1 auxiliary
    double focal_gamma = 2.0;
    double focal_alpha = 0.25;
    bool focal_class_balance = true;
    double dice_eps = 1.0;

    void validate() const;
};

// Mean over pixels of -a_t (1 - p_t)^gamma_f log p_t. Targets must be binary.
template <typename T>
Var<T> focal_loss(Var<T> logits, const Tensor<T>& target, double gamma_f, double alpha_f, bool class_balance = true);

// Mean binary cross-entropy from logits.
template <typename T>
Var<T> bce_loss(Var<T> logits, const Tensor<T>& target);

// 1 - (2 sum(p g) + eps) / (sum(p) + sum(g) + eps) over the whole batch.
template <typename T>
Var<T> dice_loss(Var<T> probs, const Tensor<T>& target, double eps);

struct HeadLoss {
    double focal = 0.0, bce = 0.0, dice = 0.0, weighted = 0.0;
};

template <typename T>
struct CombinedLoss {
    Var<T> total;
    HeadLoss round2, round1;
};

// L(x) = alpha focal + beta bce + gamma dice; total = L(round 2) + omega L(round 1).
template <typename T>
CombinedLoss<T> combined_loss(Var<T> round2_logits, Var<T> round1_logits, const Tensor<T>& gt, const LossWeights& w);

} // namespace smtc
