#include "smtc/objective.hpp"

#include <cmath>
#include <numeric>

namespace smtc {

void LossWeights::validate() const {
    for (double v : {alpha, beta, gamma, focal_gamma})
        if (!(v >= 0.0)) throw ConfigError("loss weights must be non-negative");
    if (!(omega >= 0.0 && omega <= 1.0)) throw ConfigError("loss omega must lie in [0,1]");
    if (!(focal_alpha >= 0.0 && focal_alpha <= 1.0)) throw ConfigError("focal alpha must lie in [0,1]");
    if (!(dice_eps > 0.0)) throw ConfigError("dice eps must be positive");
}

template <typename T>
Var<T> focal_loss(Var<T> logits, const Tensor<T>& target, double gamma_f, double alpha_f, bool class_balance) {
    return ad::mean_all(
        ad::focal_with_logits(logits, target, static_cast<T>(gamma_f), static_cast<T>(alpha_f), class_balance));
}

template <typename T>
Var<T> bce_loss(Var<T> logits, const Tensor<T>& target) {
    return ad::mean_all(ad::bce_with_logits(logits, target));
}

template <typename T>
Var<T> dice_loss(Var<T> probs, const Tensor<T>& target, double eps) {
    if (probs.shape() != target.shape())
        throw DimensionError("dice_loss: " + shape_str(probs.shape()) + " vs target " + shape_str(target.shape()));
    Tape<T>& t = *probs.tape();
    const T e = static_cast<T>(eps);
    const T sum_g = std::accumulate(target.data().begin(), target.data().end(), T(0));
    auto inter = ad::sum_all(ad::mul(probs, t.constant(target)));
    auto num = ad::add_scalar(ad::scale(inter, T(2)), e);
    auto den = ad::add_scalar(ad::sum_all(probs), sum_g + e);
    return ad::add_scalar(ad::scale(ad::div(num, den), T(-1)), T(1));
}

namespace {

template <typename T>
Var<T> head_loss(Var<T> logits, const Tensor<T>& gt, const LossWeights& w, HeadLoss& terms) {
    auto f = focal_loss(logits, gt, w.focal_gamma, w.focal_alpha, w.focal_class_balance);
    auto b = bce_loss(logits, gt);
    auto d = dice_loss(ad::sigmoid(logits), gt, w.dice_eps);
    auto l = ad::add(ad::add(ad::scale(f, static_cast<T>(w.alpha)), ad::scale(b, static_cast<T>(w.beta))),
                     ad::scale(d, static_cast<T>(w.gamma)));
    terms.focal = static_cast<double>(f.value()[0]);
    terms.bce = static_cast<double>(b.value()[0]);
    terms.dice = static_cast<double>(d.value()[0]);
    terms.weighted = static_cast<double>(l.value()[0]);
    return l;
}

} // namespace

template <typename T>
CombinedLoss<T> combined_loss(Var<T> round2_logits, Var<T> round1_logits, const Tensor<T>& gt, const LossWeights& w) {
    if (round2_logits.shape() != gt.shape() || round1_logits.shape() != gt.shape())
        throw DimensionError("combined_loss: prediction maps " + shape_str(round2_logits.shape()) + ", " +
                             shape_str(round1_logits.shape()) + " vs target " + shape_str(gt.shape()));
    CombinedLoss<T> out;
    auto l2 = head_loss(round2_logits, gt, w, out.round2);
    auto l1 = head_loss(round1_logits, gt, w, out.round1);
    out.total = ad::add(l2, ad::scale(l1, static_cast<T>(w.omega)));
    return out;
}

#define SMTC_INSTANTIATE(T)                                                                   \
    template Var<T> focal_loss<T>(Var<T>, const Tensor<T>&, double, double, bool);            \
    template Var<T> bce_loss<T>(Var<T>, const Tensor<T>&);                                    \
    template Var<T> dice_loss<T>(Var<T>, const Tensor<T>&, double);                           \
    template CombinedLoss<T> combined_loss<T>(Var<T>, Var<T>, const Tensor<T>&, const LossWeights&);

SMTC_INSTANTIATE(float)
SMTC_INSTANTIATE(double)
SMTC_INSTANTIATE(long double)

} // namespace smtc
