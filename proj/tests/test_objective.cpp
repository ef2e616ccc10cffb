#include <cmath>

#include "doctest.h"
#include "smtc/gradcheck.hpp"
#include "smtc/objective.hpp"
#include "test_util.hpp"

using namespace smtc;
using smtc::testing::random_tensor;
using TD = Tensor<double>;

namespace {

// Per-pixel reference formulas, written directly from the definitions.
double ref_bce(double l, double y) {
    const double p = 1.0 / (1.0 + std::exp(-l));
    return -(y * std::log(p) + (1 - y) * std::log(1 - p));
}

double ref_focal(double l, double y, double g, double a) {
    const double p = 1.0 / (1.0 + std::exp(-l));
    const double pt = y == 1 ? p : 1 - p;
    const double at = y == 1 ? a : 1 - a;
    return -at * std::pow(1 - pt, g) * std::log(pt);
}

struct RefTerms {
    double focal = 0, bce = 0, dice = 0;
};

RefTerms ref_terms(const TD& logits, const TD& y, const LossWeights& w) {
    RefTerms r;
    double sp = 0, sg = 0, spg = 0;
    const double n = static_cast<double>(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        r.focal += ref_focal(logits[i], y[i], w.focal_gamma, w.focal_alpha) / n;
        r.bce += ref_bce(logits[i], y[i]) / n;
        const double p = 1.0 / (1.0 + std::exp(-logits[i]));
        sp += p;
        sg += y[i];
        spg += p * y[i];
    }
    r.dice = 1 - (2 * spg + w.dice_eps) / (sp + sg + w.dice_eps);
    return r;
}

TD binary(Shape s, std::uint64_t seed) {
    TD t = random_tensor(std::move(s), seed, 0, 1);
    for (auto& v : t.data()) v = v < 0.5 ? 0.0 : 1.0;
    return t;
}

double eval(Var<double> v) { return v.value()[0]; }

// Precision-generic wrappers for gradcheck; the target follows the tape precision.
template <typename T>
Var<T> focal_of(Var<T> l, const TD& y) { return focal_loss(l, y.cast<T>(), 2.0, 0.25); }
template <typename T>
Var<T> bce_of(Var<T> l, const TD& y) { return bce_loss(l, y.cast<T>()); }
template <typename T>
Var<T> dice_of(Var<T> l, const TD& y) { return dice_loss(ad::sigmoid(l), y.cast<T>(), 1.0); }
template <typename T>
Var<T> combined_of(Var<T> l, const TD& y) {
    return combined_loss(l, ad::scale(l, T(0.5)), y.cast<T>(), LossWeights{}).total;
}

} // namespace

TEST_CASE("focal_loss examples") {
    Tape<double> t;
    CHECK(eval(focal_loss(t.input(TD({1, 1, 1, 1})), TD({1, 1, 1, 1}, 1.0), 2.0, 0.25)) ==
          doctest::Approx(0.25 * 0.25 * std::log(2.0)).epsilon(1e-12));
    CHECK(std::abs(eval(focal_loss(t.input(TD({1, 1, 1, 1})), TD({1, 1, 1, 1}, 1.0), 2.0, 0.25)) - 0.04332) < 1e-5);

    TD y = binary({2, 1, 4, 4}, 1), sure(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) sure[i] = y[i] == 1 ? 40.0 : -40.0;
    CHECK(eval(focal_loss(t.input(sure), y, 2.0, 0.25)) < 1e-30);

    TD l = random_tensor({2, 1, 4, 4}, 2, -4, 4);
    const double f = eval(focal_loss(t.input(l), y, 0.0, 0.5));
    const double b = eval(bce_loss(t.input(l), y));
    CHECK(std::abs(f - 0.5 * b) <= 1e-12);

    TD soft = y;
    soft[3] = 0.5;
    CHECK_THROWS_AS(focal_loss(t.input(l), soft, 2.0, 0.25), ContractError);
    CHECK_THROWS_AS(focal_loss(t.input(l), TD({2, 1, 4, 3}), 2.0, 0.25), DimensionError);
}

TEST_CASE("bce_loss examples") {
    Tape<double> t;
    CHECK(eval(bce_loss(t.input(TD({1, 1, 1, 1})), TD({1, 1, 1, 1}, 1.0))) == doctest::Approx(std::log(2.0)).epsilon(1e-14));

    TD y = binary({1, 1, 8, 8}, 3), sure(y.shape()), l = random_tensor({1, 1, 8, 8}, 4, -50, 50), neg = l, flip = y;
    for (std::size_t i = 0; i < y.size(); ++i) {
        sure[i] = y[i] == 1 ? 20.0 : -20.0;
        neg[i] = -l[i];
        flip[i] = 1 - y[i];
    }
    CHECK(eval(bce_loss(t.input(sure), y)) < 1e-4);
    CHECK(eval(bce_loss(t.input(l), TD(y.shape(), 1.0))) == eval(bce_loss(t.input(neg), TD(y.shape(), 0.0))));
    CHECK(eval(bce_loss(t.input(l), y)) == eval(bce_loss(t.input(neg), flip)));

    // Large logits stay finite.
    TD huge({1, 1, 1, 2});
    huge[0] = 800;
    huge[1] = -800;
    const double v = eval(bce_loss(t.input(huge), TD::from({1, 1, 1, 2}, {0, 1})));
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx(800.0));
}

TEST_CASE("dice_loss examples") {
    Tape<double> t;
    TD y = binary({2, 1, 4, 4}, 5);
    CHECK(eval(dice_loss(t.input(y), y, 1.0)) == 0.0);
    CHECK(eval(dice_loss(t.input(TD({1, 1, 2, 2})), TD({1, 1, 2, 2}), 1.0)) == 0.0);

    TD ones({1, 1, 2, 2}, 1.0), half = TD::from({1, 1, 2, 2}, {1, 1, 0, 0});
    CHECK(eval(dice_loss(t.input(ones), half, 1.0)) == doctest::Approx(1.0 - 5.0 / 7.0).epsilon(1e-14));
    CHECK(std::abs(eval(dice_loss(t.input(ones), half, 1e-12)) - 1.0 / 3.0) < 1e-12);
}

TEST_CASE("combined_loss matches hand assembly") {
    LossWeights w;
    CHECK(w.alpha == 20.0);
    CHECK(w.beta == 10.0);
    CHECK(w.gamma == 1.0);
    CHECK(w.omega == 0.3);

    const TD gt = TD::from({1, 1, 2, 2}, {1, 0, 0, 1});
    const TD l2 = TD::from({1, 1, 2, 2}, {2.5, -1.0, 0.3, 0.7});
    const TD l1 = TD::from({1, 1, 2, 2}, {-0.4, 1.2, -2.0, 3.1});
    Tape<double> t;
    auto out = combined_loss(t.input(l2), t.input(l1), gt, w);
    const RefTerms a = ref_terms(l2, gt, w), b = ref_terms(l1, gt, w);
    const double la = w.alpha * a.focal + w.beta * a.bce + w.gamma * a.dice;
    const double lb = w.alpha * b.focal + w.beta * b.bce + w.gamma * b.dice;
    CHECK(std::abs(eval(out.total) - (la + 0.3 * lb)) <= 1e-12);
    CHECK(std::abs(out.round2.focal - a.focal) <= 1e-12);
    CHECK(std::abs(out.round2.bce - a.bce) <= 1e-12);
    CHECK(std::abs(out.round2.dice - a.dice) <= 1e-12);
    CHECK(std::abs(out.round1.weighted - lb) <= 1e-12);

    LossWeights w0 = w;
    w0.omega = 0.0;
    auto z = combined_loss(t.input(l2), t.input(l1), gt, w0);
    CHECK(eval(z.total) == out.round2.weighted);

    LossWeights w2 = w;
    w2.alpha = 40.0;
    auto d = combined_loss(t.input(l2), t.input(l1), gt, w2);
    CHECK(std::abs((eval(d.total) - eval(out.total)) - 20.0 * (a.focal + 0.3 * b.focal)) <= 1e-12);

    CHECK_THROWS_AS(combined_loss(t.input(l2), t.input(TD({1, 1, 2, 3})), gt, w), DimensionError);
}

TEST_CASE("losses are non-negative and vanish on exact binary predictions") {
    Tape<double> t;
    LossWeights w;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        TD y = binary({1, 1, 6, 6}, seed), l = random_tensor({1, 1, 6, 6}, seed + 100, -6, 6);
        CHECK(eval(focal_loss(t.input(l), y, 2.0, 0.25)) >= 0.0);
        CHECK(eval(bce_loss(t.input(l), y)) >= 0.0);
        CHECK(eval(dice_loss(ad::sigmoid(t.input(l)), y, 1.0)) >= 0.0);
        CHECK(eval(dice_loss(t.input(y), y, w.dice_eps)) == 0.0);
    }
}

TEST_CASE("loss weight validation") {
    LossWeights w;
    CHECK_NOTHROW(w.validate());
    w.omega = 1.5;
    CHECK_THROWS_AS(w.validate(), ConfigError);
    w = {};
    w.alpha = -1;
    CHECK_THROWS_AS(w.validate(), ConfigError);
    w = {};
    w.dice_eps = 0;
    CHECK_THROWS_AS(w.validate(), ConfigError);
}

TEST_CASE("gradcheck of each loss") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const TD y = binary({1, 1, 8, 8}, seed + 9);
        const TD l = random_tensor({1, 1, 8, 8}, seed, -3, 3);
        GradcheckOptions o;
        o.seed = seed;
        auto run = [&](const char* name, ScalarFn fn) {
            auto r = gradcheck(fn, {l}, nullptr, o);
            INFO(name << " seed " << seed << " worst " << r.worst);
            CHECK(r.max_rel_error <= 1e-5);
        };
        run("focal", [&](auto&, const auto& v) { return focal_of(v[0], y); });
        run("bce", [&](auto&, const auto& v) { return bce_of(v[0], y); });
        run("dice", [&](auto&, const auto& v) { return dice_of(v[0], y); });
        run("combined", [&](auto&, const auto& v) { return combined_of(v[0], y); });
    }
}
