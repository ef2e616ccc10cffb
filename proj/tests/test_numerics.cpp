#include <cmath>
#include <numbers>

#include "doctest.h"
#include "smtc/gradcheck.hpp"
#include "smtc/kernels.hpp"
#include "smtc/ops.hpp"
#include "smtc/optim.hpp"
#include "test_util.hpp"

using namespace smtc;
using smtc::testing::max_abs_diff;
using smtc::testing::random_tensor;
using TD = Tensor<double>;

namespace {

const TD* const no_bias = nullptr;

// Direct-loop cross-correlation, independent of im2col/gemm.
TD conv_oracle(const TD& x, const TD& w, int stride, int pad, int groups) {
    const auto B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const auto K = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const auto Ho = (H + 2 * pad - kh) / stride + 1, Wo = (W + 2 * pad - kw) / stride + 1;
    const auto cg = C / groups, kg = K / groups;
    TD out({B, K, Ho, Wo});
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t k = 0; k < K; ++k)
            for (std::int64_t oy = 0; oy < Ho; ++oy)
                for (std::int64_t ox = 0; ox < Wo; ++ox) {
                    double s = 0;
                    const auto g = k / kg;
                    for (std::int64_t c = 0; c < cg; ++c)
                        for (std::int64_t i = 0; i < kh; ++i)
                            for (std::int64_t j = 0; j < kw; ++j) {
                                const auto iy = oy * stride - pad + i, ix = ox * stride - pad + j;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                s += x.at(b, g * cg + c, iy, ix) * w.at(k, c, i, j);
                            }
                    out.at(b, k, oy, ox) = s;
                }
    return out;
}

double check(const ScalarFn& f, std::vector<TD> inputs, std::uint64_t seed = 0) {
    GradcheckOptions o;
    o.seed = seed;
    return gradcheck(f, std::move(inputs), nullptr, o).max_rel_error;
}

} // namespace

TEST_CASE("matmul examples") {
    TD a = TD::from({2, 2}, {1, 2, 3, 4});
    TD eye = TD::from({2, 2}, {1, 0, 0, 1});
    CHECK(kernels::matmul(a, eye).bitwise_equal(a));
    TD z = kernels::matmul(a, TD({2, 2}));
    for (double v : z.data()) CHECK(v == 0.0);
    TD r = kernels::matmul(TD::from({1, 2}, {1, 2}), TD::from({2, 1}, {1, 1}));
    CHECK(r.shape() == Shape{1, 1});
    CHECK(r[0] == 3.0);
    CHECK_THROWS_AS(kernels::matmul(a, TD({3, 2})), DimensionError);
    try {
        kernels::matmul(a, TD({3, 2}));
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("[2,2]") != std::string::npos);
        CHECK(std::string(e.what()).find("[3,2]") != std::string::npos);
    }
}

TEST_CASE("gemm transposes agree with plain product") {
    TD a = random_tensor({5, 7}, 1), b = random_tensor({7, 3}, 2);
    TD ref = kernels::matmul(a, b);
    TD at = kernels::permute(a, {1, 0}), bt = kernels::permute(b, {1, 0});
    TD c({5, 3});
    kernels::gemm(true, true, 5, 3, 7, at.data().data(), bt.data().data(), c.data().data(), false);
    CHECK(max_abs_diff(c, ref) < 1e-14);
}

TEST_CASE("conv2d examples") {
    TD x = random_tensor({1, 3, 5, 5}, 3);
    TD id({3, 3, 1, 1});
    for (int c = 0; c < 3; ++c) id.at(c, c, 0, 0) = 1.0;
    CHECK(kernels::conv2d(x, id, no_bias, {}).bitwise_equal(x));

    TD ones({1, 1, 3, 3}, 1.0);
    TD o = kernels::conv2d(ones, TD({1, 1, 3, 3}, 1.0), no_bias, {});
    CHECK(o.shape() == Shape{1, 1, 1, 1});
    CHECK(o[0] == 9.0);

    TD grid({1, 1, 4, 4});
    for (int i = 0; i < 16; ++i) grid[i] = i;
    TD sub = kernels::conv2d(grid, TD({1, 1, 1, 1}, 1.0), no_bias, {.stride = 2});
    CHECK(sub.shape() == Shape{1, 1, 2, 2});
    CHECK(sub[0] == 0.0);
    CHECK(sub[1] == 2.0);
    CHECK(sub[2] == 8.0);
    CHECK(sub[3] == 10.0);

    CHECK_THROWS_AS(kernels::conv2d(x, TD({2, 4, 3, 3}), no_bias, {}), DimensionError);
}

TEST_CASE("conv2d matches direct-loop oracle") {
    struct Case {
        Shape x, w;
        int stride, pad, groups;
    };
    for (const Case& c : {Case{{2, 3, 7, 6}, {4, 3, 3, 3}, 1, 1, 1}, Case{{1, 4, 9, 9}, {6, 4, 7, 7}, 4, 3, 1},
                          Case{{2, 4, 6, 6}, {4, 1, 3, 3}, 1, 1, 4}, Case{{1, 4, 8, 8}, {4, 2, 3, 3}, 2, 1, 2}}) {
        TD x = random_tensor(c.x, 11), w = random_tensor(c.w, 12);
        TD got = kernels::conv2d(x, w, no_bias, {c.stride, c.pad, c.groups});
        CHECK(max_abs_diff(got, conv_oracle(x, w, c.stride, c.pad, c.groups)) < 1e-12);
    }
}

TEST_CASE("resize_bilinear examples") {
    TD seven({1, 2, 3, 5}, 7.0);
    TD r = kernels::resize_bilinear(seven, 11, 4);
    for (double v : r.data()) CHECK(v == 7.0);

    TD one = TD::from({1, 1, 1, 1}, {2.5});
    for (double v : kernels::resize_bilinear(one, 4, 4).data()) CHECK(v == 2.5);

    TD row = TD::from({1, 1, 1, 2}, {1, 3});
    TD up = kernels::resize_bilinear(row, 1, 4);
    CHECK(up[0] == doctest::Approx(1.0));
    CHECK(up[1] == doctest::Approx(1.5));
    CHECK(up[2] == doctest::Approx(2.5));
    CHECK(up[3] == doctest::Approx(3.0));
    CHECK_THROWS_AS(kernels::resize_bilinear(row, 0, 4), DimensionError);
}

TEST_CASE("resize_bilinear keeps arbitrary constants exact") {
    smtc::CounterRng rng(5);
    for (int k = 0; k < 20; ++k) {
        const double c = rng.uniform(-100, 100);
        TD x({2, 3, 1 + static_cast<std::int64_t>(rng.below(9)), 1 + static_cast<std::int64_t>(rng.below(9))}, c);
        for (double v : kernels::resize_bilinear(x, 1 + rng.below(40), 1 + rng.below(40)).data()) REQUIRE(v == c);
    }
}

TEST_CASE("softmax examples and invariants") {
    TD u({1, 5}, 0.3);
    for (double v : kernels::softmax(u, 1).data()) CHECK(v == doctest::Approx(0.2));
    TD s = kernels::softmax(TD::from({2}, {0.0, std::log(3.0)}), 0);
    CHECK(s[0] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(s[1] == doctest::Approx(0.75).epsilon(1e-14));

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        TD x = random_tensor({4, 6, 3}, seed, -20, 20);
        for (int axis = 0; axis < 3; ++axis) {
            TD y = kernels::softmax(x, axis);
            TD sums = kernels::reduce(y, axis, kernels::ReduceKind::sum, false);
            for (double v : sums.data()) CHECK(std::abs(v - 1.0) <= 1e-12);
            for (double v : y.data()) CHECK(v > 0.0);
            TD shifted = x;
            for (auto& v : shifted.data()) v += 123.0;
            CHECK(max_abs_diff(kernels::softmax(shifted, axis), y) <= 1e-12);
        }
    }
    // large magnitudes stay finite thanks to max subtraction
    CHECK(kernels::softmax(TD::from({3}, {1000.0, 999.0, -1000.0}), 0).all_finite());
}

TEST_CASE("layernorm examples") {
    TD one({3}, 1.0), zero({3}, 0.0);
    TD c = kernels::layernorm(TD({2, 3}, 4.2), one, zero, 1e-5);
    for (double v : c.data()) CHECK(v == 0.0);

    TD g = TD::from({2}, {1, 1}), b = TD::from({2}, {0, 0});
    TD y = kernels::layernorm(TD::from({1, 2}, {1, -1}), g, b, 1e-300);
    CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(-1.0).epsilon(1e-12));

    TD beta = TD::from({3}, {0.5, -2, 7});
    TD x = random_tensor({4, 3}, 9);
    TD z = kernels::layernorm(x, zero, beta, 1e-5);
    for (int r = 0; r < 4; ++r)
        for (int i = 0; i < 3; ++i) CHECK(z[r * 3 + i] == beta[i]);

    TD xr = random_tensor({6, 16}, 10, -5, 5);
    TD n = kernels::layernorm(xr, TD({16}, 1.0), TD({16}, 0.0), 0.0);
    for (int r = 0; r < 6; ++r) {
        double m = 0, v = 0;
        for (int i = 0; i < 16; ++i) m += n[r * 16 + i];
        m /= 16;
        for (int i = 0; i < 16; ++i) v += (n[r * 16 + i] - m) * (n[r * 16 + i] - m);
        v /= 16;
        CHECK(std::abs(m) <= 1e-10);
        CHECK(std::abs(v - 1.0) <= 1e-10);
    }
    CHECK_THROWS_AS(kernels::layernorm(xr, TD({15}, 1.0), TD({16}), 1e-5), DimensionError);
}

TEST_CASE("elementwise examples") {
    Tape<double> tape;
    auto x = tape.constant(TD::from({2}, {-3, 3}));
    auto r = ad::relu(x);
    CHECK(r.value()[0] == 0.0);
    CHECK(r.value()[1] == 3.0);
    CHECK(ad::sigmoid(tape.constant(TD::scalar(0.0))).value()[0] == 0.5);
    auto s = ad::add(tape.constant(TD::from({2}, {1, 2})), tape.constant(TD::from({1}, {10})));
    CHECK(s.value()[0] == 11.0);
    CHECK(s.value()[1] == 12.0);
    CHECK_THROWS_AS(ad::add(tape.constant(TD({2, 3})), tape.constant(TD({3, 2}))), DimensionError);

    // broadcast against a brute-force index oracle
    TD a = random_tensor({2, 1, 4}, 1), b = random_tensor({3, 1}, 2);
    TD m = kernels::binary(kernels::BinaryOp::mul, a, b);
    REQUIRE(m.shape() == Shape{2, 3, 4});
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 4; ++k) CHECK(m[(i * 3 + j) * 4 + k] == a[i * 4 + k] * b[j]);
}

TEST_CASE("reduce examples") {
    CHECK(kernels::reduce_all(TD::from({3}, {1, 2, 3}), kernels::ReduceKind::sum)[0] == 6.0);
    CHECK(kernels::reduce_all(TD({4, 5}, 2.5), kernels::ReduceKind::mean)[0] == 2.5);
    TD m = kernels::reduce(TD::from({2, 2}, {1, 5, 4, 2}), 0, kernels::ReduceKind::max, false);
    CHECK(m.shape() == Shape{2});
    CHECK(m[0] == 4.0);
    CHECK(m[1] == 5.0);
    TD x = random_tensor({3, 7, 2}, 4);
    TD mean = kernels::reduce(x, 1, kernels::ReduceKind::mean, true);
    TD sum = kernels::reduce(x, 1, kernels::ReduceKind::sum, true);
    for (std::size_t i = 0; i < mean.size(); ++i) CHECK(std::abs(mean[i] * 7 - sum[i]) <= 1e-12);
}

TEST_CASE("concat examples") {
    TD a = random_tensor({2, 2, 3, 3}, 1), b = random_tensor({2, 3, 3, 3}, 2);
    TD c = kernels::concat(a, b, 1);
    CHECK(c.dim(1) == 5);
    CHECK(kernels::slice(c, 1, 0, 2).bitwise_equal(a));
    CHECK(kernels::slice(c, 1, 2, 5).bitwise_equal(b));
    CHECK(kernels::concat(a, TD({2, 0, 3, 3}), 1).bitwise_equal(a));
    Tape<double> tape;
    CHECK_THROWS_AS(ad::concat_channels(tape.constant(a), tape.constant(TD({2, 3, 4, 3}))), DimensionError);
}

TEST_CASE("cosine_channel examples") {
    TD a = random_tensor({1, 4, 2, 2}, 3, 0.1, 1.0);
    for (double v : kernels::cosine_channel(a, a, 1e-8).data()) CHECK(v == doctest::Approx(1.0));
    TD e0({1, 2, 1, 1}), e1({1, 2, 1, 1});
    e0[0] = 1;
    e1[1] = 1;
    CHECK(kernels::cosine_channel(e0, e1, 1e-8)[0] == 0.0);
    TD p = TD::from({1, 2, 1, 1}, {1, 1}), q = TD::from({1, 2, 1, 1}, {1, 0});
    CHECK(kernels::cosine_channel(p, q, 1e-8)[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));
    CHECK(kernels::cosine_channel(TD({1, 2, 1, 1}), q, 1e-8)[0] == 0.0);
    TD r = random_tensor({2, 5, 3, 3}, 7), s = random_tensor({2, 5, 3, 3}, 8);
    for (double v : kernels::cosine_channel(r, s, 1e-8).data()) CHECK(std::abs(v) <= 1.0);
}

TEST_CASE("backward examples") {
    {
        Tape<double> tape;
        auto x = tape.input(TD::scalar(3.0));
        tape.backward(x);
        CHECK(tape.grad(x)[0] == 1.0);
    }
    {
        Tape<double> tape;
        auto x = tape.input(TD::from({2}, {1, 2}));
        tape.backward(ad::sum_all(ad::mul(x, x)));
        TD g = tape.grad(x);
        CHECK(g[0] == 4.0 / 2.0);
        CHECK(g[1] == 4.0);
    }
    {
        Tape<double> tape;
        auto x = tape.input(TD::from({2}, {1, 2}));
        auto loss = ad::add(ad::sum_all(x), ad::sum_all(ad::mul(ad::detach(x), x)));
        tape.backward(loss);
        TD g = tape.grad(x);
        CHECK(g[0] == 2.0);  // 1 + detach(x)=1
        CHECK(g[1] == 3.0);
    }
    {
        Tape<double> tape;
        auto x = tape.input(TD::from({2}, {1, 2}));
        CHECK_THROWS_AS(tape.backward(ad::scale(x, 2.0)), ContractError);
    }
}

TEST_CASE("backward reports zero gradient for unreachable parameters") {
    ParameterStore<double> store;
    store.add("used", TD::from({2}, {1, 2}), ParamGroup::trunk);
    store.add("unused", TD::from({3}, {1, 2, 3}), ParamGroup::trunk);
    Tape<double> tape(&store);
    auto loss = ad::sum_all(ad::mul(tape.param("used"), tape.param("used")));
    tape.param("unused");
    tape.backward(loss);
    auto g = tape.param_grads();
    CHECK(g[0][0] == 2.0);
    CHECK(g[0][1] == 4.0);
    for (double v : g[1].data()) CHECK(v == 0.0);
}

TEST_CASE("tape records are topologically ordered and visited once") {
    Tape<double> tape;
    auto x = tape.input(random_tensor({3, 3}, 1));
    auto y = ad::relu(ad::matmul(x, x));
    auto z = ad::add(y, ad::sigmoid(x));
    auto loss = ad::sum_all(ad::mul(z, z));
    for (std::size_t id = 0; id < tape.size(); ++id)
        for (int in : tape.inputs(static_cast<int>(id))) CHECK(in < static_cast<int>(id));
    tape.backward(loss);
    // input leaves carry no closure; every op record runs exactly once
    CHECK(tape.backward_visits() == tape.size() - 1);
    CHECK_THROWS_AS(tape.backward(loss), ContractError);
}

TEST_CASE("backward is linear over independent terms") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        TD x0 = random_tensor({4, 4}, seed);
        auto term_a = [](Var<double> x) { return ad::sum_all(ad::sigmoid(ad::matmul(x, x))); };
        auto term_b = [](Var<double> x) { return ad::sum_all(ad::gelu(ad::scale(x, 3.0))); };
        Tape<double> ta, tb, tab;
        auto xa = ta.input(x0), xb = tb.input(x0), xab = tab.input(x0);
        ta.backward(term_a(xa));
        tb.backward(term_b(xb));
        tab.backward(ad::add(term_a(xab), term_b(xab)));
        TD sum = kernels::binary(kernels::BinaryOp::add, ta.grad(xa), tb.grad(xb));
        CHECK(max_abs_diff(sum, tab.grad(xab)) <= 1e-12);
    }
}

TEST_CASE("gradcheck examples") {
    CHECK(check([](Tape<double>&, const std::vector<Var<double>>& v) { return ad::sum_all(v[0]); },
                {TD::scalar(0.7)}) < 1e-9);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto f = [](Tape<double>&, const std::vector<Var<double>>& v) {
            return ad::sum_all(ad::sigmoid(ad::matmul(v[0], v[1])));
        };
        CHECK(check(f, {random_tensor({4, 4}, seed), random_tensor({4, 1}, seed + 100)}, seed) <= 1e-5);
    }
    auto nondet = [n = 0](Tape<double>& t, const std::vector<Var<double>>& v) mutable {
        return ad::sum_all(ad::add_scalar(v[0], double(++n)));
    };
    CHECK_THROWS_AS(check(nondet, {TD::scalar(1.0)}), ContractError);
}

TEST_CASE("every differentiable op passes gradcheck over 10 seeds") {
    using V = std::vector<Var<double>>;
    struct OpCase {
        const char* name;
        std::function<std::vector<TD>(std::uint64_t)> make;
        ScalarFn f;
    };
    // Weighted sums give every output coordinate a distinct sensitivity.
    auto wsum = [](Var<double> y, std::uint64_t s) {
        auto w = y.tape()->constant(random_tensor(y.shape(), s ^ 0xabcdef));
        return ad::sum_all(ad::mul(y, w));
    };
    std::vector<OpCase> cases = {
        {"add_broadcast", [](auto s) { return std::vector<TD>{random_tensor({2, 3, 4}, s), random_tensor({3, 1}, s + 1)}; },
         [&](Tape<double>&, const V& v) { return wsum(ad::add(v[0], v[1]), 1); }},
        {"sub", [](auto s) { return std::vector<TD>{random_tensor({3, 4}, s), random_tensor({4}, s + 1)}; },
         [&](Tape<double>&, const V& v) { return wsum(ad::sub(v[0], v[1]), 2); }},
        {"mul", [](auto s) { return std::vector<TD>{random_tensor({2, 3, 2, 2}, s), random_tensor({2, 3, 1, 1}, s + 1)}; },
         [&](Tape<double>&, const V& v) { return wsum(ad::mul(v[0], v[1]), 3); }},
        {"div", [](auto s) { return std::vector<TD>{random_tensor({3, 4}, s), random_tensor({3, 4}, s + 1, 0.5, 2.0)}; },
         [&](Tape<double>&, const V& v) { return wsum(ad::div(v[0], v[1]), 4); }},
        {"gelu", [](auto s) { return std::vector<TD>{random_tensor({5, 5}, s, -3, 3)}; },
         [&](Tape<double>&, const V& v) { return wsum(ad::gelu(v[0]), 5); }},
        {"sigmoid", [](auto s) { return std::vector<TD>{random_tensor({5, 5}, s, -4, 4)}; },
         [&](Tape<double>&, const V& v) { return wsum(ad::sigmoid(v[0]), 6); }},
        {"log_pow", [](auto s) { return std::vector<TD>{random_tensor({5}, s, 0.5, 2.0)}; },
         [&](Tape<double>&, const V& v) { return wsum(ad::add(ad::log(v[0]), ad::pow(v[0], 2.5)), 7); }},
        {"relu", [](auto s) { return std::vector<TD>{random_tensor({6, 6}, s)}; },
         [&](Tape<double>&, const V& v) { return wsum(ad::relu(v[0]), 8); }},
        {"matmul_batched", [](auto s) { return std::vector<TD>{random_tensor({2, 3, 4}, s), random_tensor({2, 4, 5}, s + 1)}; },
         [&](Tape<double>&, const V& v) { return wsum(ad::matmul(v[0], v[1]), 9); }},
        {"matmul_nt", [](auto s) { return std::vector<TD>{random_tensor({2, 3, 4}, s), random_tensor({2, 5, 4}, s + 1)}; },
         [&](Tape<double>&, const V& v) { return wsum(ad::matmul_nt(v[0], v[1]), 10); }},
        {"linear", [](auto s) {
             return std::vector<TD>{random_tensor({2, 3, 4}, s), random_tensor({5, 4}, s + 1), random_tensor({5}, s + 2)};
         },
         [&](Tape<double>&, const V& v) { return wsum(ad::linear(v[0], v[1], &v[2]), 11); }},
        {"conv2d", [](auto s) {
             return std::vector<TD>{random_tensor({2, 2, 5, 5}, s), random_tensor({3, 2, 3, 3}, s + 1), random_tensor({3}, s + 2)};
         },
         [&](Tape<double>&, const V& v) { return wsum(ad::conv2d(v[0], v[1], &v[2], {2, 1, 1}), 12); }},
        {"conv2d_depthwise", [](auto s) { return std::vector<TD>{random_tensor({1, 3, 4, 4}, s), random_tensor({3, 1, 3, 3}, s + 1)}; },
         [&](Tape<double>&, const V& v) { return wsum(ad::conv2d(v[0], v[1], static_cast<const Var<double>*>(nullptr), {1, 1, 3}), 13); }},
        {"resize_bilinear", [](auto s) { return std::vector<TD>{random_tensor({1, 2, 3, 5}, s)}; },
         [&](Tape<double>&, const V& v) { return wsum(ad::resize_bilinear(v[0], 7, 4), 14); }},
        {"softmax", [](auto s) { return std::vector<TD>{random_tensor({3, 4, 2}, s, -1, 1)}; },
         [&](Tape<double>&, const V& v) { return wsum(ad::softmax(v[0], 1), 15); }},
        {"layernorm", [](auto s) {
             return std::vector<TD>{random_tensor({4, 6}, s, -2, 2), random_tensor({6}, s + 1), random_tensor({6}, s + 2)};
         },
         [&](Tape<double>&, const V& v) { return wsum(ad::layernorm(v[0], v[1], v[2], 1e-5), 16); }},
        {"reductions", [](auto s) { return std::vector<TD>{random_tensor({3, 4, 5}, s)}; },
         [&](Tape<double>&, const V& v) {
             auto a = wsum(ad::sum(v[0], 1, true), 17);
             auto b = wsum(ad::mean(v[0], 2, false), 18);
             auto c = wsum(ad::max(v[0], 0, false), 19);
             return ad::add(ad::add(a, b), ad::add(c, ad::mean_all(v[0])));
         }},
        {"concat_slice_permute", [](auto s) { return std::vector<TD>{random_tensor({1, 2, 3, 3}, s), random_tensor({1, 3, 3, 3}, s + 1)}; },
         [&](Tape<double>&, const V& v) {
             auto c = ad::concat_channels(v[0], v[1]);
             auto t = ad::to_tokens(ad::slice(c, 1, 1, 4));
             return wsum(ad::from_tokens(ad::permute(ad::permute(t, {0, 2, 1}), {0, 2, 1}), 3, 3), 20);
         }},
        {"cosine_channel", [](auto s) { return std::vector<TD>{random_tensor({2, 4, 2, 3}, s), random_tensor({2, 4, 2, 3}, s + 1)}; },
         [&](Tape<double>&, const V& v) { return wsum(ad::cosine_channel(v[0], v[1], 1e-8), 21); }},
    };
    for (const auto& c : cases) {
        double worst = 0;
        std::string where;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            GradcheckOptions o;
            o.seed = seed;
            auto r = gradcheck(c.f, c.make(seed * 31 + 7), nullptr, o);
            if (r.max_rel_error > worst) where = "seed " + std::to_string(seed) + " " + r.worst;
            worst = std::max(worst, r.max_rel_error);
        }
        INFO(std::string(c.name) << " worst relative error " << worst << " at " << where);
        CHECK(worst <= 1e-5);
    }
}

TEST_CASE("adamw examples") {
    AdamWConfig hp;
    hp.lr = 1e-3;
    hp.weight_decay = 0.0;
    {
        ParameterStore<double> p;
        p.add("w", random_tensor({3, 3}, 1), ParamGroup::trunk);
        TD before = p[0].value;
        auto st = AdamWState<double>::init(p, hp);
        for (int i = 0; i < 5; ++i) adamw_step(p, {TD({3, 3})}, st);
        CHECK(p[0].value.bitwise_equal(before));
        CHECK(st.step_count == 5);
    }
    {
        ParameterStore<double> p;
        p.add("w", TD::from({3}, {1, 2, 3}), ParamGroup::trunk);
        AdamWConfig z = hp;
        z.beta1 = 0.0;
        z.beta2 = 0.0;
        auto st = AdamWState<double>::init(p, z);
        TD g = TD::from({3}, {0.5, -2.0, 1e-3});
        adamw_step(p, {g}, st);
        for (int i = 0; i < 3; ++i) {
            const double expect = (i + 1) - z.lr * g[i] / (std::abs(g[i]) + z.eps);
            CHECK(p[0].value[i] == doctest::Approx(expect).epsilon(1e-14));
        }
    }
    {
        ParameterStore<double> p;
        p.add("w", TD::from({2}, {4, -8}), ParamGroup::trunk);
        AdamWConfig d = hp;
        d.weight_decay = 0.1;
        auto st = AdamWState<double>::init(p, d);
        adamw_step(p, {TD({2})}, st);
        CHECK(p[0].value[0] == doctest::Approx(4 * (1 - d.lr * 0.1)).epsilon(1e-15));
        CHECK(p[0].value[1] == doctest::Approx(-8 * (1 - d.lr * 0.1)).epsilon(1e-15));
    }
    {
        ParameterStore<double> p;
        p.add("w", TD({2, 2}), ParamGroup::trunk);
        auto st = AdamWState<double>::init(p, hp);
        CHECK_THROWS_AS(adamw_step(p, {TD({4})}, st), DimensionError);
    }
}

TEST_CASE("ops stay finite on valid inputs") {
    Tape<float> tape;
    auto x = tape.input(random_tensor<float>({2, 3, 8, 8}, 3, -50, 50));
    auto y = ad::softmax(ad::sigmoid(ad::gelu(x)), 1);
    auto z = ad::resize_bilinear(y, 5, 13);
    CHECK(z.value().all_finite());
    auto l = ad::mean_all(ad::bce_with_logits(x, Tensor<float>(x.shape(), 1.0f)));
    CHECK(l.value().all_finite());
    tape.backward(l);
    CHECK(tape.grad(x).all_finite());
}
