#include <cmath>

#include "doctest.h"
#include "smtc/decoder.hpp"
#include "smtc/gradcheck.hpp"
#include "test_util.hpp"

using namespace smtc;
using smtc::testing::max_abs_diff;
using smtc::testing::random_tensor;
using TD = Tensor<double>;

namespace {

struct CbamFixture {
    ParameterStore<double> store;
    CbamIdx idx;
    explicit CbamFixture(std::int64_t c = 16, int ratio = 8) : idx(add_cbam(store, Initializer(5), "cb", c, ratio, 7)) {}
};

Pyramid<double> pyramid(Tape<double>& t, const std::array<int, 4>& ch, std::int64_t h, std::int64_t w,
                        std::uint64_t seed) {
    Pyramid<double> p;
    for (int i = 0; i < 4; ++i) {
        const std::int64_t s = std::int64_t{4} << i;
        p[i] = t.input(random_tensor({1, ch[i], h / s, w / s}, seed + i));
    }
    return p;
}

} // namespace

TEST_CASE("cbam examples") {
    CbamFixture f;
    Tape<double> t(&f.store);
    TD x = random_tensor({2, 16, 6, 5}, 1);

    auto zero = cbam(t, f.idx, t.input(TD({2, 16, 6, 5})));
    for (double v : zero.value().data()) CHECK(v == 0.0);

    auto y = cbam(t, f.idx, t.input(x)).value();
    CHECK(y.shape() == x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i]) <= std::abs(x[i]));

    f.store[f.idx.fc2.b].value.fill(60.0);
    f.store[f.idx.spatial.b].value.fill(60.0);
    Tape<double> t2(&f.store);
    CHECK(max_abs_diff(cbam(t2, f.idx, t2.input(x)).value(), x) < 1e-12);

    ParameterStore<double> s;
    CHECK_THROWS_AS(add_cbam(s, Initializer(1), "bad", 12, 8, 7), ConfigError);
    CHECK_THROWS_AS(add_cbam(s, Initializer(1), "bad", 16, 8, 6), ConfigError);
}

TEST_CASE("decode_level examples") {
    ParameterStore<double> s;
    const std::array<int, 4> ch{4, 8, 16, 32};
    DecoderConfig cfg;
    cfg.width = 16;
    Decoder d = Decoder::build(s, ch, cfg, Initializer(2));
    Tape<double> t(&s);

    auto y4 = d.decode_level(t, 3, t.input(random_tensor({1, 32, 4, 4}, 1)), nullptr);
    CHECK(y4.shape() == Shape{1, 16, 8, 8});

    auto z = d.decode_level(t, 3, t.input(TD({1, 32, 4, 4})), nullptr);
    for (double v : z.value().data()) CHECK(v == 0.0);

    CHECK(s[d.levels()[2].conv.w].value.shape() == Shape{16, 16 + 16, 3, 3});
    CHECK(s[d.levels()[3].conv.w].value.shape() == Shape{16, 32, 3, 3});

    auto y3 = d.decode_level(t, 2, t.input(random_tensor({1, 16, 8, 8}, 2)), &y4);
    CHECK(y3.shape() == Shape{1, 16, 16, 16});

    auto bad = t.input(random_tensor({1, 16, 4, 4}, 3));
    CHECK_THROWS_AS(d.decode_level(t, 2, bad, &y4), DimensionError);
    CHECK_THROWS_AS(d.decode_level(t, 2, y3, nullptr), DimensionError);
    CHECK_THROWS_AS(d.decode_level(t, 3, y4, &y4), DimensionError);
}

TEST_CASE("decode_level is translation consistent on interior pixels") {
    ParameterStore<double> s;
    DecoderConfig cfg;
    cfg.width = 8;
    cfg.cbam_ratio = 4;
    Decoder d = Decoder::build(s, {4, 4, 4, 6}, cfg, Initializer(4));
    const std::int64_t n = 28;
    // Constant field with a localized pattern, placed at two offsets one pixel apart.
    auto field = [&](std::int64_t dx) {
        TD x({1, 6, n, n}, 0.3);
        TD patch = random_tensor({6, 3, 3}, 9);
        for (std::int64_t c = 0; c < 6; ++c)
            for (std::int64_t y = 0; y < 3; ++y)
                for (std::int64_t xx = 0; xx < 3; ++xx) x.at(0, c, 12 + y, 12 + xx + dx) += patch[(c * 3 + y) * 3 + xx];
        return x;
    };
    Tape<double> t(&s);
    auto a = d.decode_level(t, 3, t.input(field(0)), nullptr).value();
    auto b = d.decode_level(t, 3, t.input(field(1)), nullptr).value();
    // Receptive field: 3x3 conv + 7x7 spatial gate + bilinear neighbour, kept clear of both borders.
    double worst = 0;
    for (std::int64_t c = 0; c < 8; ++c)
        for (std::int64_t y = 16; y < 2 * n - 16; ++y)
            for (std::int64_t x = 16; x < 2 * n - 18; ++x)
                worst = std::max(worst, std::abs(a.at(0, c, y, x) - b.at(0, c, y, x + 2)));
    CHECK(worst < 1e-12);
}

TEST_CASE("decode_full examples") {
    ParameterStore<double> s;
    const std::array<int, 4> ch{4, 8, 16, 32};
    DecoderConfig cfg;
    cfg.width = 8;
    cfg.cbam_ratio = 4;
    Decoder d = Decoder::build(s, ch, cfg, Initializer(6));
    Tape<double> t(&s);
    auto pi = pyramid(t, ch, 128, 128, 10), po = pyramid(t, ch, 128, 128, 20);

    auto plain = d.decode_full(t, pi, po, nullptr);
    CHECK(plain.prob.shape() == Shape{1, 1, 128, 128});
    CHECK(plain.logits.shape() == Shape{1, 1, 128, 128});
    for (double v : plain.prob.value().data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    auto f4 = ad::add(pi[3], po[3]);
    CHECK(d.decode_full(t, pi, po, &f4).prob.value().bitwise_equal(plain.prob.value()));
    CHECK(d.decode_full(t, pi, po, nullptr).logits.value().bitwise_equal(plain.logits.value()));
}

TEST_CASE("two-round prediction contracts") {
    for (bool enabled : {false, true}) {
        NetworkConfig cfg = NetworkConfig::tiny();
        cfg.isrm.enabled = enabled;
        ParameterStore<double> s;
        Network net = Network::build(s, cfg, 13);
        Tape<double> t(&s);
        auto out = net.predict_two_round(t, t.input(random_tensor({2, 3, 64, 64}, 1, 0, 1)),
                                         t.input(random_tensor({2, 3, 64, 64}, 2, 0, 1)));
        CHECK(out.round1.prob.shape() == Shape{2, 1, 64, 64});
        CHECK(out.round2.prob.shape() == Shape{2, 1, 64, 64});
        for (const auto* r : {&out.round1, &out.round2})
            for (double v : r->prob.value().data()) CHECK((v >= 0.0 && v <= 1.0));
        if (!enabled) {
            CHECK(out.round2.prob.value().bitwise_equal(out.round1.prob.value()));
            CHECK(out.round2.logits.value().bitwise_equal(out.round1.logits.value()));
        } else {
            CHECK(!out.round2.prob.value().bitwise_equal(out.round1.prob.value()));
            auto forced = net.decoder().decode_full(t, out.pyr_i, out.pyr_o, &out.f4_fused);
            CHECK(forced.prob.value().bitwise_equal(out.round1.prob.value()));
        }
    }
}

TEST_CASE("output resolution equals input resolution") {
    NetworkConfig cfg = NetworkConfig::tiny();
    ParameterStore<double> s;
    Network net = Network::build(s, cfg, 1);
    for (auto [h, w] : {std::pair<std::int64_t, std::int64_t>{32, 32}, {32, 64}, {96, 64}, {128, 128}}) {
        Tape<double> t(&s);
        auto out = net.predict_two_round(t, t.input(random_tensor({1, 3, h, w}, 3)), t.input(random_tensor({1, 3, h, w}, 4)));
        CHECK(out.pyr_i[0].shape() == Shape{1, 4, h / 4, w / 4});
        CHECK(out.pyr_i[3].shape() == Shape{1, 32, h / 32, w / 32});
        CHECK(out.round1.prob.shape() == Shape{1, 1, h, w});
        CHECK(out.round2.prob.shape() == Shape{1, 1, h, w});
    }
    Tape<double> t(&s);
    CHECK_THROWS_AS(net.predict_two_round(t, t.input(TD({1, 3, 32, 32})), t.input(TD({1, 3, 32, 64}))),
                    DimensionError);
    CHECK_THROWS_AS(net.predict_two_round(t, t.input(TD({1, 3, 48, 32})), t.input(TD({1, 3, 48, 32}))),
                    DimensionError);
}

TEST_CASE("probabilities equal sigmoid of logits in single precision") {
    ParameterStore<float> s;
    Network net = Network::build(s, NetworkConfig::tiny(), 8);
    Tape<float> t(&s);
    auto out = net.predict_two_round(t, t.input(random_tensor<float>({1, 3, 64, 64}, 5, 0, 1)),
                                     t.input(random_tensor<float>({1, 3, 64, 64}, 6, 0, 1)));
    double worst = 0;
    for (const auto* r : {&out.round1, &out.round2})
        for (std::size_t i = 0; i < r->prob.value().size(); ++i) {
            const double l = r->logits.value()[i];
            worst = std::max(worst, std::abs(r->prob.value()[i] - 1.0 / (1.0 + std::exp(-l))));
        }
    CHECK(worst <= 1e-6);
}

TEST_CASE("predict_two_round is deterministic") {
    ParameterStore<double> s;
    Network net = Network::build(s, NetworkConfig::tiny(), 2);
    TD img = random_tensor({1, 3, 64, 32}, 7), flo = random_tensor({1, 3, 64, 32}, 8);
    Tape<double> a(&s), b(&s);
    auto oa = net.predict_two_round(a, a.input(img), a.input(flo));
    auto ob = net.predict_two_round(b, b.input(img), b.input(flo));
    CHECK(oa.round2.prob.value().bitwise_equal(ob.round2.prob.value()));
    CHECK(oa.round1.logits.value().bitwise_equal(ob.round1.logits.value()));
}

TEST_CASE("gradcheck through cbam") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        CbamFixture f(8, 4);
        randomize_for_gradcheck(f.store, seed);
        TD w = random_tensor({1, 8, 5, 4}, seed + 30);
        ScalarFn fn = [&](auto& t, const auto& v) { return ad::sum_all(ad::mul(cbam(t, f.idx, v[0]), lift(t, w))); };
        GradcheckOptions o;
        o.seed = seed;
        o.max_coords = 12;
        auto r = gradcheck(fn, {random_tensor({1, 8, 5, 4}, seed)}, &f.store, o);
        INFO("seed " << seed << " worst " << r.worst);
        CHECK(r.max_rel_error <= 1e-4);
    }
}

TEST_CASE("gradcheck through both decoding rounds") {
    ParameterStore<double> s;
    Network net = Network::build(s, NetworkConfig::tiny(), 17);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        randomize_for_gradcheck(s, seed);
        TD w1 = random_tensor({1, 1, 32, 32}, seed + 40), w2 = random_tensor({1, 1, 32, 32}, seed + 41);
        ScalarFn fn = [&](auto& t, const auto& v) {
            auto out = net.predict_two_round(t, v[0], v[1]);
            return ad::add(ad::sum_all(ad::mul(out.round1.prob, lift(t, w1))),
                           ad::sum_all(ad::mul(out.round2.prob, lift(t, w2))));
        };
        GradcheckOptions o;
        o.seed = seed;
        o.max_coords = 2;
        // Deep-level gradients sit ~1e-9 below |f|; 1e-6 steps hit the extended-precision noise floor.
        o.h = 1e-4;
        auto r = gradcheck(fn, {random_tensor({1, 3, 32, 32}, seed, 0, 1), random_tensor({1, 3, 32, 32}, seed + 1, 0, 1)},
                           &s, o);
        INFO("seed " << seed << " worst " << r.worst);
        CHECK(r.max_rel_error <= 1e-4);
    }
}
