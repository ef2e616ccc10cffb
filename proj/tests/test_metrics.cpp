#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "metric_oracles.hpp"
#include "smtc/metrics.hpp"
#include "test_util.hpp"

using namespace smtc;
using namespace smtc::metrics;
using namespace smtc::testing;

TEST_CASE("region_similarity examples") {
    Map g = disc(16, 8, 8, 4);
    CHECK(region_similarity(g, g) == 1.0);
    CHECK(region_similarity(disc(16, 3, 3, 2), disc(16, 12, 12, 2)) == 0.0);
    Map gt({4, 4}), pr({4, 4});
    for (int i : {0, 1, 4, 5}) gt[i] = 1;
    pr[0] = pr[1] = 1;
    CHECK(region_similarity(pr, gt) == 0.5);
    CHECK(region_similarity(Map({4, 4}), Map({4, 4})) == 1.0);
    CHECK(region_similarity(Map({4, 4}), gt) == 0.0);
    Map soft = gt;
    soft[2] = 0.5;
    CHECK_THROWS_AS(region_similarity(soft, gt), ContractError);
}

TEST_CASE("J and MAE match brute-force counting on random pairs") {
    for (std::uint64_t s = 0; s < 100; ++s) {
        Map a = mask(32, 32, s, 0.3 + 0.004 * s), b = mask(32, 32, s + 1000, 0.5);
        CHECK(region_similarity(a, b) == oracle::jaccard(a, b));
        CHECK(region_similarity(a, b) == region_similarity(b, a));
        Map p = random_tensor({32, 32}, s + 2000, 0, 1);
        CHECK(mae(p, b) == oracle::mean_abs(p, b));
        CHECK(mae(p, b) == mae(b, p));
    }
}

TEST_CASE("boundary_f_measure examples") {
    Map g = disc(32, 16, 16, 7);
    CHECK(boundary_f_measure(g, g, 1) == 1.0);

    Map line({32, 32}), shifted({32, 32});
    for (int x = 4; x < 28; ++x) {
        line[10 * 32 + x] = 1;
        shifted[14 * 32 + x] = 1;
    }
    CHECK(boundary_f_measure(shifted, line, 3) == 0.0);
    CHECK(boundary_f_measure(shifted, line, 4) == 1.0);

    // gt dilated by one pixel (4-neighbourhood)
    Map dil = g;
    for (std::int64_t y = 0; y < 32; ++y)
        for (std::int64_t x = 0; x < 32; ++x)
            if (g[y * 32 + x] == 1)
                for (auto [dy, dx] : {std::pair{-1, 0}, {1, 0}, {0, -1}, {0, 1}}) dil[(y + dy) * 32 + x + dx] = 1;
    CHECK(boundary_f_measure(dil, g, 1) == 1.0);
    CHECK(boundary_f_measure(dil, g, 0) == 0.0);

    CHECK(boundary_f_measure(Map({8, 8}), Map({8, 8}), 1) == 1.0);
    CHECK(boundary_f_measure(Map({8, 8}), disc(8, 4, 4, 2), 1) == 0.0);
    CHECK(default_tol_radius(128, 128) == 2);
    CHECK(default_tol_radius(480, 854) == 8);
}

TEST_CASE("boundary_f_measure matches the literal oracle") {
    for (std::uint64_t s = 0; s < 40; ++s) {
        Map a = blobs(32, 32, s), b = blobs(32, 32, s + 500);
        for (int r : {0, 1, 2, 3}) {
            const double f = boundary_f_measure(a, b, r);
            CHECK(std::abs(f - oracle::boundary_f(a, b, r)) <= 1e-9);
            CHECK(f == boundary_f_measure(b, a, r));
            CHECK(f >= 0.0);
            CHECK(f <= 1.0);
        }
        Map m = mask(32, 32, s + 77, 0.4);
        CHECK(std::abs(boundary_f_measure(m, b, 2) - oracle::boundary_f(m, b, 2)) <= 1e-9);
    }
}

TEST_CASE("mae examples") {
    Map g = disc(16, 8, 8, 5), inv(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) inv[i] = 1 - g[i];
    CHECK(mae(g, g) == 0.0);
    CHECK(mae(inv, g) == 1.0);
    CHECK(mae(Map(g.shape(), 0.5), g) == 0.5);
}

TEST_CASE("max_f_measure examples") {
    Map g = disc(32, 16, 16, 8);
    CHECK(max_f_measure(g, g) == doctest::Approx(1.0).epsilon(1e-15));

    Map u = random_tensor({32, 32}, 3, 0, 1), ones({32, 32}, 1.0);
    const double at0 = oracle::max_f(u, ones, 0.3, 1);
    CHECK(at0 == 1.0);
    CHECK(max_f_measure(u, ones) == at0);

    for (std::uint64_t s = 0; s < 30; ++s) {
        Map gt = blobs(32, 32, s), p = noisy(gt, s + 9), sharper(p.shape());
        for (std::size_t i = 0; i < p.size(); ++i) sharper[i] = p[i] + 0.4 * (gt[i] - p[i]);
        CHECK(max_f_measure(sharper, gt) >= max_f_measure(p, gt));
    }
}

TEST_CASE("max_f and e_measure match the literal sweep oracles") {
    for (std::uint64_t s = 0; s < 30; ++s) {
        Map gt = blobs(32, 32, s), p = noisy(gt, s + 40);
        CHECK(std::abs(max_f_measure(p, gt) - oracle::max_f(p, gt, 0.3, 256)) <= 1e-9);
        CHECK(std::abs(e_measure(p, gt) - oracle::e_max(p, gt, 256)) <= 1e-9);
        // quantized predictions hit threshold values exactly
        Map q = p;
        for (auto& v : q.data()) v = std::round(v * 256) / 256;
        CHECK(std::abs(max_f_measure(q, gt) - oracle::max_f(q, gt, 0.3, 256)) <= 1e-9);
        CHECK(std::abs(e_measure(q, gt) - oracle::e_max(q, gt, 256)) <= 1e-9);
    }
    Map empty({16, 16});
    Map p = random_tensor({16, 16}, 5, 0, 1);
    CHECK(std::abs(e_measure(p, empty) - oracle::e_max(p, empty, 256)) <= 1e-9);
    CHECK(std::abs(e_measure(p, Map({16, 16}, 1.0)) - oracle::e_max(p, Map({16, 16}, 1.0), 256)) <= 1e-9);
}

TEST_CASE("e_measure examples") {
    Map g = disc(32, 16, 16, 9);
    CHECK(e_measure(g, g) == doctest::Approx(1.0).epsilon(1e-12));
    Map half({16, 16}), comp({16, 16});
    for (std::int64_t i = 0; i < 256; ++i) {
        half[i] = i < 128 ? 1 : 0;
        comp[i] = 1 - half[i];
    }
    CHECK(e_measure(comp, half) <= 0.25 + 1e-12);
    CHECK(e_measure(Map({8, 8}), Map({8, 8})) == 1.0);
    for (std::uint64_t s = 0; s < 100; ++s) {
        const double e = e_measure(random_tensor({16, 16}, s, 0, 1), mask(16, 16, s + 300, 0.01 * s));
        CHECK(e >= 0.0);
        CHECK(e <= 1.0);
    }
}

TEST_CASE("s_measure examples and oracle") {
    Map g = blobs(32, 32, 4);
    CHECK(std::abs(s_measure(g, g) - 1.0) <= 1e-6);
    double m = 0;
    for (double v : g.data()) m += v / g.size();
    CHECK(s_measure(Map(g.shape(), m), g) < s_measure(g, g));
    for (std::uint64_t s = 0; s < 100; ++s) {
        Map gt = s % 10 == 0 ? Map({32, 32}) : blobs(32, 32, s + 7);
        Map p = s % 3 == 0 ? random_tensor({32, 32}, s, 0, 1) : noisy(gt, s);
        const double v = s_measure(p, gt);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(std::abs(v - oracle::s_measure(p, gt, 0.5)) <= 1e-9);
    }
    CHECK(std::abs(s_measure(Map({8, 8}, 0.25), Map({8, 8}, 1.0)) - 0.25) <= 1e-15);
}

TEST_CASE("all metrics are 1 on identical nonempty masks") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        Map g = blobs(32, 32, s + 60);
        FrameMetrics f = evaluate_frame(g, g);
        CHECK(f.j == 1.0);
        CHECK(f.f == 1.0);
        CHECK(f.mae == 0.0);
        CHECK(std::abs(f.f_max - 1.0) <= 1e-12);
        CHECK(std::abs(f.e_max - 1.0) <= 1e-12);
        CHECK(std::abs(f.s_measure - 1.0) <= 1e-6);
    }
}

TEST_CASE("binarization threshold monotonicity") {
    Map p = random_tensor({16, 16}, 2, 0, 1);
    double prev = 1e9;
    for (int k = 0; k <= 20; ++k) {
        Map b = binarize(p, k / 20.0);
        const double c = std::accumulate(b.data().begin(), b.data().end(), 0.0);
        CHECK(c <= prev);
        prev = c;
    }
}

TEST_CASE("evaluate_sequence examples") {
    std::vector<Map> gts, perfect, bg;
    for (std::uint64_t s = 0; s < 5; ++s) {
        gts.push_back(blobs(32, 32, s));
        perfect.push_back(gts.back());
        bg.push_back(Map({32, 32}));
    }
    MetricReport r = evaluate_sequence(perfect, gts, {}, "seq");
    CHECK(r.j_mean == 1.0);
    CHECK(r.f_mean == 1.0);
    CHECK(r.jf_mean == 1.0);
    CHECK(r.mae == 0.0);
    CHECK(r.sequences.size() == 1);
    CHECK(r.sequences[0].frames.size() == 5);

    MetricReport z = evaluate_sequence(bg, gts);
    CHECK(z.j_mean == 0.0);
    CHECK(z.f_mean == 0.0);

    std::vector<Map> preds;
    for (std::uint64_t s = 0; s < 5; ++s) preds.push_back(noisy(gts[s], s + 3));
    MetricReport n = evaluate_sequence(preds, gts);
    CHECK(n.jf_mean == (n.j_mean + n.f_mean) / 2.0);

    std::vector<Map> pp(preds.rbegin(), preds.rend()), gg(gts.rbegin(), gts.rend());
    MetricReport rev = evaluate_sequence(pp, gg);
    CHECK(std::abs(rev.j_mean - n.j_mean) <= 1e-12);
    CHECK(std::abs(rev.f_mean - n.f_mean) <= 1e-12);
    CHECK(std::abs(rev.mae - n.mae) <= 1e-12);
    CHECK(std::abs(rev.s_measure - n.s_measure) <= 1e-12);

    gts.pop_back();
    CHECK_THROWS_AS(evaluate_sequence(preds, gts), ContractError);

    MetricReport c = combine({r, z});
    CHECK(c.j_mean == 0.5);
    CHECK(c.sequences.size() == 2);
    CHECK(c.jf_mean == (c.j_mean + c.f_mean) / 2.0);
}

TEST_CASE("multi-object labels merge into one entity") {
    Map labels({16, 16});
    for (int i = 0; i < 20; ++i) labels[i] = 1;
    for (int i = 100; i < 130; ++i) labels[i] = 2;
    Map merged = merge_objects(labels);
    FrameMetrics f = evaluate_frame(merged, labels);
    CHECK(f.j == 1.0);
    CHECK(f.f == 1.0);
}
