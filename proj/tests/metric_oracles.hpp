#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "smtc/metrics.hpp"
#include "test_util.hpp"

// Shared by the metric tests and the acceptance run.
namespace smtc::testing {
namespace {

using metrics::Map;

// Literal oracles: straightforward per-pixel transcriptions of each definition.
namespace oracle {

using Grid = std::vector<std::vector<double>>;

Grid grid(const Map& m) {
    Grid g(m.dim(0), std::vector<double>(m.dim(1)));
    for (std::int64_t y = 0; y < m.dim(0); ++y)
        for (std::int64_t x = 0; x < m.dim(1); ++x) g[y][x] = m[y * m.dim(1) + x];
    return g;
}

double jaccard(const Map& p, const Map& g) {
    auto a = grid(p), b = grid(g);
    int inter = 0, uni = 0;
    for (std::size_t y = 0; y < a.size(); ++y)
        for (std::size_t x = 0; x < a[y].size(); ++x) {
            if (a[y][x] == 1 && b[y][x] == 1) ++inter;
            if (a[y][x] == 1 || b[y][x] == 1) ++uni;
        }
    return uni == 0 ? 1.0 : double(inter) / double(uni);
}

double mean_abs(const Map& p, const Map& g) {
    auto a = grid(p), b = grid(g);
    double s = 0;
    for (std::size_t y = 0; y < a.size(); ++y)
        for (std::size_t x = 0; x < a[y].size(); ++x) s += std::fabs(a[y][x] - b[y][x]);
    return s / double(p.size());
}

// Boundary = mask minus its 4-neighbourhood erosion (out-of-image neighbours ignored).
Grid boundary(const Grid& m) {
    const int h = int(m.size()), w = int(m[0].size());
    Grid eroded(h, std::vector<double>(w, 0.0)), b = eroded;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            bool keep = m[y][x] == 1;
            const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
            for (int k = 0; k < 4; ++k) {
                const int yy = y + dy[k], xx = x + dx[k];
                if (yy >= 0 && yy < h && xx >= 0 && xx < w && m[yy][xx] == 0) keep = false;
            }
            eroded[y][x] = keep ? 1 : 0;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) b[y][x] = (m[y][x] == 1 && eroded[y][x] == 0) ? 1 : 0;
    return b;
}

double boundary_f(const Map& p, const Map& g, int r) {
    auto bp = boundary(grid(p)), bg = boundary(grid(g));
    std::vector<std::pair<int, int>> P, G;
    for (int y = 0; y < int(bp.size()); ++y)
        for (int x = 0; x < int(bp[0].size()); ++x) {
            if (bp[y][x] == 1) P.emplace_back(y, x);
            if (bg[y][x] == 1) G.emplace_back(y, x);
        }
    if (P.empty() && G.empty()) return 1.0;
    if (P.empty() || G.empty()) return 0.0;
    auto matched = [&](const std::vector<std::pair<int, int>>& from, const std::vector<std::pair<int, int>>& to) {
        int m = 0;
        for (auto [y, x] : from) {
            bool hit = false;
            for (auto [yy, xx] : to)
                if ((y - yy) * (y - yy) + (x - xx) * (x - xx) <= r * r) hit = true;
            m += hit;
        }
        return double(m) / double(from.size());
    };
    const double prec = matched(P, G), rec = matched(G, P);
    return prec + rec == 0 ? 0.0 : 2 * prec * rec / (prec + rec);
}

double max_f(const Map& p, const Map& g, double b2, int T) {
    double best = 0;
    for (int k = 0; k < T; ++k) {
        const double t = double(k) / double(T);
        double tp = 0, pp = 0, gp = 0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const bool on = p[i] >= t;
            pp += on;
            gp += g[i];
            tp += on && g[i] == 1;
        }
        if (pp == 0 || gp == 0) continue;
        const double prec = tp / pp, rec = tp / gp;
        if (prec + rec == 0) continue;
        best = std::max(best, (1 + b2) * prec * rec / (b2 * prec + rec));
    }
    return best;
}

double e_max(const Map& p, const Map& g, int T) {
    const double eps = std::numeric_limits<double>::epsilon();
    const double n = double(p.size());
    double best = 0;
    for (int k = 0; k < T; ++k) {
        const double t = double(k) / double(T);
        std::vector<double> fm(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) fm[i] = p[i] >= t ? 1.0 : 0.0;
        const double sum_g = std::accumulate(g.data().begin(), g.data().end(), 0.0);
        std::vector<double> enh(p.size());
        if (sum_g == 0) {
            for (std::size_t i = 0; i < p.size(); ++i) enh[i] = 1.0 - fm[i];
        } else if (sum_g == n) {
            enh = fm;
        } else {
            const double mf = std::accumulate(fm.begin(), fm.end(), 0.0) / n, mg = sum_g / n;
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double a = fm[i] - mf, b = g[i] - mg;
                const double align = 2 * a * b / (a * a + b * b + eps);
                enh[i] = (align + 1) * (align + 1) / 4;
            }
        }
        best = std::max(best, std::accumulate(enh.begin(), enh.end(), 0.0) / n);
    }
    return best;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / double(v.size() - 1));
}

double object(const std::vector<double>& v) {
    const double eps = std::numeric_limits<double>::epsilon();
    const double x = mean(v);
    return 2.0 * x / (x * x + 1.0 + sample_std(v) + eps);
}

double ssim(const std::vector<double>& p, const std::vector<double>& g) {
    const double eps = std::numeric_limits<double>::epsilon();
    const double N = double(p.size());
    const double x = mean(p), y = mean(g);
    double sx = 0, sy = 0, sxy = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        sx += (p[i] - x) * (p[i] - x);
        sy += (g[i] - y) * (g[i] - y);
        sxy += (p[i] - x) * (g[i] - y);
    }
    sx /= N - 1 + eps;
    sy /= N - 1 + eps;
    sxy /= N - 1 + eps;
    const double a = 4 * x * y * sxy, b = (x * x + y * y) * (sx + sy);
    if (a != 0) return a / (b + eps);
    return b == 0 ? 1.0 : 0.0;
}

double s_measure(const Map& pm, const Map& gm, double alpha) {
    auto p = grid(pm), g = grid(gm);
    const int h = int(p.size()), w = int(p[0].size());
    std::vector<double> all_p, all_g;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            all_p.push_back(p[y][x]);
            all_g.push_back(g[y][x]);
        }
    const double gy = mean(all_g);
    double q;
    if (gy == 0) {
        q = 1.0 - mean(all_p);
    } else if (gy == 1) {
        q = mean(all_p);
    } else {
        std::vector<double> fg, bg;
        for (std::size_t i = 0; i < all_p.size(); ++i) {
            if (all_g[i] == 1)
                fg.push_back(all_p[i]);
            else
                bg.push_back(1.0 - all_p[i]);
        }
        const double so = gy * object(fg) + (1 - gy) * object(bg);
        double total = 0, sx = 0, sy = 0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (g[y][x] == 1) {
                    total += 1;
                    sx += x + 1;
                    sy += y + 1;
                }
        const int X = int(std::round(sx / total)), Y = int(std::round(sy / total));
        double sr = 0;
        const int r0[4] = {0, 0, Y, Y}, r1[4] = {Y, Y, h, h}, c0[4] = {0, X, 0, X}, c1[4] = {X, w, X, w};
        for (int k = 0; k < 4; ++k) {
            std::vector<double> qp, qg;
            for (int y = r0[k]; y < r1[k]; ++y)
                for (int x = c0[k]; x < c1[k]; ++x) {
                    qp.push_back(p[y][x]);
                    qg.push_back(g[y][x]);
                }
            if (qp.empty()) continue;
            sr += double(qp.size()) / double(h * w) * ssim(qp, qg);
        }
        q = alpha * so + (1 - alpha) * sr;
    }
    return std::min(1.0, std::max(0.0, q));
}

} // namespace oracle

Map mask(std::int64_t h, std::int64_t w, std::uint64_t seed, double p = 0.5) {
    Map m = random_tensor({h, w}, seed, 0, 1);
    for (auto& v : m.data()) v = v < p ? 1.0 : 0.0;
    return m;
}

// Blobby mask: union of random discs, so boundaries are nontrivial.
Map blobs(std::int64_t h, std::int64_t w, std::uint64_t seed) {
    Map m({h, w});
    Map c = random_tensor({3, 3}, seed, 0, 1);
    for (int k = 0; k < 3; ++k) {
        const double cy = c[k * 3] * h, cx = c[k * 3 + 1] * w, r = 2 + c[k * 3 + 2] * h / 4;
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x)
                if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) m[y * w + x] = 1;
    }
    return m;
}

Map disc(std::int64_t n, double cy, double cx, double r) {
    Map m({n, n});
    for (std::int64_t y = 0; y < n; ++y)
        for (std::int64_t x = 0; x < n; ++x)
            if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) m[y * n + x] = 1;
    return m;
}

Map noisy(const Map& gt, std::uint64_t seed) {
    Map n = random_tensor(gt.shape(), seed, 0, 1);
    for (std::size_t i = 0; i < n.size(); ++i) n[i] = std::clamp(0.6 * gt[i] + 0.5 * n[i] - 0.05, 0.0, 1.0);
    return n;
}


} // namespace
} // namespace smtc::testing
