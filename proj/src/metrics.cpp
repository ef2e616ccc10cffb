#include "smtc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace smtc::metrics {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

void check_pair(const Map& a, const Map& b, const char* what) {
    if (a.rank() != 2) throw DimensionError(std::string(what) + ": expected [H,W], got " + shape_str(a.shape()));
    if (a.shape() != b.shape())
        throw DimensionError(std::string(what) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void check_binary(const Map& m, const char* what) {
    for (double v : m.data())
        if (v != 0.0 && v != 1.0) throw ContractError(std::string(what) + ": mask must be binary {0,1}");
}

// Counts per threshold bucket: pixel i is positive for thresholds k <= bucket[i].
struct Sweep {
    std::vector<double> tp, pp;  // indexed by threshold k
    double g = 0, n = 0;
};

Sweep sweep(const Map& pred, const Map& gt, int thresholds) {
    if (thresholds < 1) throw ConfigError("metrics: thresholds must be positive");
    const double tn = static_cast<double>(thresholds);
    std::vector<double> fg(thresholds, 0.0), all(thresholds, 0.0);
    Sweep s;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = pred[i];
        const bool g = gt[i] != 0.0;
        s.g += g;
        if (!(p >= 0.0)) continue;  // below threshold 0: never positive
        auto k = static_cast<std::int64_t>(std::min(std::floor(p * tn), tn - 1));
        while (k + 1 < thresholds && static_cast<double>(k + 1) / tn <= p) ++k;
        while (k >= 0 && static_cast<double>(k) / tn > p) --k;
        if (k < 0) continue;
        all[k] += 1;
        if (g) fg[k] += 1;
    }
    s.n = static_cast<double>(pred.size());
    s.tp.assign(thresholds, 0.0);
    s.pp.assign(thresholds, 0.0);
    double tp = 0, pp = 0;
    for (int k = thresholds - 1; k >= 0; --k) {
        tp += fg[k];
        pp += all[k];
        s.tp[k] = tp;
        s.pp[k] = pp;
    }
    return s;
}

double enhanced(double fm, double gt, double mu_f, double mu_g) {
    const double a = fm - mu_f, b = gt - mu_g;
    const double align = 2.0 * a * b / (a * a + b * b + kEps);
    return (align + 1.0) * (align + 1.0) / 4.0;
}

} // namespace

double region_similarity(const Map& pred_bin, const Map& gt) {
    check_pair(pred_bin, gt, "region_similarity");
    check_binary(pred_bin, "region_similarity");
    check_binary(gt, "region_similarity");
    std::int64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const bool p = pred_bin[i] != 0.0, g = gt[i] != 0.0;
        inter += p && g;
        uni += p || g;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Map boundary_map(const Map& mask) {
    if (mask.rank() != 2) throw DimensionError("boundary_map: expected [H,W], got " + shape_str(mask.shape()));
    const std::int64_t h = mask.dim(0), w = mask.dim(1);
    Map b({h, w});
    auto fg = [&](std::int64_t y, std::int64_t x) { return mask[y * w + x] != 0.0; };
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            if (!fg(y, x)) continue;
            const bool edge = (y > 0 && !fg(y - 1, x)) || (y + 1 < h && !fg(y + 1, x)) ||
                              (x > 0 && !fg(y, x - 1)) || (x + 1 < w && !fg(y, x + 1));
            b[y * w + x] = edge ? 1.0 : 0.0;
        }
    return b;
}

int default_tol_radius(std::int64_t h, std::int64_t w) {
    return static_cast<int>(std::ceil(0.008 * std::hypot(static_cast<double>(h), static_cast<double>(w))));
}

namespace {

// Marks every pixel within Euclidean distance r of a set pixel.
Map dilate_disk(const Map& b, int r) {
    const std::int64_t h = b.dim(0), w = b.dim(1);
    std::vector<std::pair<int, int>> offs;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
            if (dx * dx + dy * dy <= r * r) offs.emplace_back(dy, dx);
    Map d({h, w});
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            if (b[y * w + x] == 0.0) continue;
            for (auto [dy, dx] : offs) {
                const std::int64_t yy = y + dy, xx = x + dx;
                if (yy >= 0 && yy < h && xx >= 0 && xx < w) d[yy * w + xx] = 1.0;
            }
        }
    return d;
}

} // namespace

double boundary_f_measure(const Map& pred_bin, const Map& gt, int tol_radius) {
    check_pair(pred_bin, gt, "boundary_f_measure");
    check_binary(pred_bin, "boundary_f_measure");
    check_binary(gt, "boundary_f_measure");
    if (tol_radius < 0) throw ConfigError("boundary_f_measure: negative tolerance");
    const Map bp = boundary_map(pred_bin), bg = boundary_map(gt);
    const Map dp = dilate_disk(bp, tol_radius), dg = dilate_disk(bg, tol_radius);
    double np = 0, ng = 0, mp = 0, mg = 0;
    for (std::size_t i = 0; i < bp.size(); ++i) {
        np += bp[i];
        ng += bg[i];
        mp += bp[i] * dg[i];
        mg += bg[i] * dp[i];
    }
    if (np == 0 && ng == 0) return 1.0;
    if (np == 0 || ng == 0) return 0.0;
    const double prec = mp / np, rec = mg / ng;
    return prec + rec == 0.0 ? 0.0 : 2.0 * prec * rec / (prec + rec);
}

double mae(const Map& pred, const Map& gt) {
    check_pair(pred, gt, "mae");
    double s = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) s += std::abs(pred[i] - gt[i]);
    return gt.size() == 0 ? 0.0 : s / static_cast<double>(gt.size());
}

double max_f_measure(const Map& pred, const Map& gt, double beta_sq, int thresholds) {
    check_pair(pred, gt, "max_f_measure");
    const Sweep s = sweep(pred, gt, thresholds);
    double best = 0;
    for (int k = 0; k < thresholds; ++k) {
        if (s.pp[k] == 0 || s.g == 0) continue;
        const double p = s.tp[k] / s.pp[k], r = s.tp[k] / s.g;
        if (p + r == 0) continue;
        best = std::max(best, (1 + beta_sq) * p * r / (beta_sq * p + r));
    }
    return best;
}

double e_measure(const Map& pred, const Map& gt, int thresholds) {
    check_pair(pred, gt, "e_measure");
    const Sweep s = sweep(pred, gt, thresholds);
    double best = 0;
    for (int k = 0; k < thresholds; ++k) {
        const double pp = s.pp[k], tp = s.tp[k];
        double score;
        if (s.g == 0)
            score = 1.0 - pp / s.n;
        else if (s.g == s.n)
            score = pp / s.n;
        else {
            const double mf = pp / s.n, mg = s.g / s.n;
            const double n11 = tp, n10 = pp - tp, n01 = s.g - tp, n00 = s.n - pp - s.g + tp;
            score = (n11 * enhanced(1, 1, mf, mg) + n10 * enhanced(1, 0, mf, mg) + n01 * enhanced(0, 1, mf, mg) +
                     n00 * enhanced(0, 0, mf, mg)) /
                    s.n;
        }
        best = std::max(best, score);
    }
    return best;
}

namespace {

// Object score 2x / (x^2 + 1 + sigma + eps) over the selected pixels (sample std).
double object_score(double sum, double sum_sq, double n) {
    if (n == 0) return 0.0;
    const double x = sum / n;
    const double var = n > 1 ? std::max(0.0, (sum_sq - n * x * x) / (n - 1)) : 0.0;
    return 2.0 * x / (x * x + 1.0 + std::sqrt(var) + kEps);
}

struct Moments {
    double n = 0, sp = 0, sg = 0, spp = 0, sgg = 0, spg = 0;
};

double ssim(const Moments& m) {
    const double n = m.n;
    const double x = m.sp / n, y = m.sg / n;
    const double sx2 = (m.spp - n * x * x) / (n - 1 + kEps);
    const double sy2 = (m.sgg - n * y * y) / (n - 1 + kEps);
    const double sxy = (m.spg - n * x * y) / (n - 1 + kEps);
    const double a = 4 * x * y * sxy;
    const double b = (x * x + y * y) * (sx2 + sy2);
    if (a != 0) return a / (b + kEps);
    return b == 0 ? 1.0 : 0.0;
}

} // namespace

double s_measure(const Map& pred, const Map& gt, double alpha) {
    check_pair(pred, gt, "s_measure");
    check_binary(gt, "s_measure");
    const std::int64_t h = gt.dim(0), w = gt.dim(1);
    const double n = static_cast<double>(gt.size());
    double sg = 0, sp = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        sg += gt[i];
        sp += pred[i];
    }
    const double y = sg / n;
    double q;
    if (sg == 0)
        q = 1.0 - sp / n;
    else if (sg == n)
        q = sp / n;
    else {
        double f_sum = 0, f_sq = 0, b_sum = 0, b_sq = 0;
        for (std::size_t i = 0; i < gt.size(); ++i) {
            if (gt[i] != 0.0) {
                f_sum += pred[i];
                f_sq += pred[i] * pred[i];
            } else {
                const double v = 1.0 - pred[i];
                b_sum += v;
                b_sq += v * v;
            }
        }
        const double s_object = y * object_score(f_sum, f_sq, sg) + (1 - y) * object_score(b_sum, b_sq, n - sg);

        // Centroid with 1-based coordinates, rounded; quadrants split after column X and row Y.
        double cx = 0, cy = 0;
        for (std::int64_t r = 0; r < h; ++r)
            for (std::int64_t c = 0; c < w; ++c)
                if (gt[r * w + c] != 0.0) {
                    cx += static_cast<double>(c + 1);
                    cy += static_cast<double>(r + 1);
                }
        const auto X = static_cast<std::int64_t>(std::round(cx / sg));
        const auto Y = static_cast<std::int64_t>(std::round(cy / sg));
        Moments m[4];
        for (std::int64_t r = 0; r < h; ++r)
            for (std::int64_t c = 0; c < w; ++c) {
                const int qi = (r < Y ? 0 : 2) + (c < X ? 0 : 1);
                const double p = pred[r * w + c], g = gt[r * w + c];
                Moments& mm = m[qi];
                mm.n += 1;
                mm.sp += p;
                mm.sg += g;
                mm.spp += p * p;
                mm.sgg += g * g;
                mm.spg += p * g;
            }
        double s_region = 0;
        for (const auto& mm : m)
            if (mm.n > 0) s_region += mm.n / n * ssim(mm);
        q = alpha * s_object + (1 - alpha) * s_region;
    }
    return std::clamp(q, 0.0, 1.0);
}

Map binarize(const Map& pred, double threshold) {
    Map b(pred.shape());
    for (std::size_t i = 0; i < pred.size(); ++i) b[i] = pred[i] >= threshold ? 1.0 : 0.0;
    return b;
}

Map merge_objects(const Map& labels) {
    Map b(labels.shape());
    for (std::size_t i = 0; i < labels.size(); ++i) b[i] = labels[i] != 0.0 ? 1.0 : 0.0;
    return b;
}

FrameMetrics evaluate_frame(const Map& pred, const Map& gt_labels, const EvalOptions& opts) {
    check_pair(pred, gt_labels, "evaluate_frame");
    const Map gt = merge_objects(gt_labels);
    const Map pb = binarize(pred, opts.binarize_threshold);
    FrameMetrics f;
    f.j = region_similarity(pb, gt);
    f.f = boundary_f_measure(pb, gt, opts.tol_radius.value_or(default_tol_radius(gt.dim(0), gt.dim(1))));
    f.mae = mae(pred, gt);
    f.f_max = max_f_measure(pred, gt, opts.beta_sq, opts.thresholds);
    f.e_max = e_measure(pred, gt, opts.thresholds);
    f.s_measure = s_measure(pred, gt, opts.s_alpha);
    return f;
}

namespace {

void finish(MetricReport& r) { r.jf_mean = (r.j_mean + r.f_mean) / 2.0; }

} // namespace

MetricReport evaluate_sequence(const std::vector<Map>& preds, const std::vector<Map>& gts, const EvalOptions& opts,
                               const std::string& name) {
    if (preds.size() != gts.size())
        throw ContractError("evaluate_sequence: " + std::to_string(preds.size()) + " predictions vs " +
                            std::to_string(gts.size()) + " masks");
    SequenceMetrics seq;
    seq.name = name;
    for (std::size_t i = 0; i < preds.size(); ++i) seq.frames.push_back(evaluate_frame(preds[i], gts[i], opts));
    if (!seq.frames.empty()) {
        const double n = static_cast<double>(seq.frames.size());
        for (const auto& f : seq.frames) {
            seq.mean.j += f.j / n;
            seq.mean.f += f.f / n;
            seq.mean.mae += f.mae / n;
            seq.mean.f_max += f.f_max / n;
            seq.mean.e_max += f.e_max / n;
            seq.mean.s_measure += f.s_measure / n;
        }
    }
    MetricReport r;
    r.j_mean = seq.mean.j;
    r.f_mean = seq.mean.f;
    r.mae = seq.mean.mae;
    r.f_max = seq.mean.f_max;
    r.e_max = seq.mean.e_max;
    r.s_measure = seq.mean.s_measure;
    r.sequences.push_back(std::move(seq));
    finish(r);
    return r;
}

MetricReport combine(const std::vector<MetricReport>& reports) {
    MetricReport r;
    for (const auto& rep : reports) {
        r.sequences.insert(r.sequences.end(), rep.sequences.begin(), rep.sequences.end());
        r.skipped.insert(r.skipped.end(), rep.skipped.begin(), rep.skipped.end());
    }
    if (!r.sequences.empty()) {
        const double n = static_cast<double>(r.sequences.size());
        for (const auto& s : r.sequences) {
            r.j_mean += s.mean.j / n;
            r.f_mean += s.mean.f / n;
            r.mae += s.mean.mae / n;
            r.f_max += s.mean.f_max / n;
            r.e_max += s.mean.e_max / n;
            r.s_measure += s.mean.s_measure / n;
        }
    }
    finish(r);
    return r;
}

} // namespace smtc::metrics
