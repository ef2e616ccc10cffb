#pragma once

#include <optional>
#include <string>
#include <vector>

#include "smtc/tensor.hpp"

namespace smtc::metrics {

using Map = Tensor<double>;  // [H, W]

// |pred & gt| / |pred | gt|; both empty -> 1.
double region_similarity(const Map& pred_bin, const Map& gt);

// Foreground pixels with at least one in-image 4-neighbour in the background.
Map boundary_map(const Map& mask);

// Default boundary tolerance ceil(0.008 * sqrt(H^2 + W^2)).
int default_tol_radius(std::int64_t h, std::int64_t w);

// Boundary F1 with disk-dilation matching of radius tol_radius; both boundaries empty -> 1, one empty -> 0.
double boundary_f_measure(const Map& pred_bin, const Map& gt, int tol_radius);

double mae(const Map& pred, const Map& gt);

// Maximum F_beta over thresholds k / thresholds, k = 0..thresholds-1 (pixel positive iff pred >= threshold).
double max_f_measure(const Map& pred, const Map& gt, double beta_sq = 0.3, int thresholds = 256);

// Maximum enhanced-alignment measure over the same threshold sweep.
double e_measure(const Map& pred, const Map& gt, int thresholds = 256);

// alpha * S_object + (1 - alpha) * S_region, clamped to [0, 1].
double s_measure(const Map& pred, const Map& gt, double alpha = 0.5);

// Pixels >= threshold become 1.
Map binarize(const Map& pred, double threshold);

// Nonzero labels merge into one foreground entity.
Map merge_objects(const Map& labels);

struct FrameMetrics {
    double j = 0, f = 0, mae = 0, f_max = 0, e_max = 0, s_measure = 0;
};

struct SequenceMetrics {
    std::string name;
    std::vector<FrameMetrics> frames;
    FrameMetrics mean;
};

struct MetricReport {
    double j_mean = 0, f_mean = 0, jf_mean = 0, mae = 0, f_max = 0, e_max = 0, s_measure = 0;
    std::vector<SequenceMetrics> sequences;
    std::vector<std::string> skipped;  // sequences without usable ground truth
};

struct EvalOptions {
    double binarize_threshold = 0.5;
    std::optional<int> tol_radius;  // default_tol_radius when unset
    double beta_sq = 0.3;
    int thresholds = 256;
    double s_alpha = 0.5;
};

FrameMetrics evaluate_frame(const Map& pred, const Map& gt, const EvalOptions& opts = {});

// Per-frame metrics averaged over the sequence; the report holds this single sequence.
MetricReport evaluate_sequence(const std::vector<Map>& preds, const std::vector<Map>& gts,
                               const EvalOptions& opts = {}, const std::string& name = "");

// Means over sequences of per-sequence means; jf_mean = (j_mean + f_mean) / 2.
MetricReport combine(const std::vector<MetricReport>& reports);

} // namespace smtc::metrics
