#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "smtc/checkpoint.hpp"
#include "smtc/metrics.hpp"
#include "smtc/synthdata.hpp"

namespace smtc {

// Sequences in the synthetic layout; frames without masks are never sampled for training.
struct Dataset {
    std::vector<synth::SequenceData> sequences;

    static Dataset load(const std::string& root);
    // (sequence, frame) pairs that carry a mask.
    std::vector<std::pair<std::size_t, std::size_t>> labelled() const;
};

struct RunLogRow {
    std::int64_t step = 0;
    double total = 0;
    HeadLoss round2, round1;
    double lr = 0;
    double wall_time = 0;  // seconds since the start of the run
};

// Append-only CSV with a fixed header.
class RunLog {
public:
    static const char* header();

    // Opens for append; writes the header to a new or empty file and rejects a foreign header.
    explicit RunLog(const std::string& path);
    void append(const RunLogRow& row);
    const std::string& path() const { return path_; }

    static std::string format(const RunLogRow& row);
    static std::vector<RunLogRow> read(const std::string& path);

private:
    std::string path_;
};

struct TrainOptions {
    std::optional<std::string> checkpoint_path;
    std::optional<std::string> log_path;
    // Called after every step with the logged row.
    std::function<void(const RunLogRow&)> on_step;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<RunLogRow> log;
};

// AdamW over every parameter; batches are drawn from per-epoch shuffles keyed by seed.
// Throws ConfigError on an empty dataset or a size mismatch with the config.
TrainResult train(const ModelConfig& cfg, const Dataset& data, std::int64_t steps, std::uint64_t seed,
                  const TrainOptions& opts = {});
// Continues from a checkpoint; optimizer state is reused when present.
TrainResult train(Checkpoint start, const Dataset& data, std::int64_t steps, const TrainOptions& opts = {});

struct Prediction {
    metrics::Map saliency;  // round-1 S, [H,W]
    metrics::Map mask;      // round-2 M_pred, [H,W]
    metrics::Map w_o, w_i;  // ISRM weights on the level-4 grid; empty when ISRM is off
};

// image, flow_rgb: [3,H,W]. Runs without recording gradients.
Prediction predict(const Model& model, const Tensor<float>& image, const Tensor<float>& flow_rgb);

struct EvalResult {
    metrics::MetricReport round2, round1;
};

EvalResult evaluate(const Model& model, const Dataset& data, const metrics::EvalOptions& opts = {});
// report.json (both rounds) and report.csv (one row per scored frame of round 2).
void write_eval_report(const std::string& out_dir, const EvalResult& r);

struct InferResult {
    std::vector<std::string> files;
};

// Writes S_%05d.png and M_%05d.png per frame, plus w_o_/w_i_ heatmaps with dump_isrm.
InferResult infer(const Model& model, const std::string& frames_dir, const std::string& flows_dir,
                  const std::string& out_dir, bool dump_isrm);

// Sequences seq_%03d_<scenario>, cycling through every scenario.
std::vector<std::string> generate_dataset(const std::string& root, int count, std::uint64_t seed, int height = 128,
                                          int width = 128, int frames = 8);

enum class AblationAxis { rank, placement, modules, inputs };
const char* to_string(AblationAxis a);
AblationAxis ablation_axis_from_string(const std::string& s);

struct AblationVariant {
    std::string name;
    ModelConfig config;
};

// The axis's variants derived from base. The rank axis widens every stage to at
// least 32 channels so that r = 16 satisfies the rank bound.
std::vector<AblationVariant> ablation_variants(const ModelConfig& base, AblationAxis axis);

struct AblationRow {
    std::string axis, variant;
    double j = 0, f = 0, jf = 0;
    double final_loss = 0;
    std::int64_t collateral_params = 0, total_params = 0;
};

// Trains every variant for steps on data and scores it on the same data.
std::vector<AblationRow> ablate(const ModelConfig& base, AblationAxis axis, const Dataset& data, std::int64_t steps,
                                std::uint64_t seed);
void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows);

} // namespace smtc
