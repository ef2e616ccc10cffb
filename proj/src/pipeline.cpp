#include "smtc/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "smtc/rng.hpp"

namespace smtc {

namespace fs = std::filesystem;
using nlohmann::json;

Dataset Dataset::load(const std::string& root) {
    Dataset d;
    for (const auto& dir : synth::list_sequences(root)) d.sequences.push_back(synth::read_sequence(dir));
    return d;
}

std::vector<std::pair<std::size_t, std::size_t>> Dataset::labelled() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t s = 0; s < sequences.size(); ++s)
        for (std::size_t f = 0; f < sequences[s].masks.size(); ++f) out.emplace_back(s, f);
    return out;
}

// ---- run log ----

const char* RunLog::header() {
    return "step,total,r2_focal,r2_bce,r2_dice,r1_focal,r1_bce,r1_dice,lr,wall_time";
}

RunLog::RunLog(const std::string& path) : path_(path) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::string first;
    if (std::ifstream in(path); in) std::getline(in, first);
    if (first.empty()) {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw IoError("cannot write run log " + path);
        out << header() << "\n";
    } else if (first != header()) {
        throw IoError(path + ": existing file has a different run-log header");
    }
}

std::string RunLog::format(const RunLogRow& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.6f",
                  static_cast<long long>(r.step), r.total, r.round2.focal, r.round2.bce, r.round2.dice, r.round1.focal,
                  r.round1.bce, r.round1.dice, r.lr, r.wall_time);
    return buf;
}

void RunLog::append(const RunLogRow& row) {
    std::ofstream out(path_, std::ios::app);
    if (!out) throw IoError("cannot append to run log " + path_);
    out << format(row) << "\n";
}

std::vector<RunLogRow> RunLog::read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open run log " + path);
    std::string line;
    std::getline(in, line);
    if (line != header()) throw IoError(path + ": not a run log");
    std::vector<RunLogRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> v;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) v.push_back(std::stod(cell));
        if (v.size() != 10) throw IoError(path + ": malformed row '" + line + "'");
        RunLogRow r;
        r.step = static_cast<std::int64_t>(v[0]);
        r.total = v[1];
        r.round2 = {v[2], v[3], v[4], 0};
        r.round1 = {v[5], v[6], v[7], 0};
        r.lr = v[8];
        r.wall_time = v[9];
        rows.push_back(r);
    }
    return rows;
}

// ---- training ----

namespace {

constexpr std::uint64_t kShuffleStream = 0x5b0ff1e;

// Position g of the endless stream of per-epoch permutations.
class BatchOrder {
public:
    BatchOrder(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) {}

    std::size_t at(std::int64_t g) {
        const auto epoch = static_cast<std::uint64_t>(g) / n_;
        if (epoch != epoch_ || perm_.empty()) {
            perm_.resize(n_);
            std::iota(perm_.begin(), perm_.end(), std::size_t{0});
            CounterRng rng(seed_, kShuffleStream + epoch);
            for (std::size_t i = n_ - 1; i > 0; --i) std::swap(perm_[i], perm_[rng.below(i + 1)]);
            epoch_ = epoch;
        }
        return perm_[static_cast<std::uint64_t>(g) % n_];
    }

private:
    std::size_t n_;
    std::uint64_t seed_;
    std::uint64_t epoch_ = 0;
    std::vector<std::size_t> perm_;
};

void check_sizes(const ModelConfig& cfg, const Dataset& data) {
    for (const auto& s : data.sequences)
        for (const auto& f : s.frames)
            if (f.dim(1) != cfg.height || f.dim(2) != cfg.width)
                throw ConfigError("sequence " + s.name + " has frames of " + shape_str(f.shape()) + ", config expects " +
                                  std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
}

void copy_into(Tensor<float>& dst, std::size_t slot, const Tensor<float>& src) {
    std::copy(src.storage().begin(), src.storage().end(), dst.storage().begin() + slot * src.size());
}

} // namespace

TrainResult train(const ModelConfig& cfg, const Dataset& data, std::int64_t steps, std::uint64_t seed,
                  const TrainOptions& opts) {
    return train(Checkpoint{Model(cfg, seed), 0, std::nullopt}, data, steps, opts);
}

TrainResult train(Checkpoint start, const Dataset& data, std::int64_t steps, const TrainOptions& opts) {
    TrainResult res{std::move(start), {}};
    Model& model = res.checkpoint.model;
    const ModelConfig& cfg = model.config();
    const auto items = data.labelled();
    if (items.empty()) throw ConfigError("training needs at least one labelled frame");
    if (steps < 0) throw ConfigError("steps must be non-negative");
    check_sizes(cfg, data);

    auto& params = model.params();
    if (!res.checkpoint.optimizer) res.checkpoint.optimizer = AdamWState<float>::init(params, cfg.train.adamw());
    auto& opt = *res.checkpoint.optimizer;
    std::optional<RunLog> log;
    if (opts.log_path) log.emplace(*opts.log_path);

    const std::int64_t b = cfg.train.batch, h = cfg.height, w = cfg.width;
    BatchOrder order(items.size(), model.seed());
    Tensor<float> image({b, 3, h, w}), flow({b, 3, h, w}), gt({b, 1, h, w});
    const auto t0 = std::chrono::steady_clock::now();
    for (std::int64_t s = 0; s < steps; ++s) {
        const std::int64_t step = res.checkpoint.step;
        for (std::int64_t k = 0; k < b; ++k) {
            const auto [si, fi] = items[order.at(step * b + k)];
            const auto& seq = data.sequences[si];
            copy_into(image, k, seq.frames[fi]);
            copy_into(flow, k, seq.flow_rgb[fi]);
            copy_into(gt, k, seq.masks[fi]);
        }
        Tape<float> tape(&params);
        auto out = model.forward(tape, image, flow);
        auto loss = combined_loss(out.round2.logits, out.round1.logits, gt, cfg.loss);
        tape.backward(loss.total);
        adamw_step(params, tape.param_grads(), opt);

        RunLogRow row;
        row.step = step;
        row.total = loss.total.value().item();
        row.round2 = loss.round2;
        row.round1 = loss.round1;
        row.lr = opt.hp.lr;
        row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        res.log.push_back(row);
        if (log) log->append(row);
        if (opts.on_step) opts.on_step(row);
        ++res.checkpoint.step;
    }
    if (opts.checkpoint_path) save_checkpoint(*opts.checkpoint_path, res.checkpoint);
    return res;
}

// ---- prediction and evaluation ----

namespace {

metrics::Map to_map(const Tensor<float>& t, std::int64_t h, std::int64_t w) {
    return t.reshaped({h, w}).cast<double>();
}

} // namespace

Prediction predict(const Model& model, const Tensor<float>& image, const Tensor<float>& flow_rgb) {
    const std::int64_t h = image.dim(1), w = image.dim(2);
    // Gradients are off, so the tape never writes through the store pointer.
    Tape<float> tape(const_cast<ParameterStore<float>*>(&model.params()));
    tape.set_grad_enabled(false);
    auto out = model.forward(tape, image.reshaped({1, 3, h, w}), flow_rgb.reshaped({1, 3, h, w}));
    Prediction p;
    p.saliency = to_map(out.round1.prob.value(), h, w);
    p.mask = to_map(out.round2.prob.value(), h, w);
    if (out.isrm.w_o.valid()) {
        const auto& s = out.isrm.w_o.shape();
        p.w_o = to_map(out.isrm.w_o.value(), s[2], s[3]);
        p.w_i = to_map(out.isrm.w_i.value(), s[2], s[3]);
    }
    return p;
}

EvalResult evaluate(const Model& model, const Dataset& data, const metrics::EvalOptions& opts) {
    check_sizes(model.config(), data);
    std::vector<metrics::MetricReport> r2, r1;
    std::vector<std::string> skipped;
    for (const auto& seq : data.sequences) {
        if (seq.masks.empty()) {
            std::cerr << "warning: sequence " << seq.name << " has no masks; skipped\n";
            skipped.push_back(seq.name);
            continue;
        }
        std::vector<metrics::Map> m, s, gts;
        for (std::size_t f = 0; f < seq.frames.size(); ++f) {
            Prediction p = predict(model, seq.frames[f], seq.flow_rgb[f]);
            m.push_back(std::move(p.mask));
            s.push_back(std::move(p.saliency));
            gts.push_back(seq.masks[f].cast<double>());
        }
        r2.push_back(metrics::evaluate_sequence(m, gts, opts, seq.name));
        r1.push_back(metrics::evaluate_sequence(s, gts, opts, seq.name));
    }
    EvalResult res{metrics::combine(r2), metrics::combine(r1)};
    res.round2.skipped = res.round1.skipped = skipped;
    return res;
}

namespace {

json frame_json(const metrics::FrameMetrics& m) {
    return {{"j", m.j}, {"f", m.f}, {"mae", m.mae}, {"f_max", m.f_max}, {"e_max", m.e_max}, {"s_measure", m.s_measure}};
}

json report_json(const metrics::MetricReport& r) {
    json seqs = json::array();
    for (const auto& s : r.sequences) seqs.push_back({{"name", s.name}, {"frames", s.frames.size()}, {"mean", frame_json(s.mean)}});
    return {{"j_mean", r.j_mean}, {"f_mean", r.f_mean}, {"jf_mean", r.jf_mean}, {"mae", r.mae},
            {"f_max", r.f_max},   {"e_max", r.e_max},   {"s_measure", r.s_measure}, {"sequences", seqs},
            {"skipped", r.skipped}};
}

} // namespace

void write_eval_report(const std::string& out_dir, const EvalResult& r) {
    fs::create_directories(out_dir);
    {
        std::ofstream f(fs::path(out_dir) / "report.json");
        if (!f) throw IoError("cannot write report in " + out_dir);
        f << json{{"round2", report_json(r.round2)}, {"round1", report_json(r.round1)}}.dump(2) << "\n";
    }
    std::ofstream f(fs::path(out_dir) / "report.csv");
    if (!f) throw IoError("cannot write report in " + out_dir);
    f << "round,sequence,frame,j,f,mae,f_max,e_max,s_measure\n";
    char buf[256];
    for (const auto* rep : {&r.round2, &r.round1}) {
        const int round = rep == &r.round2 ? 2 : 1;
        for (const auto& s : rep->sequences)
            for (std::size_t i = 0; i < s.frames.size(); ++i) {
                const auto& m = s.frames[i];
                std::snprintf(buf, sizeof buf, "%d,%s,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", round, s.name.c_str(),
                              i, m.j, m.f, m.mae, m.f_max, m.e_max, m.s_measure);
                f << buf;
            }
    }
}

// ---- inference ----

namespace {

// Nearest-neighbour upsampling of a coarse weight grid for viewing.
Tensor<float> upsample_nearest(const metrics::Map& m, std::int64_t h, std::int64_t w) {
    Tensor<float> out({h, w});
    const std::int64_t gh = m.dim(0), gw = m.dim(1);
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            out[y * w + x] = static_cast<float>(m.at(y * gh / h, x * gw / w));
    return out;
}

std::string indexed(const fs::path& dir, const char* prefix, std::size_t i) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_%05zu.png", prefix, i);
    return (dir / name).string();
}

} // namespace

InferResult infer(const Model& model, const std::string& frames_dir, const std::string& flows_dir,
                  const std::string& out_dir, bool dump_isrm) {
    const auto frames = synth::list_pngs(frames_dir), flows = synth::list_pngs(flows_dir);
    if (frames.size() != flows.size())
        throw ContractError("infer: " + std::to_string(frames.size()) + " frames but " + std::to_string(flows.size()) +
                            " flows");
    if (dump_isrm && !model.config().isrm.enabled) throw ConfigError("infer: --dump-isrm needs ISRM enabled");
    fs::create_directories(out_dir);
    InferResult res;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const Tensor<float> img = synth::read_png_rgb(frames[i]), flo = synth::read_png_rgb(flows[i]);
        Prediction p = predict(model, img, flo);
        const std::int64_t h = img.dim(1), w = img.dim(2);
        auto emit = [&](const char* prefix, const Tensor<float>& t) {
            res.files.push_back(indexed(out_dir, prefix, i));
            synth::write_png(res.files.back(), t);
        };
        emit("S", p.saliency.cast<float>());
        emit("M", p.mask.cast<float>());
        if (dump_isrm) {
            emit("w_o", upsample_nearest(p.w_o, h, w));
            emit("w_i", upsample_nearest(p.w_i, h, w));
        }
    }
    return res;
}

// ---- data generation ----

std::vector<std::string> generate_dataset(const std::string& root, int count, std::uint64_t seed, int height, int width,
                                          int frames) {
    using synth::Scenario;
    const Scenario order[] = {Scenario::normal, Scenario::stationary_object, Scenario::motion_blur,
                              Scenario::comoving_background, Scenario::background_mover};
    if (count <= 0) throw ConfigError("gen-data: count must be positive");
    std::vector<std::string> names;
    for (int k = 0; k < count; ++k) {
        const Scenario sc = order[k % 5];
        const std::uint64_t s = CounterRng(seed, static_cast<std::uint64_t>(k)).next_u64();
        synth::SceneConfig scene = synth::random_scene(sc, s, height, width, frames);
        char name[64];
        std::snprintf(name, sizeof name, "seq_%03d_%s", k, synth::to_string(sc));
        synth::write_sequence(root, name, synth::generate_sequence(scene, s), scene, s);
        names.emplace_back(name);
    }
    return names;
}

// ---- ablation ----

const char* to_string(AblationAxis a) {
    switch (a) {
    case AblationAxis::rank: return "rank";
    case AblationAxis::placement: return "placement";
    case AblationAxis::modules: return "modules";
    case AblationAxis::inputs: return "inputs";
    }
    return "?";
}

AblationAxis ablation_axis_from_string(const std::string& s) {
    for (auto a : {AblationAxis::rank, AblationAxis::placement, AblationAxis::modules, AblationAxis::inputs})
        if (s == to_string(a)) return a;
    throw ConfigError("unknown ablation axis '" + s + "'");
}

std::vector<AblationVariant> ablation_variants(const ModelConfig& base, AblationAxis axis) {
    const LoraPlacement on = base.encoder.placement == LoraPlacement::none ? LoraPlacement::both : base.encoder.placement;
    const int rank = base.encoder.rank > 0 ? base.encoder.rank : 2;
    std::vector<AblationVariant> out;
    switch (axis) {
    case AblationAxis::rank: {
        ModelConfig wide = base;
        for (auto& s : wide.encoder.stages) s.channels = std::max(s.channels, 32);
        wide.encoder.placement = on;
        for (int r : {1, 2, 4, 8, 16}) {
            ModelConfig c = wide;
            c.encoder.rank = r;
            out.push_back({"r=" + std::to_string(r), c});
        }
        break;
    }
    case AblationAxis::placement:
        for (auto p : {LoraPlacement::none, LoraPlacement::mhsa, LoraPlacement::ffn, LoraPlacement::both}) {
            ModelConfig c = base;
            c.encoder.rank = rank;
            c.encoder.placement = p;
            out.push_back({to_string(p), c});
        }
        break;
    case AblationAxis::modules:
        for (int k = 0; k < 4; ++k) {
            const bool tc = k == 1 || k == 3, isrm = k >= 2;
            ModelConfig c = base;
            c.encoder.rank = rank;
            c.encoder.placement = tc ? on : LoraPlacement::none;
            c.isrm.enabled = isrm;
            const char* names[] = {"baseline", "+TC", "+ISRM", "+both"};
            out.push_back({names[k], c});
        }
        break;
    case AblationAxis::inputs:
        for (auto m : {InputMode::flow_only, InputMode::image_only, InputMode::both}) {
            ModelConfig c = base;
            c.input_mode = m;
            out.push_back({to_string(m), c});
        }
        break;
    }
    for (auto& v : out) v.config.validate();
    return out;
}

std::vector<AblationRow> ablate(const ModelConfig& base, AblationAxis axis, const Dataset& data, std::int64_t steps,
                                std::uint64_t seed) {
    std::vector<AblationRow> rows;
    for (const auto& v : ablation_variants(base, axis)) {
        TrainResult tr = train(v.config, data, steps, seed);
        const Model& m = tr.checkpoint.model;
        EvalResult ev = evaluate(m, data);
        AblationRow row;
        row.axis = to_string(axis);
        row.variant = v.name;
        row.j = ev.round2.j_mean;
        row.f = ev.round2.f_mean;
        row.jf = ev.round2.jf_mean;
        row.final_loss = tr.log.empty() ? 0.0 : tr.log.back().total;
        row.collateral_params = count_parameters(m.params()).collateral;
        row.total_params = m.params().count();
        rows.push_back(row);
    }
    return rows;
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << "axis,variant,j,f,jf,final_loss,collateral_params,total_params\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%s,%.17g,%.17g,%.17g,%.17g,%lld,%lld\n", r.axis.c_str(), r.variant.c_str(),
                      r.j, r.f, r.jf, r.final_loss, static_cast<long long>(r.collateral_params),
                      static_cast<long long>(r.total_params));
        f << buf;
    }
}

} // namespace smtc
