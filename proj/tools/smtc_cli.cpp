#include <cstdio>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "smtc/gradcheck_suite.hpp"
#include "smtc/pipeline.hpp"

namespace fs = std::filesystem;
using namespace smtc;

namespace {

struct ConfigFlags {
    std::string path;
    std::string preset = "default";

    void add(CLI::App* app, const std::string& default_preset) {
        preset = default_preset;
        auto* c = app->add_option("--config", path, "Model config JSON");
        app->add_option("--preset", preset, "Built-in config (default, tiny, smoke) when --config is absent")
            ->excludes(c)
            ->capture_default_str();
    }

    ModelConfig load() const { return path.empty() ? ModelConfig::preset(preset) : load_model_config(path); }
};

int run_train(const ConfigFlags& cf, const std::string& data, const std::string& out, std::int64_t steps,
              std::uint64_t seed, const std::string& resume) {
    Dataset ds = Dataset::load(data);
    TrainOptions opts;
    opts.checkpoint_path = (fs::path(out) / "checkpoint.smtc").string();
    opts.log_path = (fs::path(out) / "runlog.csv").string();
    opts.on_step = [steps](const RunLogRow& r) {
        if (r.step % 10 == 0 || r.step + 1 == steps)
            std::printf("step %lld  loss %.5f  (%.1fs)\n", static_cast<long long>(r.step), r.total, r.wall_time);
    };
    fs::create_directories(out);
    TrainResult res = resume.empty() ? train(cf.load(), ds, steps, seed, opts)
                                     : train(load_checkpoint(resume), ds, steps, opts);
    save_model_config((fs::path(out) / "config.json").string(), res.checkpoint.model.config());
    std::printf("wrote %s\n", opts.checkpoint_path->c_str());
    return 0;
}

int run_evaluate(const std::string& checkpoint, const std::string& data, const std::string& out) {
    Checkpoint ck = load_checkpoint(checkpoint);
    EvalResult r = evaluate(ck.model, Dataset::load(data));
    write_eval_report(out, r);
    std::printf("round 2: J %.4f  F %.4f  J&F %.4f  MAE %.4f  maxF %.4f  E %.4f  S %.4f\n", r.round2.j_mean,
                r.round2.f_mean, r.round2.jf_mean, r.round2.mae, r.round2.f_max, r.round2.e_max, r.round2.s_measure);
    std::printf("round 1: J %.4f  F %.4f  J&F %.4f\n", r.round1.j_mean, r.round1.f_mean, r.round1.jf_mean);
    for (const auto& s : r.round2.skipped) std::printf("skipped %s (no masks)\n", s.c_str());
    return 0;
}

int run_gradcheck(int seeds, const std::string& tamper) {
    GradcheckSuiteOptions o;
    o.seeds = seeds;
    o.tamper = tamper;
    bool ok = true;
    std::printf("%-26s %-12s %-6s %s\n", "component", "max_rel_err", "result", "worst");
    for (const auto& name : gradcheck_components()) {
        GradcheckRow r = gradcheck_component(name, o);
        ok = ok && r.pass;
        std::printf("%-26s %-12.3e %-6s %s\n", r.component.c_str(), r.max_rel_error, r.pass ? "PASS" : "FAIL",
                    r.worst.c_str());
        std::fflush(stdout);
    }
    return ok ? 0 : 1;
}

int run_ablate(const ConfigFlags& cf, const std::string& data, const std::string& out, const std::string& axis,
               std::int64_t steps, std::uint64_t seed) {
    const ModelConfig base = cf.load();
    Dataset ds = Dataset::load(data);
    std::vector<AblationAxis> axes;
    if (axis == "all")
        axes = {AblationAxis::rank, AblationAxis::placement, AblationAxis::modules, AblationAxis::inputs};
    else
        axes = {ablation_axis_from_string(axis)};
    for (auto a : axes) {
        auto rows = ablate(base, a, ds, steps, seed);
        const auto path = (fs::path(out) / (std::string("ablation_") + to_string(a) + ".csv")).string();
        write_ablation_csv(path, rows);
        for (const auto& r : rows)
            std::printf("%-10s %-12s J %.4f  F %.4f  collateral %lld  total %lld\n", r.axis.c_str(), r.variant.c_str(),
                        r.j, r.f, static_cast<long long>(r.collateral_params), static_cast<long long>(r.total_params));
        std::printf("wrote %s\n", path.c_str());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-stream video segmentation: training, evaluation, inference and checks"};
    app.require_subcommand(1);

    std::string data, out, checkpoint, axis = "all", frames_dir, flows_dir, tamper;
    std::uint64_t seed = 0;
    std::int64_t steps = 300;
    bool dump_isrm = false;
    int seeds = 10, count = 4, frames = 8, height = 128, width = 128;

    ConfigFlags train_cfg;
    auto* tr = app.add_subcommand("train", "Train from scratch or resume a checkpoint");
    train_cfg.add(tr, "default");
    tr->add_option("--data", data, "Dataset root")->required();
    tr->add_option("--out", out, "Output directory")->required();
    tr->add_option("--steps", steps, "Optimizer steps")->capture_default_str();
    tr->add_option("--seed", seed, "Initialization and data-order seed")->capture_default_str();
    tr->add_option("--checkpoint", checkpoint, "Resume from this checkpoint");

    auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on a dataset");
    ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    ev->add_option("--data", data, "Dataset root")->required();
    ev->add_option("--out", out, "Report directory")->required();

    auto* in = app.add_subcommand("infer", "Write saliency and mask PNGs for one sequence");
    in->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    in->add_option("--data", data, "Sequence directory holding frames/ and flows/");
    in->add_option("--frames", frames_dir, "Frame directory (overrides --data)");
    in->add_option("--flows", flows_dir, "Flow directory (overrides --data)");
    in->add_option("--out", out, "Output directory")->required();
    in->add_flag("--dump-isrm", dump_isrm, "Also write ISRM weight heatmaps");

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks per component");
    gc->add_option("--seeds", seeds, "Seeds per component")->capture_default_str();
    gc->add_option("--tamper", tamper, "Negate the analytic gradient of one component (self-test)");

    ConfigFlags ablate_cfg;
    auto* ab = app.add_subcommand("ablate", "Train and score the variants of an ablation axis");
    ablate_cfg.add(ab, "tiny");
    ab->add_option("--data", data, "Dataset root")->required();
    ab->add_option("--out", out, "Directory for ablation_<axis>.csv")->required();
    ab->add_option("--axis", axis, "rank, placement, modules, inputs or all")->capture_default_str();
    ab->add_option("--steps", steps, "Training steps per variant")->capture_default_str();
    ab->add_option("--seed", seed, "Seed")->capture_default_str();

    auto* gd = app.add_subcommand("gen-data", "Generate synthetic sequences");
    gd->add_option("--out", out, "Dataset root")->required();
    gd->add_option("--seed", seed, "Seed")->capture_default_str();
    gd->add_option("--count", count, "Number of sequences")->capture_default_str();
    gd->add_option("--frames", frames, "Frames per sequence")->capture_default_str();
    gd->add_option("--height", height, "Frame height")->capture_default_str();
    gd->add_option("--width", width, "Frame width")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (tr->parsed()) return run_train(train_cfg, data, out, steps, seed, checkpoint);
        if (ev->parsed()) return run_evaluate(checkpoint, data, out);
        if (in->parsed()) {
            if (frames_dir.empty()) frames_dir = (fs::path(data) / "frames").string();
            if (flows_dir.empty()) flows_dir = (fs::path(data) / "flows").string();
            InferResult r = infer(load_checkpoint(checkpoint).model, frames_dir, flows_dir, out, dump_isrm);
            std::printf("wrote %zu files to %s\n", r.files.size(), out.c_str());
            return 0;
        }
        if (gc->parsed()) return run_gradcheck(seeds, tamper);
        if (ab->parsed()) return run_ablate(ablate_cfg, data, out, axis, steps, seed);
        if (gd->parsed()) {
            auto names = generate_dataset(out, count, seed, height, width, frames);
            std::printf("wrote %zu sequences to %s\n", names.size(), out.c_str());
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
