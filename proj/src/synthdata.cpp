#include "smtc/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "smtc/rng.hpp"

namespace fs = std::filesystem;

namespace smtc::synth {

const char* to_string(Scenario s) {
    switch (s) {
    case Scenario::normal: return "normal";
    case Scenario::stationary_object: return "stationary_object";
    case Scenario::motion_blur: return "motion_blur";
    case Scenario::comoving_background: return "comoving_background";
    case Scenario::background_mover: return "background_mover";
    }
    return "?";
}

Scenario scenario_from_string(const std::string& s) {
    for (auto v : {Scenario::normal, Scenario::stationary_object, Scenario::motion_blur, Scenario::comoving_background,
                   Scenario::background_mover})
        if (s == to_string(v)) return v;
    throw ConfigError("unknown scenario '" + s + "'");
}

const char* to_string(ShapeKind k) {
    switch (k) {
    case ShapeKind::circle: return "circle";
    case ShapeKind::rectangle: return "rectangle";
    case ShapeKind::polygon: return "polygon";
    }
    return "?";
}

ShapeKind shape_kind_from_string(const std::string& s) {
    for (auto v : {ShapeKind::circle, ShapeKind::rectangle, ShapeKind::polygon})
        if (s == to_string(v)) return v;
    throw ConfigError("unknown shape kind '" + s + "'");
}

void SceneConfig::validate() const {
    if (height <= 0 || width <= 0 || height % 32 != 0 || width % 32 != 0)
        throw ConfigError("scene: H, W must be positive multiples of 32");
    if (frames < 2) throw ConfigError("scene: need at least 2 frames");
    if (shapes.empty()) throw ConfigError("scene: at least one foreground shape");
    if (blur_samples < 1) throw ConfigError("scene: blur_samples must be positive");
    if (scenario == Scenario::background_mover && !distractor)
        throw ConfigError("scene: background_mover needs a distractor shape");
    auto check = [](const ShapeSpec& s) {
        if (!(s.size > 0) || !(s.aspect > 0) || !(s.scale_rate > 0)) throw ConfigError("scene: shape sizes must be positive");
        if (s.kind == ShapeKind::polygon && s.vertices.size() < 3) throw ConfigError("scene: polygon needs 3+ vertices");
    };
    for (const auto& s : shapes) check(s);
    if (distractor) check(*distractor);
}

namespace {

// Smooth value noise in [0,1], a pure function of (seed, stream, x, y).
double lattice(std::uint64_t seed, std::uint64_t stream, std::int64_t i, std::int64_t j) {
    const std::uint64_t h = CounterRng::mix(seed ^ CounterRng::mix(stream * 0x9E3779B97F4A7C15ull +
                                                                   static_cast<std::uint64_t>(i) * 0xC2B2AE3D27D4EB4Full +
                                                                   static_cast<std::uint64_t>(j) * 0x165667B19E3779F9ull));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double value_noise(std::uint64_t seed, std::uint64_t stream, double x, double y, double cell) {
    const double u = x / cell, v = y / cell;
    const double fi = std::floor(u), fj = std::floor(v);
    const auto i = static_cast<std::int64_t>(fi), j = static_cast<std::int64_t>(fj);
    auto smooth = [](double t) { return t * t * (3 - 2 * t); };
    const double a = smooth(u - fi), b = smooth(v - fj);
    const double n00 = lattice(seed, stream, i, j), n10 = lattice(seed, stream, i + 1, j);
    const double n01 = lattice(seed, stream, i, j + 1), n11 = lattice(seed, stream, i + 1, j + 1);
    return (1 - b) * ((1 - a) * n00 + a * n10) + b * ((1 - a) * n01 + a * n11);
}

double texture(std::uint64_t seed, std::uint64_t stream, double x, double y) {
    return 0.65 * value_noise(seed, stream, x, y, 14.0) + 0.35 * value_noise(seed, stream + 101, x, y, 5.0);
}

struct Placed {
    double cx, cy, scale;
};

Placed place(const ShapeSpec& s, double t) {
    return {s.cx + s.vx * t, s.cy + s.vy * t, s.size * std::pow(s.scale_rate, t)};
}

bool inside(const ShapeSpec& s, const Placed& p, double x, double y) {
    const double dx = x - p.cx, dy = y - p.cy;
    switch (s.kind) {
    case ShapeKind::circle: return dx * dx + dy * dy <= p.scale * p.scale;
    case ShapeKind::rectangle: return std::abs(dx) <= p.scale && std::abs(dy) <= p.scale * s.aspect;
    case ShapeKind::polygon: {
        bool in = false;
        const std::size_t n = s.vertices.size();
        for (std::size_t a = 0, b = n - 1; a < n; b = a++) {
            const double xa = s.vertices[a][0] * p.scale, ya = s.vertices[a][1] * p.scale;
            const double xb = s.vertices[b][0] * p.scale, yb = s.vertices[b][1] * p.scale;
            if ((ya > dy) != (yb > dy) && dx < (xb - xa) * (dy - ya) / (yb - ya) + xa) in = !in;
        }
        return in;
    }
    }
    return false;
}

// Layer hit at (x, y, t): -1 background, 0.. foreground index, -2 distractor.
int hit(const SceneConfig& cfg, double x, double y, double t) {
    for (int k = static_cast<int>(cfg.shapes.size()) - 1; k >= 0; --k)
        if (inside(cfg.shapes[k], place(cfg.shapes[k], t), x, y)) return k;
    if (cfg.distractor && inside(*cfg.distractor, place(*cfg.distractor, t), x, y)) return -2;
    return -1;
}

std::array<double, 3> shade(const SceneConfig& cfg, std::uint64_t seed, double x, double y, double t) {
    const int k = hit(cfg, x, y, t);
    std::array<double, 3> c;
    if (k == -1) {
        const double bx = x - cfg.background.drift_x * t, by = y - cfg.background.drift_y * t;
        for (int ch = 0; ch < 3; ++ch)
            c[ch] = 0.5 + cfg.background.contrast * 2 * (texture(seed ^ cfg.background.texture_seed, ch, bx, by) - 0.5);
        return c;
    }
    const ShapeSpec& s = k == -2 ? *cfg.distractor : cfg.shapes[k];
    const Placed p = place(s, t);
    // Texture lives in object coordinates so it moves and scales with the shape.
    const double u = (x - p.cx) * s.size / p.scale, v = (y - p.cy) * s.size / p.scale;
    const std::uint64_t stream = 1000 + 10 * static_cast<std::uint64_t>(k + 2);
    for (int ch = 0; ch < 3; ++ch) c[ch] = std::clamp(s.color[ch] + 0.2 * (texture(seed, stream + ch, u, v) - 0.5), 0.0, 1.0);
    return c;
}

std::array<double, 2> displacement(const ShapeSpec& s, double x, double y, double t) {
    const Placed a = place(s, t), b = place(s, t + 1);
    const double r = b.scale / a.scale;
    return {b.cx + (x - a.cx) * r - x, b.cy + (y - a.cy) * r - y};
}

SceneConfig apply_scenario(SceneConfig cfg) {
    switch (cfg.scenario) {
    case Scenario::stationary_object:
        for (auto& s : cfg.shapes) s.vx = s.vy = 0, s.scale_rate = 1;
        break;
    case Scenario::comoving_background: {
        const double vx = cfg.shapes[0].vx, vy = cfg.shapes[0].vy;
        for (auto& s : cfg.shapes) s.vx = vx, s.vy = vy, s.scale_rate = 1;
        cfg.background.drift_x = vx;
        cfg.background.drift_y = vy;
        cfg.distractor.reset();
        break;
    }
    case Scenario::normal:
    case Scenario::motion_blur:
        cfg.distractor.reset();
        break;
    case Scenario::background_mover: break;
    }
    return cfg;
}

} // namespace

VideoSample generate_sequence(const SceneConfig& input, std::uint64_t seed) {
    input.validate();
    const SceneConfig cfg = apply_scenario(input);
    const int h = cfg.height, w = cfg.width, n = cfg.frames;
    const bool blur = cfg.scenario == Scenario::motion_blur && cfg.blur_samples > 1;
    VideoSample out;
    for (int t = 0; t < n; ++t) {
        Tensor<float> frame({3, h, w}), flow({2, h, w}), mask({h, w});
        const std::int64_t plane = static_cast<std::int64_t>(h) * w;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const std::int64_t i = static_cast<std::int64_t>(y) * w + x;
                std::array<double, 3> c{0, 0, 0};
                if (blur) {
                    // Exposure spans one frame interval centred on t.
                    for (int k = 0; k < cfg.blur_samples; ++k) {
                        const double tt = t + static_cast<double>(k) / (cfg.blur_samples - 1) - 0.5;
                        const auto ck = shade(cfg, seed, x, y, tt);
                        for (int ch = 0; ch < 3; ++ch) c[ch] += ck[ch] / cfg.blur_samples;
                    }
                } else {
                    c = shade(cfg, seed, x, y, t);
                }
                for (int ch = 0; ch < 3; ++ch) frame[ch * plane + i] = static_cast<float>(c[ch]);
                const int k = hit(cfg, x, y, t);
                std::array<double, 2> d{cfg.background.drift_x, cfg.background.drift_y};
                if (k >= 0) d = displacement(cfg.shapes[k], x, y, t);
                if (k == -2) d = displacement(*cfg.distractor, x, y, t);
                flow[i] = static_cast<float>(d[0]);
                flow[plane + i] = static_cast<float>(d[1]);
                mask[i] = k >= 0 ? 1.0f : 0.0f;
            }
        const double m = max_flow_magnitude(flow);
        out.flow_rgb.push_back(flow_to_rgb(flow, m));
        out.flow_max.push_back(m);
        out.frames.push_back(std::move(frame));
        out.flow_fields.push_back(std::move(flow));
        out.masks.push_back(std::move(mask));
        out.tags.push_back(to_string(cfg.scenario));
    }
    return out;
}

SceneConfig random_scene(Scenario scenario, std::uint64_t seed, int height, int width, int frames) {
    CounterRng rng(seed, 0x5ce4e);
    SceneConfig cfg;
    cfg.height = height;
    cfg.width = width;
    cfg.frames = frames;
    cfg.scenario = scenario;
    cfg.background.texture_seed = rng.next_u64();
    cfg.background.drift_x = rng.uniform(-0.5, 0.5);
    cfg.background.drift_y = rng.uniform(-0.5, 0.5);
    const double unit = std::min(height, width) / 128.0;
    auto make_shape = [&](double hue_shift) {
        ShapeSpec s;
        s.kind = static_cast<ShapeKind>(rng.below(3));
        s.size = rng.uniform(12, 22) * unit;
        s.aspect = rng.uniform(0.6, 1.4);
        s.scale_rate = rng.uniform(0.98, 1.02);
        const double speed = rng.uniform(1.0, 2.5) * unit, ang = rng.uniform(0, 2 * std::numbers::pi);
        s.vx = speed * std::cos(ang);
        s.vy = speed * std::sin(ang);
        // Start so that the whole trajectory stays inside the frame.
        const double reach = s.size * std::pow(std::max(1.0, s.scale_rate), frames) * 1.5;
        const double span_x = std::abs(s.vx) * (frames - 1), span_y = std::abs(s.vy) * (frames - 1);
        const double lo_x = reach, hi_x = std::max(lo_x, width - reach - span_x);
        const double lo_y = reach, hi_y = std::max(lo_y, height - reach - span_y);
        s.cx = rng.uniform(lo_x, hi_x) + (s.vx < 0 ? span_x : 0);
        s.cy = rng.uniform(lo_y, hi_y) + (s.vy < 0 ? span_y : 0);
        if (s.kind == ShapeKind::polygon) {
            const int nv = 5 + static_cast<int>(rng.below(4));
            for (int v = 0; v < nv; ++v) {
                const double a = 2 * std::numbers::pi * v / nv, r = rng.uniform(0.7, 1.2);
                s.vertices.push_back({r * std::cos(a), r * std::sin(a)});
            }
        }
        const double hue = std::fmod(rng.uniform() + hue_shift, 1.0);
        for (int ch = 0; ch < 3; ++ch) {
            const double phase = hue + ch / 3.0;
            s.color[ch] = 0.5 + 0.4 * std::cos(2 * std::numbers::pi * phase);
        }
        return s;
    };
    const int count = 1 + static_cast<int>(rng.below(2));
    for (int k = 0; k < count; ++k) cfg.shapes.push_back(make_shape(0.37 * k));
    if (scenario == Scenario::background_mover) {
        // Keep the distractor's path clear of the foreground so it stays visible.
        auto clearance = [&](const ShapeSpec& d) {
            double worst = 1e9;
            for (const auto& s : cfg.shapes)
                for (int t = 0; t < frames; ++t) {
                    const double dx = (d.cx + d.vx * t) - (s.cx + s.vx * t), dy = (d.cy + d.vy * t) - (s.cy + s.vy * t);
                    worst = std::min(worst, std::hypot(dx, dy) - 1.8 * (d.size + s.size));
                }
            return worst;
        };
        ShapeSpec d;
        double best = -1e9;
        for (int attempt = 0; attempt < 32 && best < 0; ++attempt) {
            ShapeSpec cand = make_shape(0.5);
            cand.kind = ShapeKind::rectangle;
            cand.size *= 0.6;
            const double c = clearance(cand);
            if (c > best) best = c, d = cand;
        }
        for (auto& c : d.color) c = 0.5 + 0.5 * (c - 0.5);
        cfg.distractor = d;
    }
    return cfg;
}

namespace {

struct Wheel {
    std::vector<std::array<double, 3>> cols;
    Wheel() {
        const int ry = 15, yg = 6, gc = 4, cb = 11, bm = 13, mr = 6;
        for (int i = 0; i < ry; ++i) cols.push_back({255, 255.0 * i / ry, 0});
        for (int i = 0; i < yg; ++i) cols.push_back({255 - 255.0 * i / yg, 255, 0});
        for (int i = 0; i < gc; ++i) cols.push_back({0, 255, 255.0 * i / gc});
        for (int i = 0; i < cb; ++i) cols.push_back({0, 255 - 255.0 * i / cb, 255});
        for (int i = 0; i < bm; ++i) cols.push_back({255.0 * i / bm, 0, 255});
        for (int i = 0; i < mr; ++i) cols.push_back({255, 0, 255 - 255.0 * i / mr});
    }
};

const Wheel& wheel() {
    static const Wheel w;
    return w;
}

} // namespace

double max_flow_magnitude(const Tensor<float>& flow) {
    if (flow.rank() != 3 || flow.dim(0) != 2) throw DimensionError("flow must be [2,H,W], got " + shape_str(flow.shape()));
    const std::int64_t plane = flow.dim(1) * flow.dim(2);
    double m = 0;
    for (std::int64_t i = 0; i < plane; ++i) m = std::max(m, std::hypot(double(flow[i]), double(flow[plane + i])));
    return m;
}

Tensor<float> flow_to_rgb(const Tensor<float>& flow, std::optional<double> max_magnitude) {
    const double maxrad = max_magnitude.value_or(max_flow_magnitude(flow));
    const std::int64_t h = flow.dim(1), w = flow.dim(2), plane = h * w;
    const auto& cols = wheel().cols;
    const int ncols = static_cast<int>(cols.size());
    Tensor<float> out({3, h, w});
    for (std::int64_t i = 0; i < plane; ++i) {
        const double fx = flow[i], fy = flow[plane + i];
        if (!std::isfinite(fx) || !std::isfinite(fy)) throw ContractError("flow_to_rgb: non-finite flow");
        const double rad = maxrad > 0 ? std::hypot(fx, fy) / maxrad : 0.0;
        const double a = std::atan2(-fy, -fx) / std::numbers::pi;
        const double fk = (a + 1.0) / 2.0 * (ncols - 1);
        const int k0 = static_cast<int>(fk), k1 = (k0 + 1) % ncols;
        const double f = fk - k0;
        for (int b = 0; b < 3; ++b) {
            double col = ((1 - f) * cols[k0][b] + f * cols[k1][b]) / 255.0;
            col = rad <= 1 ? 1 - rad * (1 - col) : col * 0.75;
            out[b * plane + i] = static_cast<float>(col);
        }
    }
    return out;
}

nlohmann::json to_json(const SceneConfig& cfg) {
    auto shape = [](const ShapeSpec& s) {
        nlohmann::json j{{"kind", to_string(s.kind)}, {"cx", s.cx},         {"cy", s.cy},
                         {"vx", s.vx},                {"vy", s.vy},         {"size", s.size},
                         {"aspect", s.aspect},        {"scale_rate", s.scale_rate}, {"color", s.color}};
        j["vertices"] = s.vertices;
        return j;
    };
    nlohmann::json j;
    j["height"] = cfg.height;
    j["width"] = cfg.width;
    j["frames"] = cfg.frames;
    j["scenario"] = to_string(cfg.scenario);
    j["blur_samples"] = cfg.blur_samples;
    j["background"] = {{"texture_seed", cfg.background.texture_seed},
                       {"drift_x", cfg.background.drift_x},
                       {"drift_y", cfg.background.drift_y},
                       {"contrast", cfg.background.contrast}};
    j["shapes"] = nlohmann::json::array();
    for (const auto& s : cfg.shapes) j["shapes"].push_back(shape(s));
    j["distractor"] = cfg.distractor ? shape(*cfg.distractor) : nlohmann::json(nullptr);
    return j;
}

SceneConfig scene_from_json(const nlohmann::json& j) {
    auto shape = [](const nlohmann::json& s) {
        ShapeSpec o;
        o.kind = shape_kind_from_string(s.at("kind").get<std::string>());
        o.cx = s.at("cx");
        o.cy = s.at("cy");
        o.vx = s.at("vx");
        o.vy = s.at("vy");
        o.size = s.at("size");
        o.aspect = s.at("aspect");
        o.scale_rate = s.at("scale_rate");
        o.color = s.at("color").get<std::array<double, 3>>();
        o.vertices = s.at("vertices").get<std::vector<std::array<double, 2>>>();
        return o;
    };
    try {
        SceneConfig c;
        c.height = j.at("height");
        c.width = j.at("width");
        c.frames = j.at("frames");
        c.scenario = scenario_from_string(j.at("scenario").get<std::string>());
        c.blur_samples = j.at("blur_samples");
        const auto& b = j.at("background");
        c.background.texture_seed = b.at("texture_seed");
        c.background.drift_x = b.at("drift_x");
        c.background.drift_y = b.at("drift_y");
        c.background.contrast = b.at("contrast");
        for (const auto& s : j.at("shapes")) c.shapes.push_back(shape(s));
        if (!j.at("distractor").is_null()) c.distractor = shape(j.at("distractor"));
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("scene config: ") + e.what());
    }
}

std::uint8_t quantize(float x) {
    const double v = std::round(255.0 * std::clamp(static_cast<double>(x), 0.0, 1.0));
    return static_cast<std::uint8_t>(v);
}

void write_png(const std::string& path, const Tensor<float>& img) {
    cv::Mat m;
    if (img.rank() == 2) {
        m.create(static_cast<int>(img.dim(0)), static_cast<int>(img.dim(1)), CV_8UC1);
        for (std::size_t i = 0; i < img.size(); ++i) m.data[i] = quantize(img[i]);
    } else if (img.rank() == 3 && img.dim(0) == 3) {
        const std::int64_t plane = img.dim(1) * img.dim(2);
        m.create(static_cast<int>(img.dim(1)), static_cast<int>(img.dim(2)), CV_8UC3);
        for (std::int64_t i = 0; i < plane; ++i)
            for (int c = 0; c < 3; ++c) m.data[3 * i + c] = quantize(img[(2 - c) * plane + i]);  // BGR
    } else {
        throw DimensionError("write_png: expected [H,W] or [3,H,W], got " + shape_str(img.shape()));
    }
    bool ok = false;
    try {
        ok = cv::imwrite(path, m);
    } catch (const cv::Exception&) {
        ok = false;
    }
    if (!ok) throw IoError("cannot write PNG " + path);
}

namespace {

cv::Mat read_8u(const std::string& path, int channels) {
    cv::Mat m;
    try {
        m = cv::imread(path, cv::IMREAD_UNCHANGED);
    } catch (const cv::Exception&) {
        m.release();
    }
    if (m.empty()) throw IoError("cannot read PNG " + path);
    if (m.depth() != CV_8U) throw IoError("PNG is not 8-bit: " + path);
    if (m.channels() == 4) {
        cv::Mat bgr(m.rows, m.cols, CV_8UC3);
        for (int i = 0; i < m.rows * m.cols; ++i)
            for (int c = 0; c < 3; ++c) bgr.data[3 * i + c] = m.data[4 * i + c];
        m = bgr;
    }
    if (m.channels() != channels) throw IoError("PNG " + path + " has " + std::to_string(m.channels()) + " channels, expected " + std::to_string(channels));
    if (!m.isContinuous()) m = m.clone();
    return m;
}

} // namespace

Tensor<float> read_png_rgb(const std::string& path) {
    cv::Mat m = read_8u(path, 3);
    const std::int64_t h = m.rows, w = m.cols, plane = h * w;
    Tensor<float> t({3, h, w});
    for (std::int64_t i = 0; i < plane; ++i)
        for (int c = 0; c < 3; ++c) t[(2 - c) * plane + i] = m.data[3 * i + c] / 255.0f;
    return t;
}

Tensor<float> read_png_gray(const std::string& path) {
    cv::Mat m = read_8u(path, 1);
    Tensor<float> t({m.rows, m.cols});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = m.data[i] / 255.0f;
    return t;
}

namespace {

std::string frame_name(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%05zu.png", i);
    return buf;
}

} // namespace

std::vector<std::string> list_pngs(const std::string& dir) {
    std::vector<std::string> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

void write_sequence(const std::string& root, const std::string& name, const VideoSample& s, const SceneConfig& cfg,
                    std::uint64_t seed) {
    const fs::path dir = fs::path(root) / name;
    for (const char* sub : {"frames", "flows", "masks"}) fs::create_directories(dir / sub);
    for (std::size_t i = 0; i < s.frames.size(); ++i) {
        write_png((dir / "frames" / frame_name(i)).string(), s.frames[i]);
        write_png((dir / "flows" / frame_name(i)).string(), s.flow_rgb[i]);
        write_png((dir / "masks" / frame_name(i)).string(), s.masks[i]);
    }
    nlohmann::json meta{{"scene", to_json(cfg)},
                        {"seed", seed},
                        {"flow_normalization", "per_frame_max"},
                        {"flow_max", s.flow_max},
                        {"tags", s.tags}};
    std::ofstream f(dir / "meta.json");
    if (!f) throw IoError("cannot write " + (dir / "meta.json").string());
    f << meta.dump(2) << "\n";
}

SequenceData read_sequence(const std::string& dir) {
    SequenceData d;
    d.name = fs::path(dir).filename().string();
    const auto frames = list_pngs((fs::path(dir) / "frames").string()), flows = list_pngs((fs::path(dir) / "flows").string());
    const auto masks = list_pngs((fs::path(dir) / "masks").string());
    if (frames.size() != flows.size())
        throw ContractError("sequence " + dir + ": " + std::to_string(frames.size()) + " frames vs " +
                            std::to_string(flows.size()) + " flows");
    for (const auto& p : frames) d.frames.push_back(read_png_rgb(p));
    for (const auto& p : flows) d.flow_rgb.push_back(read_png_rgb(p));
    if (masks.size() == frames.size())
        for (const auto& p : masks) {
            Tensor<float> m = read_png_gray(p);
            // Any nonzero label is foreground: multi-object masks merge into one entity.
            for (auto& v : m.data()) v = v > 0.0f ? 1.0f : 0.0f;
            d.masks.push_back(std::move(m));
        }
    return d;
}

std::vector<std::string> list_sequences(const std::string& root) {
    std::vector<std::string> out;
    if (!fs::is_directory(root)) throw IoError("dataset root not found: " + root);
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && fs::is_directory(e.path() / "frames")) out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace smtc::synth
