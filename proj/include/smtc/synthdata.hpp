#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "smtc/tensor.hpp"

namespace smtc::synth {

enum class Scenario { normal, stationary_object, motion_blur, comoving_background, background_mover };
enum class ShapeKind { circle, rectangle, polygon };

const char* to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);
const char* to_string(ShapeKind k);
ShapeKind shape_kind_from_string(const std::string& s);

struct ShapeSpec {
    ShapeKind kind = ShapeKind::circle;
    double cx = 64, cy = 64;  // centre at frame 0, pixels
    double vx = 0, vy = 0;    // pixels per frame
    double size = 12;         // radius or half-width
    double aspect = 1;        // rectangle half-height / half-width
    double scale_rate = 1;    // size multiplier per frame
    std::vector<std::array<double, 2>> vertices;  // polygon, unit coordinates around the centre
    std::array<double, 3> color{0.8, 0.3, 0.2};
};

struct Background {
    std::uint64_t texture_seed = 0;
    double drift_x = 0, drift_y = 0;  // pixels per frame
    double contrast = 0.12;
};

struct SceneConfig {
    int height = 128, width = 128, frames = 8;
    std::vector<ShapeSpec> shapes;
    Background background;
    Scenario scenario = Scenario::normal;
    std::optional<ShapeSpec> distractor;  // moving shape labelled background
    int blur_samples = 7;

    void validate() const;
};

struct VideoSample {
    std::vector<Tensor<float>> frames;       // [3,H,W] in [0,1]
    std::vector<Tensor<float>> flow_fields;  // [2,H,W] (dx, dy), frame t -> t+1
    std::vector<Tensor<float>> flow_rgb;     // [3,H,W]
    std::vector<Tensor<float>> masks;        // [H,W] in {0,1}
    std::vector<double> flow_max;            // per-frame normalisation used for flow_rgb
    std::vector<std::string> tags;
};

VideoSample generate_sequence(const SceneConfig& cfg, std::uint64_t seed);

// Random scene for a scenario: 1-2 shapes kept inside the frame for all T frames.
SceneConfig random_scene(Scenario scenario, std::uint64_t seed, int height = 128, int width = 128, int frames = 8);

// Middlebury colour wheel; magnitudes normalised by max_magnitude or the field maximum.
Tensor<float> flow_to_rgb(const Tensor<float>& flow, std::optional<double> max_magnitude = {});
double max_flow_magnitude(const Tensor<float>& flow);

nlohmann::json to_json(const SceneConfig& cfg);
SceneConfig scene_from_json(const nlohmann::json& j);

// 8-bit PNG IO; v = round(255 x) on write, byte / 255 on read.
std::uint8_t quantize(float x);
void write_png(const std::string& path, const Tensor<float>& img);  // [3,H,W] RGB or [H,W] gray
Tensor<float> read_png_rgb(const std::string& path);
Tensor<float> read_png_gray(const std::string& path);

// <root>/<name>/{frames,flows,masks}/%05d.png + meta.json
void write_sequence(const std::string& root, const std::string& name, const VideoSample& s, const SceneConfig& cfg,
                    std::uint64_t seed);

struct SequenceData {
    std::string name;
    std::vector<Tensor<float>> frames, flow_rgb, masks;  // masks empty when absent
};

SequenceData read_sequence(const std::string& dir);
// Sorted *.png paths in dir; empty when dir does not exist.
std::vector<std::string> list_pngs(const std::string& dir);
// Sorted subdirectories of root that contain a frames/ directory.
std::vector<std::string> list_sequences(const std::string& root);

} // namespace smtc::synth
