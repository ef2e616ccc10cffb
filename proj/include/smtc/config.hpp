#pragma once

#include <string>

#include "json.hpp"
#include "smtc/decoder.hpp"
#include "smtc/objective.hpp"
#include "smtc/optim.hpp"

namespace smtc {

// Which streams reach the two encoder paths. A single-input mode feeds the
// present stream to both paths (or zeros to the absent one).
enum class InputMode { both, flow_only, image_only };
enum class AbsentStream { duplicate, zero };

const char* to_string(InputMode m);
InputMode input_mode_from_string(const std::string& s);
const char* to_string(AbsentStream a);
AbsentStream absent_stream_from_string(const std::string& s);

struct TrainConfig {
    double lr = 1e-4;
    int batch = 4;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    AdamWConfig adamw() const { return {lr, beta1, beta2, eps, weight_decay}; }
};

struct ModelConfig {
    EncoderConfig encoder;
    DecoderConfig decoder;
    IsrmConfig isrm;
    LossWeights loss;
    TrainConfig train;
    int height = 128;
    int width = 128;
    InputMode input_mode = InputMode::both;
    AbsentStream absent_stream = AbsentStream::duplicate;

    // Throws ConfigError; H and W must be multiples of 32.
    void validate() const;
    NetworkConfig network() const { return {encoder, isrm, decoder}; }

    // "default" (128x128), "tiny" (32x32, double-precision checks), "smoke" (64x64, fast CLI runs).
    static ModelConfig preset(const std::string& name);
};

// Every field is written; reading rejects missing and unknown keys.
nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
ModelConfig load_model_config(const std::string& path);
void save_model_config(const std::string& path, const ModelConfig& c);

} // namespace smtc
