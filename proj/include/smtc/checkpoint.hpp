#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "smtc/config.hpp"

namespace smtc {

// A network with its own float parameter store.
class Model {
public:
    Model(const ModelConfig& cfg, std::uint64_t seed);

    // image, flow_rgb: [B,3,H,W]. Applies the configured input mode.
    TwoRoundOutput<float> forward(Tape<float>& t, const Tensor<float>& image, const Tensor<float>& flow_rgb) const;

    const ModelConfig& config() const { return cfg_; }
    std::uint64_t seed() const { return seed_; }
    const Network& network() const { return net_; }
    ParameterStore<float>& params() { return params_; }
    const ParameterStore<float>& params() const { return params_; }

private:
    ModelConfig cfg_;
    std::uint64_t seed_;
    ParameterStore<float> params_;
    Network net_;
};

// FNV-1a over names, shapes and value bytes.
std::uint64_t parameter_hash(const ParameterStore<float>& params);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    Model model;
    std::int64_t step = 0;
    std::optional<AdamWState<float>> optimizer;
};

// "SMTC", u32 version, config JSON, step, seed, parameter records, optimizer state.
// Written to a temporary file and renamed into place.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
// Throws IoError on bad magic, unknown version, truncation or a parameter table
// that does not match the model rebuilt from the stored config.
Checkpoint load_checkpoint(const std::string& path);

bool bitwise_equal(const ParameterStore<float>& a, const ParameterStore<float>& b);
bool bitwise_equal(const AdamWState<float>& a, const AdamWState<float>& b);

} // namespace smtc
