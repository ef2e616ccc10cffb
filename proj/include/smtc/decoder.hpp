#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <type_traits>

#include "smtc/encoder.hpp"
#include "smtc/isrm.hpp"

namespace smtc {

struct DecoderConfig {
    int width = 64;  // D
    int cbam_ratio = 8;
    int spatial_kernel = 7;
    double head_bias = 0.0;  // initial logit bias of the 1x1 head
};

struct CbamIdx {
    LinearIdx fc1, fc2;  // shared channel MLP C -> C/rho -> C
    ConvIdx spatial;     // [avg, max] -> 1
};

struct DecodeLevelIdx {
    ConvIdx conv;  // 3x3 -> D
    CbamIdx cbam;
};

template <typename T>
struct DecodeOutput {
    Var<T> prob, logits;
};

template <typename T>
CbamIdx add_cbam(ParameterStore<T>& s, const Initializer& init, const std::string& name, std::int64_t c, int ratio,
                 int kernel);

// x * channel_gate, then * spatial_gate computed on the channel-gated map.
template <typename T>
Var<T> cbam(Tape<T>& t, const CbamIdx& c, Var<T> x);

class Decoder {
public:
    template <typename T>
    static Decoder build(ParameterStore<T>& store, const std::array<int, 4>& level_channels, const DecoderConfig& cfg,
                         const Initializer& init, const std::string& prefix = "dec");

    // level is 0-based (0 = finest). The deeper feature must already sit on this level's grid.
    template <typename T>
    Var<T> decode_level(Tape<T>& t, int level, Var<T> fused, const std::type_identity_t<Var<T>>* deeper) const;

    // F'_i = I_i + O_i, optional level-4 override, levels 4 -> 1, head.
    template <typename T>
    DecodeOutput<T> decode_full(Tape<T>& t, const Pyramid<T>& pyr_i, const Pyramid<T>& pyr_o,
                                const std::type_identity_t<Var<T>>* f4_override) const;

    template <typename T>
    DecodeOutput<T> head(Tape<T>& t, Var<T> f1) const;

    const DecoderConfig& config() const { return cfg_; }
    const std::array<DecodeLevelIdx, 4>& levels() const { return levels_; }
    const ConvIdx& head_conv() const { return head_; }

private:
    DecoderConfig cfg_;
    std::array<DecodeLevelIdx, 4> levels_;
    ConvIdx head_;
};

struct NetworkConfig {
    EncoderConfig encoder;
    IsrmConfig isrm;
    DecoderConfig decoder;

    // Tiny encoder, decoder width 8: sized for double-precision gradient checks at 32x32.
    static NetworkConfig tiny();
};

template <typename T>
struct TwoRoundOutput {
    DecodeOutput<T> round1, round2;
    Pyramid<T> pyr_i, pyr_o;
    Var<T> f4_fused;    // I4 + O4
    Var<T> f4_refined;  // ISRM output fed to round 2
    IsrmState<T> isrm;  // populated when ISRM is enabled
};

class Network {
public:
    template <typename T>
    static Network build(ParameterStore<T>& store, const NetworkConfig& cfg, std::uint64_t seed);

    // Pyramids are computed once and shared by both rounds.
    template <typename T>
    TwoRoundOutput<T> predict_two_round(Tape<T>& t, Var<T> image, Var<T> flow_rgb) const;

    const NetworkConfig& config() const { return cfg_; }
    const Encoder& encoder() const { return encoder_; }
    const Isrm& isrm() const { return isrm_; }
    Isrm& isrm() { return isrm_; }
    const Decoder& decoder() const { return decoder_; }

private:
    NetworkConfig cfg_;
    Encoder encoder_;
    Isrm isrm_;
    Decoder decoder_;
};

} // namespace smtc
