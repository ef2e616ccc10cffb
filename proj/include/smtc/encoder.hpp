#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "smtc/layers.hpp"

namespace smtc {

struct StageConfig {
    int channels = 16;
    int depth = 1;
    int heads = 1;
    int reduction_ratio = 1;
    int patch_stride = 2;
    int patch_kernel = 3;
};

enum class LoraPlacement { none, mhsa, ffn, both };
enum class AttachPoint { query, key, value, attn_out, ffn_post_residual };

const char* to_string(LoraPlacement p);
LoraPlacement lora_placement_from_string(const std::string& s);
const char* to_string(AttachPoint a);

struct EncoderConfig {
    std::array<StageConfig, 4> stages{{
        {16, 1, 1, 8, 4, 7},
        {32, 1, 2, 4, 2, 3},
        {64, 2, 4, 2, 2, 3},
        {128, 1, 8, 1, 2, 3},
    }};
    int in_channels = 3;
    int rank = 8;  // 0 disables the collateral branches
    LoraPlacement placement = LoraPlacement::both;
    bool decorate_attn_out = true;

    // Channels [4,8,16,32], rank 2: small enough for exhaustive double-precision checks.
    static EncoderConfig tiny();

    // Throws ConfigError on head divisibility, stride composition, kernel parity or rank bound violations.
    void validate() const;
    bool mhsa_collateral() const;
    bool ffn_collateral() const;
};

// Low-rank pair decorating a d x k layer: delta(x) = B (A x), A [r, k], B [d, r].
struct LoraPair {
    std::size_t a = 0, b = 0;
    int rank = 0;
    std::int64_t d = 0, k = 0;
    AttachPoint attach = AttachPoint::query;
};

struct AttentionIdx {
    LinearIdx q, k, v, out;
    int heads = 1;
    int sr_ratio = 1;
    LinearIdx sr;
    NormIdx sr_norm;
    std::optional<LoraPair> lora_q, lora_k, lora_v, lora_out;
};

struct FfnIdx {
    NormIdx norm;
    LinearIdx fc1;
    ConvIdx dw;
    LinearIdx fc2;
    std::optional<LoraPair> lora_post;
};

struct BlockIdx {
    NormIdx attn_norm;
    AttentionIdx attn;
    FfnIdx ffn;
};

struct StageIdx {
    StageConfig cfg;
    ConvIdx patch;
    NormIdx patch_norm;
    std::vector<BlockIdx> blocks;
    NormIdx out_norm;
};

template <typename T>
using Pyramid = std::array<Var<T>, 4>;

template <typename T>
LoraPair add_lora(ParameterStore<T>& s, const Initializer& init, const std::string& name, std::int64_t d,
                  std::int64_t k, int rank, AttachPoint attach);

// B (A x), never materializing B A.
template <typename T>
Var<T> lora_delta(Tape<T>& t, const LoraPair& pair, Var<T> x);

// W0 x (+ b0) + B (A x).
template <typename T>
Var<T> lora_apply(Tape<T>& t, Var<T> x, Var<T> w0, const Var<T>* b0, const LoraPair& pair);

// Strided conv with padding k/2 followed by channel layernorm; returns NCHW.
template <typename T>
Var<T> overlap_patch_embed(Tape<T>& t, const StageIdx& stage, Var<T> x);

// Multi-head attention on (already normalized) tokens [B, N, C] laid out on an h x w grid.
// Keys and values come from the grid reduced by sr_ratio when it exceeds 1.
template <typename T>
Var<T> efficient_self_attention(Tape<T>& t, const AttentionIdx& a, Var<T> x, std::int64_t h, std::int64_t w,
                                bool collateral);

// x' = x + FFN(norm(x)); with collateral, x' + B A x'.
template <typename T>
Var<T> mix_ffn(Tape<T>& t, const FfnIdx& f, Var<T> x, std::int64_t h, std::int64_t w, bool collateral);

template <typename T>
Var<T> transformer_block(Tape<T>& t, const BlockIdx& b, Var<T> x, std::int64_t h, std::int64_t w, bool collateral);

class Encoder {
public:
    template <typename T>
    static Encoder build(ParameterStore<T>& store, const EncoderConfig& cfg, const Initializer& init,
                         const std::string& prefix = "enc");

    template <typename T>
    Pyramid<T> encode(Tape<T>& t, Var<T> x, bool collateral) const;
    template <typename T>
    Pyramid<T> encode_appearance(Tape<T>& t, Var<T> image) const { return encode(t, image, false); }
    template <typename T>
    Pyramid<T> encode_motion(Tape<T>& t, Var<T> flow_rgb) const { return encode(t, flow_rgb, true); }

    const EncoderConfig& config() const { return cfg_; }
    const std::array<StageIdx, 4>& stages() const { return stages_; }
    std::vector<LoraPair> lora_pairs() const;

private:
    EncoderConfig cfg_;
    std::array<StageIdx, 4> stages_;
};

struct ParameterCounts {
    std::int64_t trunk = 0;
    std::int64_t collateral = 0;
};

template <typename T>
ParameterCounts count_parameters(const ParameterStore<T>& store);

// Sum over decorated layers of r (d + k), from the configuration alone.
std::int64_t collateral_closed_form(const EncoderConfig& cfg);

} // namespace smtc
