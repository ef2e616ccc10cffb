#pragma once

#include <cstdint>
#include <string>

#include "smtc/encoder.hpp"

namespace smtc {

enum class IsrmNormalization {
    shared_denominator,  // w = c / (c_o + c_i + eps) for both streams
    sequential_literal,  // w_i uses the already-normalized w_o in its denominator
};

const char* to_string(IsrmNormalization n);
IsrmNormalization isrm_normalization_from_string(const std::string& s);

struct IsrmConfig {
    bool enabled = true;
    IsrmNormalization normalization = IsrmNormalization::shared_denominator;
    double fuse_eps = 1e-6;
    double cosine_eps = 1e-8;
};

struct IsrmIdx {
    ConvIdx s_embed;  // 1 -> C4
    ConvIdx enc_s;    // C4 -> Ck
    ConvIdx enc_io;   // C4 -> Ck, shared by both streams
    NormIdx attn_norm;
    AttentionIdx attn;
};

template <typename T>
struct IsrmState {
    Var<T> s_embed, s_key, o_key, i_key;
    Var<T> w_o, w_i;
    Var<T> fused, refined;
};

template <typename T>
struct FusedWeights {
    Var<T> w_o, w_i, fused;
};

class Isrm {
public:
    template <typename T>
    static Isrm build(ParameterStore<T>& store, std::int64_t channels, int heads, const IsrmConfig& cfg,
                      const Initializer& init, const std::string& prefix = "isrm");

    // Bilinear resize of S [B,1,H,W] to H/32 x W/32, 1x1 conv to C4, relu.
    template <typename T>
    Var<T> embed_saliency(Tape<T>& t, Var<T> s) const;

    template <typename T>
    void compute_keys(Tape<T>& t, Var<T> s_embed, Var<T> o4, Var<T> i4, Var<T>& s_key, Var<T>& o_key,
                      Var<T>& i_key) const;

    template <typename T>
    FusedWeights<T> fuse_weighted(Var<T> o4, Var<T> i4, Var<T> s_key, Var<T> o_key, Var<T> i_key) const;

    // z = fused + S'; z + MHSA(norm(z)) over the level-4 grid.
    template <typename T>
    Var<T> refine_self_attention(Tape<T>& t, Var<T> fused, Var<T> s_embed) const;

    // Returns I4 + O4 when disabled.
    template <typename T>
    Var<T> forward(Tape<T>& t, Var<T> i4, Var<T> o4, Var<T> s, IsrmState<T>* state = nullptr) const;

    const IsrmConfig& config() const { return cfg_; }
    IsrmConfig& config() { return cfg_; }
    const IsrmIdx& idx() const { return idx_; }

private:
    IsrmConfig cfg_;
    IsrmIdx idx_;
    std::int64_t channels_ = 0;
};

} // namespace smtc
