#include "smtc/encoder.hpp"

#include <cmath>

namespace smtc {

const char* to_string(LoraPlacement p) {
    switch (p) {
    case LoraPlacement::none: return "none";
    case LoraPlacement::mhsa: return "mhsa";
    case LoraPlacement::ffn: return "ffn";
    case LoraPlacement::both: return "both";
    }
    return "?";
}

LoraPlacement lora_placement_from_string(const std::string& s) {
    if (s == "none") return LoraPlacement::none;
    if (s == "mhsa") return LoraPlacement::mhsa;
    if (s == "ffn") return LoraPlacement::ffn;
    if (s == "both") return LoraPlacement::both;
    throw ConfigError("unknown collateral placement '" + s + "' (expected none|mhsa|ffn|both)");
}

const char* to_string(AttachPoint a) {
    switch (a) {
    case AttachPoint::query: return "query";
    case AttachPoint::key: return "key";
    case AttachPoint::value: return "value";
    case AttachPoint::attn_out: return "attn_out";
    case AttachPoint::ffn_post_residual: return "ffn_post_residual";
    }
    return "?";
}

EncoderConfig EncoderConfig::tiny() {
    EncoderConfig c;
    c.stages = {{{4, 1, 1, 8, 4, 7}, {8, 1, 2, 4, 2, 3}, {16, 1, 2, 2, 2, 3}, {32, 1, 4, 1, 2, 3}}};
    c.rank = 2;
    return c;
}

bool EncoderConfig::mhsa_collateral() const {
    return rank > 0 && (placement == LoraPlacement::mhsa || placement == LoraPlacement::both);
}

bool EncoderConfig::ffn_collateral() const {
    return rank > 0 && (placement == LoraPlacement::ffn || placement == LoraPlacement::both);
}

void EncoderConfig::validate() const {
    if (in_channels < 1) throw ConfigError("encoder: in_channels must be positive");
    if (rank < 0) throw ConfigError("encoder: rank must be non-negative");
    int total = 1;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const auto& s = stages[i];
        const std::string where = "encoder stage " + std::to_string(i + 1) + ": ";
        if (s.channels < 1 || s.depth < 1 || s.heads < 1 || s.reduction_ratio < 1)
            throw ConfigError(where + "channels, depth, heads and reduction_ratio must be positive");
        if (s.channels % s.heads != 0)
            throw ConfigError(where + std::to_string(s.channels) + " channels not divisible by " +
                              std::to_string(s.heads) + " heads");
        if (s.patch_kernel < 1 || s.patch_kernel % 2 == 0) throw ConfigError(where + "patch kernel must be odd");
        total *= s.patch_stride;
        if (total != (4 << i))
            throw ConfigError(where + "patch strides must compose to x" + std::to_string(4 << i) + " (got x" +
                              std::to_string(total) + ")");
        const bool decorated = mhsa_collateral() || ffn_collateral();
        if (decorated && 2 * rank > s.channels)
            throw ConfigError(where + "rank " + std::to_string(rank) + " exceeds min(d,k)/2 = " +
                              std::to_string(s.channels / 2));
    }
}

template <typename T>
LoraPair add_lora(ParameterStore<T>& s, const Initializer& init, const std::string& name, std::int64_t d,
                  std::int64_t k, int rank, AttachPoint attach) {
    if (rank < 1 || 2 * static_cast<std::int64_t>(rank) > std::min(d, k))
        throw ConfigError("collateral '" + name + "': rank " + std::to_string(rank) + " outside [1, min(d,k)/2]");
    LoraPair p;
    p.rank = rank;
    p.d = d;
    p.k = k;
    p.attach = attach;
    p.a = s.add(name + ".A", init.normal<T>(name + ".A", {rank, k}, 0.02), ParamGroup::collateral);
    p.b = s.add(name + ".B", Tensor<T>({d, rank}), ParamGroup::collateral);
    return p;
}

template <typename T>
Var<T> lora_delta(Tape<T>& t, const LoraPair& pair, Var<T> x) {
    const Var<T>* none = nullptr;
    return ad::linear(ad::linear(x, t.param(pair.a), none), t.param(pair.b), none);
}

template <typename T>
Var<T> lora_apply(Tape<T>& t, Var<T> x, Var<T> w0, const Var<T>* b0, const LoraPair& pair) {
    if (w0.rank() != 2 || w0.dim(0) != pair.d || w0.dim(1) != pair.k)
        throw DimensionError("lora_apply: base weight " + shape_str(w0.shape()) + " does not match pair " +
                             shape_str({pair.d, pair.k}));
    return ad::add(ad::linear(x, w0, b0), lora_delta(t, pair, x));
}

namespace {

template <typename T>
Var<T> project(Tape<T>& t, const LinearIdx& l, const std::optional<LoraPair>& lora, Var<T> x, bool collateral) {
    if (!collateral || !lora) return apply(t, l, x);
    if (!l.has_bias) return lora_apply(t, x, t.param(l.w), static_cast<const Var<T>*>(nullptr), *lora);
    Var<T> b = t.param(l.b);
    return lora_apply(t, x, t.param(l.w), &b, *lora);
}

// [B, N, C] -> [B*heads, N, C/heads]
template <typename T>
Var<T> split_heads(Var<T> x, int heads) {
    const auto b = x.dim(0), n = x.dim(1), c = x.dim(2);
    auto y = ad::reshape(x, {b, n, heads, c / heads});
    y = ad::permute(y, {0, 2, 1, 3});
    return ad::reshape(y, {b * heads, n, c / heads});
}

template <typename T>
Var<T> merge_heads(Var<T> x, int heads) {
    const auto bh = x.dim(0), n = x.dim(1), dh = x.dim(2);
    auto y = ad::reshape(x, {bh / heads, heads, n, dh});
    y = ad::permute(y, {0, 2, 1, 3});
    return ad::reshape(y, {bh / heads, n, heads * dh});
}

// Non-overlapping s x s patch merge: [B, N, C] on h x w -> [B, (h/s)(w/s), C*s*s].
template <typename T>
Var<T> patch_merge(Var<T> x, std::int64_t h, std::int64_t w, int s) {
    if (h % s != 0 || w % s != 0)
        throw DimensionError("spatial reduction: grid " + std::to_string(h) + "x" + std::to_string(w) +
                             " not divisible by ratio " + std::to_string(s));
    const auto b = x.dim(0), c = x.dim(2);
    auto m = ad::from_tokens(x, h, w);
    m = ad::reshape(m, {b, c, h / s, s, w / s, s});
    m = ad::permute(m, {0, 2, 4, 1, 3, 5});
    return ad::reshape(m, {b, (h / s) * (w / s), c * s * s});
}

} // namespace

template <typename T>
Var<T> overlap_patch_embed(Tape<T>& t, const StageIdx& stage, Var<T> x) {
    const int s = stage.cfg.patch_stride;
    if (x.rank() != 4 || x.dim(2) % s != 0 || x.dim(3) % s != 0)
        throw DimensionError("patch embed: input " + shape_str(x.shape()) + " not divisible by stride " +
                             std::to_string(s));
    return channel_norm(t, stage.patch_norm, apply(t, stage.patch, x));
}

template <typename T>
Var<T> efficient_self_attention(Tape<T>& t, const AttentionIdx& a, Var<T> x, std::int64_t h, std::int64_t w,
                                bool collateral) {
    if (x.rank() != 3 || x.dim(1) != h * w)
        throw DimensionError("attention: tokens " + shape_str(x.shape()) + " do not match grid " +
                             std::to_string(h) + "x" + std::to_string(w));
    if (x.dim(2) % a.heads != 0) throw ConfigError("attention: channels not divisible by heads");
    Var<T> q = project(t, a.q, a.lora_q, x, collateral);
    Var<T> kv = x;
    if (a.sr_ratio > 1) kv = apply(t, a.sr_norm, apply(t, a.sr, patch_merge(x, h, w, a.sr_ratio)));
    Var<T> k = project(t, a.k, a.lora_k, kv, collateral);
    Var<T> v = project(t, a.v, a.lora_v, kv, collateral);

    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(x.dim(2) / a.heads)));
    auto scores = ad::scale(ad::matmul_nt(split_heads(q, a.heads), split_heads(k, a.heads)), scale);
    auto attn = ad::softmax(scores, 2);
    auto o = merge_heads(ad::matmul(attn, split_heads(v, a.heads)), a.heads);
    return project(t, a.out, a.lora_out, o, collateral);
}

template <typename T>
Var<T> mix_ffn(Tape<T>& t, const FfnIdx& f, Var<T> x, std::int64_t h, std::int64_t w, bool collateral) {
    auto y = apply(t, f.fc1, apply(t, f.norm, x));
    y = ad::to_tokens(apply(t, f.dw, ad::from_tokens(y, h, w)));
    y = apply(t, f.fc2, ad::gelu(y));
    auto xp = ad::add(x, y);
    if (collateral && f.lora_post) xp = ad::add(xp, lora_delta(t, *f.lora_post, xp));
    return xp;
}

template <typename T>
Var<T> transformer_block(Tape<T>& t, const BlockIdx& b, Var<T> x, std::int64_t h, std::int64_t w, bool collateral) {
    x = ad::add(x, efficient_self_attention(t, b.attn, apply(t, b.attn_norm, x), h, w, collateral));
    return mix_ffn(t, b.ffn, x, h, w, collateral);
}

template <typename T>
Encoder Encoder::build(ParameterStore<T>& store, const EncoderConfig& cfg, const Initializer& init,
                       const std::string& prefix) {
    cfg.validate();
    Encoder e;
    e.cfg_ = cfg;
    const auto trunk = ParamGroup::trunk;
    std::int64_t in = cfg.in_channels;
    for (int i = 0; i < 4; ++i) {
        const StageConfig& sc = cfg.stages[i];
        const std::int64_t c = sc.channels;
        const std::string sp = prefix + ".s" + std::to_string(i + 1);
        StageIdx& st = e.stages_[i];
        st.cfg = sc;
        st.patch = add_conv(store, init, sp + ".patch", in, c, sc.patch_kernel,
                            {sc.patch_stride, sc.patch_kernel / 2, 1}, trunk);
        st.patch_norm = add_norm(store, sp + ".patch_norm", c, trunk);
        for (int j = 0; j < sc.depth; ++j) {
            const std::string bp = sp + ".b" + std::to_string(j + 1);
            BlockIdx b;
            b.attn_norm = add_norm(store, bp + ".attn_norm", c, trunk);
            AttentionIdx& a = b.attn;
            a.heads = sc.heads;
            a.sr_ratio = sc.reduction_ratio;
            a.q = add_linear(store, init, bp + ".attn.q", c, c, trunk);
            // A key bias shifts every score of a query equally, so softmax cancels it.
            a.k = add_linear(store, init, bp + ".attn.k", c, c, trunk, false);
            a.v = add_linear(store, init, bp + ".attn.v", c, c, trunk);
            a.out = add_linear(store, init, bp + ".attn.out", c, c, trunk);
            if (sc.reduction_ratio > 1) {
                const std::int64_t s = sc.reduction_ratio;
                a.sr = add_linear(store, init, bp + ".attn.sr", c * s * s, c, trunk, true,
                                  std::sqrt(2.0 / static_cast<double>(s * s * c)));
                a.sr_norm = add_norm(store, bp + ".attn.sr_norm", c, trunk);
            }
            if (cfg.mhsa_collateral()) {
                a.lora_q = add_lora(store, init, bp + ".lora.q", c, c, cfg.rank, AttachPoint::query);
                a.lora_k = add_lora(store, init, bp + ".lora.k", c, c, cfg.rank, AttachPoint::key);
                a.lora_v = add_lora(store, init, bp + ".lora.v", c, c, cfg.rank, AttachPoint::value);
                if (cfg.decorate_attn_out)
                    a.lora_out = add_lora(store, init, bp + ".lora.out", c, c, cfg.rank, AttachPoint::attn_out);
            }
            FfnIdx& f = b.ffn;
            f.norm = add_norm(store, bp + ".ffn_norm", c, trunk);
            f.fc1 = add_linear(store, init, bp + ".ffn.fc1", c, 4 * c, trunk);
            f.dw = add_conv(store, init, bp + ".ffn.dw", 4 * c, 4 * c, 3, {1, 1, static_cast<int>(4 * c)}, trunk);
            f.fc2 = add_linear(store, init, bp + ".ffn.fc2", 4 * c, c, trunk);
            if (cfg.ffn_collateral())
                f.lora_post = add_lora(store, init, bp + ".lora.ffn", c, c, cfg.rank, AttachPoint::ffn_post_residual);
            st.blocks.push_back(std::move(b));
        }
        st.out_norm = add_norm(store, sp + ".out_norm", c, trunk);
        in = c;
    }
    return e;
}

template <typename T>
Pyramid<T> Encoder::encode(Tape<T>& t, Var<T> x, bool collateral) const {
    if (x.rank() != 4 || x.dim(1) != cfg_.in_channels || x.dim(2) % 32 != 0 || x.dim(3) % 32 != 0 || x.dim(2) == 0 ||
        x.dim(3) == 0)
        throw DimensionError("encoder: input " + shape_str(x.shape()) + " must be [B," +
                             std::to_string(cfg_.in_channels) + ",H,W] with H,W divisible by 32");
    Pyramid<T> out;
    for (int i = 0; i < 4; ++i) {
        const StageIdx& st = stages_[i];
        auto m = overlap_patch_embed(t, st, x);
        const auto h = m.dim(2), w = m.dim(3);
        auto tok = ad::to_tokens(m);
        for (const auto& b : st.blocks) tok = transformer_block(t, b, tok, h, w, collateral);
        x = ad::from_tokens(apply(t, st.out_norm, tok), h, w);
        out[i] = x;
    }
    return out;
}

std::vector<LoraPair> Encoder::lora_pairs() const {
    std::vector<LoraPair> v;
    for (const auto& st : stages_)
        for (const auto& b : st.blocks)
            for (const auto* p : {&b.attn.lora_q, &b.attn.lora_k, &b.attn.lora_v, &b.attn.lora_out, &b.ffn.lora_post})
                if (*p) v.push_back(**p);
    return v;
}

template <typename T>
ParameterCounts count_parameters(const ParameterStore<T>& store) {
    return {store.count(ParamGroup::trunk), store.count(ParamGroup::collateral)};
}

std::int64_t collateral_closed_form(const EncoderConfig& cfg) {
    std::int64_t total = 0;
    for (const auto& s : cfg.stages) {
        int layers = 0;
        if (cfg.mhsa_collateral()) layers += cfg.decorate_attn_out ? 4 : 3;
        if (cfg.ffn_collateral()) layers += 1;
        total += static_cast<std::int64_t>(s.depth) * layers * cfg.rank * (2 * s.channels);
    }
    return total;
}

#define SMTC_INSTANTIATE(T)                                                                                         \
    template LoraPair add_lora<T>(ParameterStore<T>&, const Initializer&, const std::string&, std::int64_t,         \
                                  std::int64_t, int, AttachPoint);                                                  \
    template Var<T> lora_delta<T>(Tape<T>&, const LoraPair&, Var<T>);                                               \
    template Var<T> lora_apply<T>(Tape<T>&, Var<T>, Var<T>, const Var<T>*, const LoraPair&);                        \
    template Var<T> overlap_patch_embed<T>(Tape<T>&, const StageIdx&, Var<T>);                                      \
    template Var<T> efficient_self_attention<T>(Tape<T>&, const AttentionIdx&, Var<T>, std::int64_t, std::int64_t, \
                                                bool);                                                              \
    template Var<T> mix_ffn<T>(Tape<T>&, const FfnIdx&, Var<T>, std::int64_t, std::int64_t, bool);                  \
    template Var<T> transformer_block<T>(Tape<T>&, const BlockIdx&, Var<T>, std::int64_t, std::int64_t, bool);      \
    template Encoder Encoder::build<T>(ParameterStore<T>&, const EncoderConfig&, const Initializer&,                \
                                       const std::string&);                                                         \
    template Pyramid<T> Encoder::encode<T>(Tape<T>&, Var<T>, bool) const;                                           \
    template ParameterCounts count_parameters<T>(const ParameterStore<T>&);

SMTC_INSTANTIATE(float)
SMTC_INSTANTIATE(double)
SMTC_INSTANTIATE(long double)

} // namespace smtc
