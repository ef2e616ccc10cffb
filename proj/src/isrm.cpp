#include "smtc/isrm.hpp"

namespace smtc {

const char* to_string(IsrmNormalization n) {
    return n == IsrmNormalization::shared_denominator ? "shared_denominator" : "sequential_literal";
}

IsrmNormalization isrm_normalization_from_string(const std::string& s) {
    if (s == "shared_denominator") return IsrmNormalization::shared_denominator;
    if (s == "sequential_literal") return IsrmNormalization::sequential_literal;
    throw ConfigError("unknown ISRM normalization '" + s + "' (expected shared_denominator|sequential_literal)");
}

template <typename T>
Isrm Isrm::build(ParameterStore<T>& store, std::int64_t channels, int heads, const IsrmConfig& cfg,
                 const Initializer& init, const std::string& prefix) {
    if (channels % heads != 0) throw ConfigError("isrm: channels not divisible by heads");
    if (!(cfg.fuse_eps > 0.0) || !(cfg.cosine_eps > 0.0)) throw ConfigError("isrm: eps values must be positive");
    Isrm m;
    m.cfg_ = cfg;
    m.channels_ = channels;
    const auto g = ParamGroup::isrm;
    const std::int64_t c = channels;
    m.idx_.s_embed = add_conv(store, init, prefix + ".s_embed", 1, c, 1, {}, g);
    m.idx_.enc_s = add_conv(store, init, prefix + ".enc_s", c, c, 1, {}, g);
    m.idx_.enc_io = add_conv(store, init, prefix + ".enc_io", c, c, 1, {}, g);
    m.idx_.attn_norm = add_norm(store, prefix + ".attn_norm", c, g);
    AttentionIdx& a = m.idx_.attn;
    a.heads = heads;
    a.sr_ratio = 1;
    a.q = add_linear(store, init, prefix + ".attn.q", c, c, g);
    a.k = add_linear(store, init, prefix + ".attn.k", c, c, g, false);
    a.v = add_linear(store, init, prefix + ".attn.v", c, c, g);
    a.out = add_linear(store, init, prefix + ".attn.out", c, c, g);
    return m;
}

template <typename T>
Var<T> Isrm::embed_saliency(Tape<T>& t, Var<T> s) const {
    if (s.rank() != 4 || s.dim(1) != 1 || s.dim(2) % 32 != 0 || s.dim(3) % 32 != 0 || s.dim(2) == 0 || s.dim(3) == 0)
        throw DimensionError("isrm: saliency map " + shape_str(s.shape()) + " must be [B,1,H,W], H,W divisible by 32");
    auto small = ad::resize_bilinear(s, s.dim(2) / 32, s.dim(3) / 32);
    return ad::relu(apply(t, idx_.s_embed, small));
}

template <typename T>
void Isrm::compute_keys(Tape<T>& t, Var<T> s_embed, Var<T> o4, Var<T> i4, Var<T>& s_key, Var<T>& o_key,
                        Var<T>& i_key) const {
    for (const Var<T>* v : {&o4, &i4})
        if (v->shape() != s_embed.shape())
            throw DimensionError("isrm: level-4 feature " + shape_str(v->shape()) + " does not match saliency embedding " +
                                 shape_str(s_embed.shape()));
    s_key = apply(t, idx_.enc_s, s_embed);
    o_key = apply(t, idx_.enc_io, o4);
    i_key = apply(t, idx_.enc_io, i4);
}

template <typename T>
FusedWeights<T> Isrm::fuse_weighted(Var<T> o4, Var<T> i4, Var<T> s_key, Var<T> o_key, Var<T> i_key) const {
    const T ceps = static_cast<T>(cfg_.cosine_eps), feps = static_cast<T>(cfg_.fuse_eps);
    auto c_o = ad::relu(ad::cosine_channel(s_key, o_key, ceps));
    auto c_i = ad::relu(ad::cosine_channel(s_key, i_key, ceps));
    FusedWeights<T> f;
    f.w_o = ad::div(c_o, ad::add_scalar(ad::add(c_o, c_i), feps));
    if (cfg_.normalization == IsrmNormalization::shared_denominator)
        f.w_i = ad::div(c_i, ad::add_scalar(ad::add(c_o, c_i), feps));
    else
        f.w_i = ad::div(c_i, ad::add_scalar(ad::add(f.w_o, c_i), feps));
    f.fused = ad::add(ad::mul(f.w_o, o4), ad::mul(f.w_i, i4));
    return f;
}

template <typename T>
Var<T> Isrm::refine_self_attention(Tape<T>& t, Var<T> fused, Var<T> s_embed) const {
    auto z = ad::add(fused, s_embed);
    const auto h = z.dim(2), w = z.dim(3);
    auto tok = ad::to_tokens(z);
    tok = ad::add(tok, efficient_self_attention(t, idx_.attn, apply(t, idx_.attn_norm, tok), h, w, false));
    return ad::from_tokens(tok, h, w);
}

template <typename T>
Var<T> Isrm::forward(Tape<T>& t, Var<T> i4, Var<T> o4, Var<T> s, IsrmState<T>* state) const {
    if (!cfg_.enabled) return ad::add(i4, o4);
    IsrmState<T> st;
    st.s_embed = embed_saliency(t, s);
    compute_keys(t, st.s_embed, o4, i4, st.s_key, st.o_key, st.i_key);
    auto f = fuse_weighted(o4, i4, st.s_key, st.o_key, st.i_key);
    st.w_o = f.w_o;
    st.w_i = f.w_i;
    st.fused = f.fused;
    st.refined = refine_self_attention(t, st.fused, st.s_embed);
    if (state) *state = st;
    return st.refined;
}

#define SMTC_INSTANTIATE(T)                                                                                      \
    template Isrm Isrm::build<T>(ParameterStore<T>&, std::int64_t, int, const IsrmConfig&, const Initializer&,   \
                                 const std::string&);                                                            \
    template Var<T> Isrm::embed_saliency<T>(Tape<T>&, Var<T>) const;                                             \
    template void Isrm::compute_keys<T>(Tape<T>&, Var<T>, Var<T>, Var<T>, Var<T>&, Var<T>&, Var<T>&) const;      \
    template FusedWeights<T> Isrm::fuse_weighted<T>(Var<T>, Var<T>, Var<T>, Var<T>, Var<T>) const;               \
    template Var<T> Isrm::refine_self_attention<T>(Tape<T>&, Var<T>, Var<T>) const;                              \
    template Var<T> Isrm::forward<T>(Tape<T>&, Var<T>, Var<T>, Var<T>, IsrmState<T>*) const;

SMTC_INSTANTIATE(float)
SMTC_INSTANTIATE(double)
SMTC_INSTANTIATE(long double)

} // namespace smtc
