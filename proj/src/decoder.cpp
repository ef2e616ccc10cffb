#include "smtc/decoder.hpp"

#include <cmath>

namespace smtc {

template <typename T>
CbamIdx add_cbam(ParameterStore<T>& s, const Initializer& init, const std::string& name, std::int64_t c, int ratio,
                 int kernel) {
    if (ratio < 1 || c % ratio != 0)
        throw ConfigError("cbam: " + std::to_string(c) + " channels not divisible by ratio " + std::to_string(ratio));
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("cbam: spatial kernel must be odd");
    CbamIdx cb;
    const auto g = ParamGroup::decoder;
    cb.fc1 = add_linear(s, init, name + ".fc1", c, c / ratio, g, true, std::sqrt(2.0 / static_cast<double>(c)));
    cb.fc2 = add_linear(s, init, name + ".fc2", c / ratio, c, g, true,
                        std::sqrt(2.0 / static_cast<double>(c / ratio)));
    cb.spatial = add_conv(s, init, name + ".spatial", 2, 1, kernel, {1, kernel / 2, 1}, g);
    return cb;
}

template <typename T>
Var<T> cbam(Tape<T>& t, const CbamIdx& c, Var<T> x) {
    const auto b = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
    auto flat = ad::reshape(x, {b, ch, h * w});
    auto mlp = [&](Var<T> v) { return apply(t, c.fc2, ad::relu(apply(t, c.fc1, v))); };
    auto gate = ad::sigmoid(ad::add(mlp(ad::mean(flat, 2, false)), mlp(ad::max(flat, 2, false))));
    auto xc = ad::mul(x, ad::reshape(gate, {b, ch, 1, 1}));
    auto pooled = ad::concat_channels(ad::mean(xc, 1, true), ad::max(xc, 1, true));
    return ad::mul(xc, ad::sigmoid(apply(t, c.spatial, pooled)));
}

template <typename T>
Decoder Decoder::build(ParameterStore<T>& store, const std::array<int, 4>& level_channels, const DecoderConfig& cfg,
                       const Initializer& init, const std::string& prefix) {
    if (cfg.width < 1) throw ConfigError("decoder: width must be positive");
    Decoder d;
    d.cfg_ = cfg;
    const auto g = ParamGroup::decoder;
    for (int i = 0; i < 4; ++i) {
        const std::string lp = prefix + ".l" + std::to_string(i + 1);
        const std::int64_t in = level_channels[i] + (i < 3 ? cfg.width : 0);
        d.levels_[i].conv = add_conv(store, init, lp + ".conv", in, cfg.width, 3, {1, 1, 1}, g);
        d.levels_[i].cbam = add_cbam(store, init, lp + ".cbam", cfg.width, cfg.cbam_ratio, cfg.spatial_kernel);
    }
    d.head_ = add_conv(store, init, prefix + ".head", cfg.width, 1, 1, {}, g);
    store[d.head_.b].value.fill(static_cast<T>(cfg.head_bias));
    return d;
}

template <typename T>
Var<T> Decoder::decode_level(Tape<T>& t, int level, Var<T> fused, const std::type_identity_t<Var<T>>* deeper) const {
    if (level < 0 || level > 3) throw DimensionError("decoder: level out of range");
    if ((level == 3) != (deeper == nullptr))
        throw DimensionError("decoder: only the deepest level decodes without a deeper feature");
    Var<T> x = fused;
    if (deeper) {
        if (deeper->dim(2) != fused.dim(2) || deeper->dim(3) != fused.dim(3))
            throw DimensionError("decoder: deeper feature " + shape_str(deeper->shape()) + " not on level grid " +
                                 shape_str(fused.shape()));
        x = ad::concat_channels(fused, *deeper);
    }
    auto y = cbam(t, levels_[level].cbam, ad::relu(apply(t, levels_[level].conv, x)));
    return ad::resize_bilinear(y, 2 * y.dim(2), 2 * y.dim(3));
}

template <typename T>
DecodeOutput<T> Decoder::head(Tape<T>& t, Var<T> f1) const {
    auto l = apply(t, head_, f1);
    DecodeOutput<T> out;
    out.logits = ad::resize_bilinear(l, 2 * l.dim(2), 2 * l.dim(3));
    out.prob = ad::sigmoid(out.logits);
    return out;
}

template <typename T>
DecodeOutput<T> Decoder::decode_full(Tape<T>& t, const Pyramid<T>& pyr_i, const Pyramid<T>& pyr_o,
                                     const std::type_identity_t<Var<T>>* f4_override) const {
    Var<T> f = decode_level(t, 3, f4_override ? *f4_override : ad::add(pyr_i[3], pyr_o[3]), nullptr);
    for (int i = 2; i >= 0; --i) f = decode_level(t, i, ad::add(pyr_i[i], pyr_o[i]), &f);
    return head(t, f);
}

NetworkConfig NetworkConfig::tiny() {
    NetworkConfig c;
    c.encoder = EncoderConfig::tiny();
    c.decoder.width = 8;
    c.decoder.cbam_ratio = 4;
    return c;
}

template <typename T>
Network Network::build(ParameterStore<T>& store, const NetworkConfig& cfg, std::uint64_t seed) {
    Initializer init(seed);
    Network n;
    n.cfg_ = cfg;
    n.encoder_ = Encoder::build(store, cfg.encoder, init);
    const auto& s4 = cfg.encoder.stages[3];
    n.isrm_ = Isrm::build(store, s4.channels, s4.heads, cfg.isrm, init);
    std::array<int, 4> ch;
    for (int i = 0; i < 4; ++i) ch[i] = cfg.encoder.stages[i].channels;
    n.decoder_ = Decoder::build(store, ch, cfg.decoder, init);
    return n;
}

template <typename T>
TwoRoundOutput<T> Network::predict_two_round(Tape<T>& t, Var<T> image, Var<T> flow_rgb) const {
    if (image.shape() != flow_rgb.shape())
        throw DimensionError("predict: image " + shape_str(image.shape()) + " and flow " +
                             shape_str(flow_rgb.shape()) + " differ");
    TwoRoundOutput<T> out;
    out.pyr_i = encoder_.encode_appearance(t, image);
    out.pyr_o = encoder_.encode_motion(t, flow_rgb);
    out.round1 = decoder_.decode_full(t, out.pyr_i, out.pyr_o, nullptr);
    out.f4_fused = ad::add(out.pyr_i[3], out.pyr_o[3]);
    out.f4_refined = isrm_.forward(t, out.pyr_i[3], out.pyr_o[3], out.round1.prob, &out.isrm);
    out.round2 = decoder_.decode_full(t, out.pyr_i, out.pyr_o, &out.f4_refined);
    return out;
}

#define SMTC_INSTANTIATE(T)                                                                                         \
    template CbamIdx add_cbam<T>(ParameterStore<T>&, const Initializer&, const std::string&, std::int64_t, int,     \
                                 int);                                                                              \
    template Var<T> cbam<T>(Tape<T>&, const CbamIdx&, Var<T>);                                                      \
    template Decoder Decoder::build<T>(ParameterStore<T>&, const std::array<int, 4>&, const DecoderConfig&,         \
                                       const Initializer&, const std::string&);                                     \
    template Var<T> Decoder::decode_level<T>(Tape<T>&, int, Var<T>, const Var<T>*) const;                           \
    template DecodeOutput<T> Decoder::head<T>(Tape<T>&, Var<T>) const;                                              \
    template DecodeOutput<T> Decoder::decode_full<T>(Tape<T>&, const Pyramid<T>&, const Pyramid<T>&,                \
                                                     const Var<T>*) const;                                          \
    template Network Network::build<T>(ParameterStore<T>&, const NetworkConfig&, std::uint64_t);                    \
    template TwoRoundOutput<T> Network::predict_two_round<T>(Tape<T>&, Var<T>, Var<T>) const;

SMTC_INSTANTIATE(float)
SMTC_INSTANTIATE(double)
SMTC_INSTANTIATE(long double)

} // namespace smtc
