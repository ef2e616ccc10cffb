#include "smtc/config.hpp"

#include <fstream>
#include <set>

namespace smtc {

using nlohmann::json;

const char* to_string(InputMode m) {
    switch (m) {
    case InputMode::both: return "both";
    case InputMode::flow_only: return "flow_only";
    case InputMode::image_only: return "image_only";
    }
    return "?";
}

InputMode input_mode_from_string(const std::string& s) {
    for (auto m : {InputMode::both, InputMode::flow_only, InputMode::image_only})
        if (s == to_string(m)) return m;
    throw ConfigError("unknown input mode '" + s + "'");
}

const char* to_string(AbsentStream a) { return a == AbsentStream::zero ? "zero" : "duplicate"; }

AbsentStream absent_stream_from_string(const std::string& s) {
    if (s == "duplicate") return AbsentStream::duplicate;
    if (s == "zero") return AbsentStream::zero;
    throw ConfigError("unknown absent-stream mode '" + s + "'");
}

void ModelConfig::validate() const {
    if (height <= 0 || width <= 0 || height % 32 != 0 || width % 32 != 0)
        throw ConfigError("config: input size " + std::to_string(height) + "x" + std::to_string(width) +
                          " must be positive multiples of 32");
    encoder.validate();
    loss.validate();
    if (decoder.width <= 0 || decoder.cbam_ratio <= 0 || decoder.width % decoder.cbam_ratio != 0)
        throw ConfigError("config: decoder width must be a positive multiple of cbam_ratio");
    if (decoder.spatial_kernel <= 0 || decoder.spatial_kernel % 2 == 0)
        throw ConfigError("config: spatial_kernel must be odd");
    if (!(isrm.fuse_eps > 0) || !(isrm.cosine_eps > 0)) throw ConfigError("config: isrm eps values must be positive");
    if (!(train.lr > 0) || train.batch <= 0 || train.weight_decay < 0 || !(train.eps > 0) || !(train.beta1 >= 0) ||
        !(train.beta1 < 1) || !(train.beta2 >= 0) || !(train.beta2 < 1))
        throw ConfigError("config: invalid training hyperparameters");
}

ModelConfig ModelConfig::preset(const std::string& name) {
    ModelConfig c;
    if (name == "default") {
        c.decoder.head_bias = -2.0;
        c.decoder.width = 128;
    } else if (name == "tiny" || name == "smoke") {
        NetworkConfig n = NetworkConfig::tiny();
        c.encoder = n.encoder;
        c.decoder = n.decoder;
        c.height = c.width = name == "tiny" ? 32 : 64;
        c.train.batch = 2;
    } else {
        throw ConfigError("unknown preset '" + name + "'");
    }
    return c;
}

namespace {

// Tracks consumed keys so leftovers can be reported as unknown.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    const json& raw(const std::string& key) {
        auto it = j_.find(key);
        if (it == j_.end()) throw ConfigError(path_ + "." + key + ": missing key");
        seen_.insert(key);
        return *it;
    }

    template <typename V>
    V get(const std::string& key) {
        const json& v = raw(key);
        if constexpr (std::is_same_v<V, bool>) {
            if (!v.is_boolean()) throw ConfigError(path_ + "." + key + ": expected a boolean");
        } else if constexpr (std::is_integral_v<V>) {
            if (!v.is_number_integer()) throw ConfigError(path_ + "." + key + ": expected an integer");
        } else if constexpr (std::is_floating_point_v<V>) {
            if (!v.is_number()) throw ConfigError(path_ + "." + key + ": expected a number");
        } else {
            if (!v.is_string()) throw ConfigError(path_ + "." + key + ": expected a string");
        }
        return v.get<V>();
    }

    Reader child(const std::string& key) { return Reader(raw(key), path_ + "." + key); }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(path_ + "." + it.key() + ": unknown key");
    }

    const std::string& path() const { return path_; }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

json stage_json(const StageConfig& s) {
    return {{"channels", s.channels},           {"depth", s.depth},
            {"heads", s.heads},                 {"reduction_ratio", s.reduction_ratio},
            {"patch_stride", s.patch_stride},   {"patch_kernel", s.patch_kernel}};
}

} // namespace

json to_json(const ModelConfig& c) {
    json stages = json::array();
    for (const auto& s : c.encoder.stages) stages.push_back(stage_json(s));
    const auto& l = c.loss;
    return {
        {"height", c.height},
        {"width", c.width},
        {"encoder",
         {{"stages", stages},
          {"in_channels", c.encoder.in_channels},
          {"rank", c.encoder.rank},
          {"placement", to_string(c.encoder.placement)},
          {"decorate_attn_out", c.encoder.decorate_attn_out}}},
        {"decoder",
         {{"width", c.decoder.width},
          {"cbam_ratio", c.decoder.cbam_ratio},
          {"spatial_kernel", c.decoder.spatial_kernel},
          {"head_bias", c.decoder.head_bias}}},
        {"isrm",
         {{"enabled", c.isrm.enabled},
          {"normalization", to_string(c.isrm.normalization)},
          {"fuse_eps", c.isrm.fuse_eps},
          {"cosine_eps", c.isrm.cosine_eps}}},
        {"loss",
         {{"alpha", l.alpha},
          {"beta", l.beta},
          {"gamma", l.gamma},
          {"omega", l.omega},
          {"focal_gamma", l.focal_gamma},
          {"focal_alpha", l.focal_alpha},
          {"focal_class_balance", l.focal_class_balance},
          {"dice_eps", l.dice_eps}}},
        {"train",
         {{"lr", c.train.lr},
          {"batch", c.train.batch},
          {"weight_decay", c.train.weight_decay},
          {"beta1", c.train.beta1},
          {"beta2", c.train.beta2},
          {"eps", c.train.eps}}},
        {"inputs", {{"mode", to_string(c.input_mode)}, {"absent_stream", to_string(c.absent_stream)}}},
    };
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    Reader r(j, "config");
    c.height = r.get<int>("height");
    c.width = r.get<int>("width");
    {
        Reader e = r.child("encoder");
        const json& stages = e.raw("stages");
        if (!stages.is_array() || stages.size() != 4) throw ConfigError("config.encoder.stages: expected 4 stages");
        for (int i = 0; i < 4; ++i) {
            Reader s(stages[i], "config.encoder.stages[" + std::to_string(i) + "]");
            auto& st = c.encoder.stages[i];
            st.channels = s.get<int>("channels");
            st.depth = s.get<int>("depth");
            st.heads = s.get<int>("heads");
            st.reduction_ratio = s.get<int>("reduction_ratio");
            st.patch_stride = s.get<int>("patch_stride");
            st.patch_kernel = s.get<int>("patch_kernel");
            s.finish();
        }
        c.encoder.in_channels = e.get<int>("in_channels");
        c.encoder.rank = e.get<int>("rank");
        c.encoder.placement = lora_placement_from_string(e.get<std::string>("placement"));
        c.encoder.decorate_attn_out = e.get<bool>("decorate_attn_out");
        e.finish();
    }
    {
        Reader d = r.child("decoder");
        c.decoder.width = d.get<int>("width");
        c.decoder.cbam_ratio = d.get<int>("cbam_ratio");
        c.decoder.spatial_kernel = d.get<int>("spatial_kernel");
        c.decoder.head_bias = d.get<double>("head_bias");
        d.finish();
    }
    {
        Reader i = r.child("isrm");
        c.isrm.enabled = i.get<bool>("enabled");
        c.isrm.normalization = isrm_normalization_from_string(i.get<std::string>("normalization"));
        c.isrm.fuse_eps = i.get<double>("fuse_eps");
        c.isrm.cosine_eps = i.get<double>("cosine_eps");
        i.finish();
    }
    {
        Reader l = r.child("loss");
        c.loss.alpha = l.get<double>("alpha");
        c.loss.beta = l.get<double>("beta");
        c.loss.gamma = l.get<double>("gamma");
        c.loss.omega = l.get<double>("omega");
        c.loss.focal_gamma = l.get<double>("focal_gamma");
        c.loss.focal_alpha = l.get<double>("focal_alpha");
        c.loss.focal_class_balance = l.get<bool>("focal_class_balance");
        c.loss.dice_eps = l.get<double>("dice_eps");
        l.finish();
    }
    {
        Reader t = r.child("train");
        c.train.lr = t.get<double>("lr");
        c.train.batch = t.get<int>("batch");
        c.train.weight_decay = t.get<double>("weight_decay");
        c.train.beta1 = t.get<double>("beta1");
        c.train.beta2 = t.get<double>("beta2");
        c.train.eps = t.get<double>("eps");
        t.finish();
    }
    {
        Reader in = r.child("inputs");
        c.input_mode = input_mode_from_string(in.get<std::string>("mode"));
        c.absent_stream = absent_stream_from_string(in.get<std::string>("absent_stream"));
        in.finish();
    }
    r.finish();
    c.validate();
    return c;
}

ModelConfig load_model_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return model_config_from_json(j);
}

void save_model_config(const std::string& path, const ModelConfig& c) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write config " + path);
    f << to_json(c).dump(2) << "\n";
}

} // namespace smtc
