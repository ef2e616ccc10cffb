#include "smtc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace smtc {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
    cfg_.validate();
    net_ = Network::build(params_, cfg_.network(), seed);
}

TwoRoundOutput<float> Model::forward(Tape<float>& t, const Tensor<float>& image, const Tensor<float>& flow_rgb) const {
    if (image.rank() != 4 || image.dim(2) != cfg_.height || image.dim(3) != cfg_.width)
        throw DimensionError("model expects [B,3," + std::to_string(cfg_.height) + "," + std::to_string(cfg_.width) +
                             "], got " + shape_str(image.shape()));
    const Tensor<float>* img = &image;
    const Tensor<float>* flo = &flow_rgb;
    Tensor<float> zeros;
    if (cfg_.input_mode != InputMode::both) {
        const Tensor<float>& present = cfg_.input_mode == InputMode::flow_only ? flow_rgb : image;
        const Tensor<float>* other = &present;
        if (cfg_.absent_stream == AbsentStream::zero) {
            zeros = Tensor<float>(present.shape());
            other = &zeros;
        }
        img = cfg_.input_mode == InputMode::image_only ? &present : other;
        flo = cfg_.input_mode == InputMode::flow_only ? &present : other;
    }
    return net_.predict_two_round(t, t.input(*img), t.input(*flo));
}

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;

std::uint64_t fnv(std::uint64_t h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ p[i]) * 1099511628211ull;
    return h;
}

class Writer {
public:
    void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    template <typename V>
    void pod(V v) {
        bytes(&v, sizeof v);
    }
    void str(const std::string& s) {
        pod(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void tensor(const std::string& name, const Tensor<float>& t) {
        str(name);
        pod(static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) pod(static_cast<std::int64_t>(d));
        pod(static_cast<std::uint8_t>(precision_of<float>()));
        bytes(t.storage().data(), t.size() * sizeof(float));
    }
    const std::string& data() const { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(std::string data, std::string path) : buf_(std::move(data)), path_(std::move(path)) {}
    void bytes(void* p, std::size_t n) {
        if (n > buf_.size() - pos_) throw IoError(path_ + ": truncated checkpoint");
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    template <typename V>
    V pod() {
        V v;
        bytes(&v, sizeof v);
        return v;
    }
    std::string str() {
        const auto n = pod<std::uint32_t>();
        if (n > buf_.size() - pos_) throw IoError(path_ + ": truncated checkpoint");
        std::string s(buf_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    std::pair<std::string, Tensor<float>> tensor() {
        std::string name = str();
        const auto rank = pod<std::uint32_t>();
        if (rank > 8) throw IoError(path_ + ": bad rank for " + name);
        Shape shape(rank);
        for (auto& d : shape) {
            d = pod<std::int64_t>();
            if (d < 0) throw IoError(path_ + ": bad shape for " + name);
        }
        const auto prec = pod<std::uint8_t>();
        if (prec != static_cast<std::uint8_t>(precision_of<float>()))
            throw IoError(path_ + ": " + name + " is not stored in single precision");
        const auto n = static_cast<std::size_t>(numel(shape));
        if (n > (buf_.size() - pos_) / sizeof(float)) throw IoError(path_ + ": truncated checkpoint");
        std::vector<float> v(n);
        bytes(v.data(), n * sizeof(float));
        return {std::move(name), Tensor<float>(std::move(shape), std::move(v))};
    }
    bool done() const { return pos_ == buf_.size(); }
    const std::string& path() const { return path_; }

private:
    std::string buf_;
    std::size_t pos_ = 0;
    std::string path_;
};

void read_into(Reader& r, const ParameterStore<float>& layout, std::vector<Tensor<float>>& out,
               const std::string& prefix) {
    const auto n = r.pod<std::uint32_t>();
    if (n != layout.size())
        throw IoError(r.path() + ": " + std::to_string(n) + " records, model has " + std::to_string(layout.size()));
    out.clear();
    for (std::size_t i = 0; i < n; ++i) {
        auto [name, t] = r.tensor();
        if (name != prefix + layout[i].name) throw IoError(r.path() + ": unexpected record " + name);
        if (t.shape() != layout[i].value.shape())
            throw IoError(r.path() + ": shape mismatch for " + name + ": " + shape_str(t.shape()));
        out.push_back(std::move(t));
    }
}

} // namespace

std::uint64_t parameter_hash(const ParameterStore<float>& params) {
    std::uint64_t h = kFnvOffset;
    for (const auto& p : params) {
        h = fnv(h, p.name.data(), p.name.size());
        for (auto d : p.value.shape()) h = fnv(h, &d, sizeof d);
        h = fnv(h, p.value.storage().data(), p.value.size() * sizeof(float));
    }
    return h;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    Writer w;
    w.bytes("SMTC", 4);
    w.pod(kCheckpointVersion);
    w.str(to_json(ckpt.model.config()).dump());
    w.pod(static_cast<std::int64_t>(ckpt.step));
    w.pod(static_cast<std::uint64_t>(ckpt.model.seed()));
    const auto& params = ckpt.model.params();
    w.pod(static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) w.tensor(p.name, p.value);
    w.pod(static_cast<std::uint8_t>(ckpt.optimizer.has_value()));
    if (ckpt.optimizer) {
        const auto& o = *ckpt.optimizer;
        if (o.first_moment.size() != params.size() || o.second_moment.size() != params.size())
            throw ContractError("checkpoint: optimizer state does not match the parameter table");
        w.pod(static_cast<std::int64_t>(o.step_count));
        for (double v : {o.hp.lr, o.hp.beta1, o.hp.beta2, o.hp.eps, o.hp.weight_decay}) w.pod(v);
        w.pod(static_cast<std::uint32_t>(params.size()));
        for (std::size_t i = 0; i < params.size(); ++i) w.tensor("m/" + params[i].name, o.first_moment[i]);
        w.pod(static_cast<std::uint32_t>(params.size()));
        for (std::size_t i = 0; i < params.size(); ++i) w.tensor("v/" + params[i].name, o.second_moment[i]);
    }

    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write " + tmp.string());
        f.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
        if (!f) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint " + path);
    std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r(std::move(data), path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, "SMTC", 4) != 0) throw IoError(path + ": not a checkpoint (bad magic)");
    const auto version = r.pod<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
    ModelConfig cfg;
    try {
        cfg = model_config_from_json(nlohmann::json::parse(r.str()));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": bad config snapshot: " + e.what());
    }
    const auto step = r.pod<std::int64_t>();
    const auto seed = r.pod<std::uint64_t>();
    Checkpoint ck{Model(cfg, seed), step, std::nullopt};
    auto& params = ck.model.params();
    std::vector<Tensor<float>> values;
    read_into(r, params, values, "");
    for (std::size_t i = 0; i < params.size(); ++i) params[i].value = std::move(values[i]);
    if (r.pod<std::uint8_t>()) {
        AdamWState<float> o;
        o.step_count = r.pod<std::int64_t>();
        o.hp.lr = r.pod<double>();
        o.hp.beta1 = r.pod<double>();
        o.hp.beta2 = r.pod<double>();
        o.hp.eps = r.pod<double>();
        o.hp.weight_decay = r.pod<double>();
        read_into(r, params, o.first_moment, "m/");
        read_into(r, params, o.second_moment, "v/");
        ck.optimizer = std::move(o);
    }
    if (!r.done()) throw IoError(path + ": trailing bytes after checkpoint");
    return ck;
}

bool bitwise_equal(const ParameterStore<float>& a, const ParameterStore<float>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].name != b[i].name || a[i].group != b[i].group || !a[i].value.bitwise_equal(b[i].value)) return false;
    return true;
}

bool bitwise_equal(const AdamWState<float>& a, const AdamWState<float>& b) {
    if (a.step_count != b.step_count || a.first_moment.size() != b.first_moment.size() ||
        a.second_moment.size() != b.second_moment.size())
        return false;
    if (std::memcmp(&a.hp, &b.hp, sizeof a.hp) != 0) return false;
    for (std::size_t i = 0; i < a.first_moment.size(); ++i)
        if (!a.first_moment[i].bitwise_equal(b.first_moment[i]) || !a.second_moment[i].bitwise_equal(b.second_moment[i]))
            return false;
    return true;
}

} // namespace smtc
