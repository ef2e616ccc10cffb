#include "smtc/gradcheck_suite.hpp"

#include <algorithm>
#include <functional>

#include "smtc/decoder.hpp"
#include "smtc/gradcheck.hpp"
#include "smtc/objective.hpp"
#include "smtc/rng.hpp"

namespace smtc {

namespace {

using TD = Tensor<double>;

TD uniform(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    TD t(std::move(shape));
    CounterRng rng(seed, 0x9c4e);
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

TD binary(Shape shape, std::uint64_t seed) {
    TD t(std::move(shape));
    CounterRng rng(seed, 0xb1a);
    for (auto& v : t.data()) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    return t;
}

// Target cast to the tape's precision.
template <typename T>
Tensor<T> as(const Tape<T>&, const TD& x) {
    return x.cast<T>();
}

struct Component {
    std::string name;
    std::function<GradcheckRow(const GradcheckSuiteOptions&)> run;
};

// Runs probes over opts.seeds seeds and folds them into one row.
template <typename Body>
GradcheckRow sweep(const std::string& name, const GradcheckSuiteOptions& o, Body body) {
    GradcheckRow row;
    row.component = name;
    for (int seed = 0; seed < o.seeds; ++seed) {
        auto check = [&](const ScalarFn& fn, std::vector<TD> inputs, ParameterStore<double>* store,
                         GradcheckOptions g) {
            g.seed = static_cast<std::uint64_t>(seed);
            if (o.tamper == name)
                g.tamper = [](std::vector<TD>& grads) {
                    for (auto& t : grads)
                        for (auto& v : t.data()) v = -v;
                };
            GradcheckResult r = gradcheck(fn, std::move(inputs), store, g);
            row.coords += r.coords_checked;
            if (r.max_rel_error >= row.max_rel_error) {
                row.max_rel_error = r.max_rel_error;
                row.worst = "seed " + std::to_string(seed) + " " + r.worst;
            }
        };
        body(static_cast<std::uint64_t>(seed), check);
    }
    row.pass = row.max_rel_error <= o.tolerance;
    return row;
}

GradcheckRow lora_component(const GradcheckSuiteOptions& o) {
    return sweep("lora_apply", o, [](std::uint64_t seed, auto check) {
        ParameterStore<double> s;
        LoraPair pair = add_lora(s, Initializer(3), "lora", 6, 5, 2, AttachPoint::query);
        randomize_for_gradcheck(s, seed);
        const TD w = uniform({3, 6}, seed + 100);
        ScalarFn fn = [&](auto& t, const auto& v) {
            return ad::sum_all(ad::mul(lora_apply(t, v[0], v[1], &v[2], pair), lift(t, w)));
        };
        check(fn, {uniform({3, 5}, seed), uniform({6, 5}, seed + 1), uniform({6}, seed + 2)}, &s, GradcheckOptions{});
    });
}

GradcheckRow attention_component(const GradcheckSuiteOptions& o) {
    return sweep("efficient_self_attention", o, [](std::uint64_t seed, auto check) {
        ParameterStore<double> s;
        Encoder e = Encoder::build(s, EncoderConfig::tiny(), Initializer(5));
        randomize_for_gradcheck(s, seed);
        // 16 channels, 2 heads, reduction 2 on a 4x4 grid.
        const AttentionIdx& a = e.stages()[2].blocks[0].attn;
        const TD w = uniform({1, 16, 16}, seed + 200);
        ScalarFn fn = [&](auto& t, const auto& v) {
            return ad::sum_all(ad::mul(efficient_self_attention(t, a, v[0], 4, 4, true), lift(t, w)));
        };
        GradcheckOptions g;
        g.max_coords = 6;
        check(fn, {uniform({1, 16, 16}, seed)}, &s, g);
    });
}

GradcheckRow ffn_component(const GradcheckSuiteOptions& o) {
    return sweep("mix_ffn", o, [](std::uint64_t seed, auto check) {
        ParameterStore<double> s;
        Encoder e = Encoder::build(s, EncoderConfig::tiny(), Initializer(6));
        randomize_for_gradcheck(s, seed);
        const FfnIdx& f = e.stages()[1].blocks[0].ffn;
        const TD w = uniform({1, 16, 8}, seed + 300);
        ScalarFn fn = [&](auto& t, const auto& v) {
            return ad::sum_all(ad::mul(mix_ffn(t, f, v[0], 4, 4, true), lift(t, w)));
        };
        GradcheckOptions g;
        g.max_coords = 6;
        check(fn, {uniform({1, 16, 8}, seed)}, &s, g);
    });
}

GradcheckRow cbam_component(const GradcheckSuiteOptions& o) {
    return sweep("cbam", o, [](std::uint64_t seed, auto check) {
        ParameterStore<double> s;
        CbamIdx c = add_cbam(s, Initializer(7), "cbam", 8, 4, 7);
        randomize_for_gradcheck(s, seed);
        const TD w = uniform({1, 8, 5, 4}, seed + 400);
        ScalarFn fn = [&](auto& t, const auto& v) { return ad::sum_all(ad::mul(cbam(t, c, v[0]), lift(t, w))); };
        GradcheckOptions g;
        g.max_coords = 12;
        check(fn, {uniform({1, 8, 5, 4}, seed)}, &s, g);
    });
}

GradcheckRow isrm_component(const GradcheckSuiteOptions& o) {
    return sweep("isrm_forward", o, [](std::uint64_t seed, auto check) {
        ParameterStore<double> s;
        Isrm m = Isrm::build(s, 8, 2, IsrmConfig{}, Initializer(21));
        randomize_for_gradcheck(s, seed);
        const TD w = uniform({1, 8, 2, 2}, seed + 500);
        ScalarFn fn = [&](auto& t, const auto& v) {
            return ad::sum_all(ad::mul(m.forward(t, v[0], v[1], v[2]), lift(t, w)));
        };
        GradcheckOptions g;
        g.max_coords = 24;
        check(fn, {uniform({1, 8, 2, 2}, seed), uniform({1, 8, 2, 2}, seed + 1), uniform({1, 1, 64, 64}, seed + 2, 0, 1)},
              &s, g);
    });
}

template <typename Loss>
GradcheckRow loss_component(const std::string& name, const GradcheckSuiteOptions& o, Loss loss) {
    return sweep(name, o, [&](std::uint64_t seed, auto check) {
        const TD gt = binary({2, 1, 4, 4}, seed + 600);
        ScalarFn fn = [&](auto& t, const auto& v) { return loss(t, v, gt); };
        check(fn, {uniform({2, 1, 4, 4}, seed, -3, 3), uniform({2, 1, 4, 4}, seed + 1, -3, 3)}, nullptr,
              GradcheckOptions{});
    });
}

GradcheckRow model_component(const GradcheckSuiteOptions& o) {
    return sweep("two_round_model", o, [](std::uint64_t seed, auto check) {
        ParameterStore<double> s;
        Network net = Network::build(s, NetworkConfig::tiny(), 17);
        randomize_for_gradcheck(s, seed);
        const TD w1 = uniform({1, 1, 32, 32}, seed + 40), w2 = uniform({1, 1, 32, 32}, seed + 41);
        ScalarFn fn = [&](auto& t, const auto& v) {
            auto out = net.predict_two_round(t, v[0], v[1]);
            return ad::add(ad::sum_all(ad::mul(out.round1.prob, lift(t, w1))),
                           ad::sum_all(ad::mul(out.round2.prob, lift(t, w2))));
        };
        GradcheckOptions g;
        g.max_coords = 2;
        // Deep-level gradients sit ~1e-9 below |f|; 1e-6 steps hit the extended-precision noise floor.
        g.h = 1e-4;
        g.refine_steps = 3;
        check(fn, {uniform({1, 3, 32, 32}, seed, 0, 1), uniform({1, 3, 32, 32}, seed + 1, 0, 1)}, &s, g);
    });
}

const std::vector<Component>& components() {
    static const std::vector<Component> all = [] {
        const LossWeights lw;
        std::vector<Component> c;
        c.push_back({"lora_apply", lora_component});
        c.push_back({"efficient_self_attention", attention_component});
        c.push_back({"mix_ffn", ffn_component});
        c.push_back({"cbam", cbam_component});
        c.push_back({"isrm_forward", isrm_component});
        c.push_back({"focal_loss", [lw](const GradcheckSuiteOptions& o) {
                         return loss_component("focal_loss", o, [lw](auto& t, const auto& v, const TD& gt) {
                             return focal_loss(v[0], as(t, gt), lw.focal_gamma, lw.focal_alpha);
                         });
                     }});
        c.push_back({"bce_loss", [](const GradcheckSuiteOptions& o) {
                         return loss_component("bce_loss", o, [](auto& t, const auto& v, const TD& gt) {
                             return bce_loss(v[0], as(t, gt));
                         });
                     }});
        c.push_back({"dice_loss", [lw](const GradcheckSuiteOptions& o) {
                         return loss_component("dice_loss", o, [lw](auto& t, const auto& v, const TD& gt) {
                             return dice_loss(ad::sigmoid(v[0]), as(t, gt), lw.dice_eps);
                         });
                     }});
        c.push_back({"combined_loss", [lw](const GradcheckSuiteOptions& o) {
                         return loss_component("combined_loss", o, [lw](auto& t, const auto& v, const TD& gt) {
                             return combined_loss(v[0], v[1], as(t, gt), lw).total;
                         });
                     }});
        c.push_back({"two_round_model", model_component});
        return c;
    }();
    return all;
}

} // namespace

const std::vector<std::string>& gradcheck_components() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& c : components()) n.push_back(c.name);
        return n;
    }();
    return names;
}

GradcheckRow gradcheck_component(const std::string& component, const GradcheckSuiteOptions& opts) {
    for (const auto& c : components())
        if (c.name == component) return c.run(opts);
    throw ConfigError("unknown gradcheck component '" + component + "'");
}

std::vector<GradcheckRow> gradcheck_suite(const GradcheckSuiteOptions& opts) {
    std::vector<GradcheckRow> rows;
    for (const auto& c : components()) rows.push_back(c.run(opts));
    return rows;
}

} // namespace smtc
