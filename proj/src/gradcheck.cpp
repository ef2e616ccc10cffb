#include "smtc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "smtc/layers.hpp"
#include "smtc/rng.hpp"

namespace smtc {

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

void randomize_for_gradcheck(ParameterStore<double>& params, std::uint64_t seed, double scale) {
    for (auto& p : params) {
        CounterRng rng(seed, name_hash(p.name));
        const bool gamma = p.name.size() >= 6 && p.name.compare(p.name.size() - 6, 6, ".gamma") == 0;
        for (auto& v : p.value.data()) v = (gamma ? 1.0 : 0.0) + rng.uniform(-scale, scale);
    }
}

namespace {

template <typename T, typename Fn>
T evaluate(const Fn& f, const std::vector<Tensor<T>>& inputs, ParameterStore<T>* params) {
    Tape<T> tape(params);
    tape.set_grad_enabled(false);
    std::vector<Var<T>> vars;
    vars.reserve(inputs.size());
    for (const auto& x : inputs) vars.push_back(tape.input(x));
    Var<T> out = f(tape, vars);
    if (out.value().size() != 1) throw ContractError("gradcheck: function must return a scalar");
    return out.value()[0];
}

std::vector<std::size_t> pick_coords(std::size_t n, std::size_t max_coords, CounterRng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (max_coords == 0 || max_coords >= n) return idx;
    // partial Fisher-Yates
    for (std::size_t i = 0; i < max_coords; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(max_coords);
    std::sort(idx.begin(), idx.end());
    return idx;
}

} // namespace

namespace {

// Central differences over every probed coordinate, in precision T.
template <typename T, typename Fn>
void probe_all(const Fn& f, std::vector<Tensor<T>> inputs, ParameterStore<T>* params,
               const std::vector<Tensor<double>>& analytic, const GradcheckOptions& opts, GradcheckResult& res) {
    CounterRng rng(opts.seed, 0x6c);
    const T h = static_cast<T>(opts.h);
    auto probe = [&](Tensor<T>& x, const Tensor<double>& g, const std::string& label) {
        for (std::size_t i : pick_coords(x.size(), opts.max_coords, rng)) {
            const T orig = x[i];
            T fmag = 0;
            auto central = [&](T step) {
                x[i] = orig + step;
                const T fp = evaluate(f, inputs, params);
                x[i] = orig - step;
                const T fm = evaluate(f, inputs, params);
                x[i] = orig;
                fmag = std::max(std::abs(fp), std::abs(fm));
                return static_cast<double>((fp - fm) / (2 * step));
            };
            T step = h;
            double numeric = central(step);
            for (int k = 0; k < opts.refine_steps; ++k) {
                const double finer = central(step / 10);
                // Roundoff of the finer difference; deep compositions amplify the last-bit error of f ~100x.
                const double noise = static_cast<double>(1024 * std::numeric_limits<T>::epsilon() * fmag / (step / 10));
                if (std::abs(numeric - finer) <=
                    opts.consistency * std::max({std::abs(numeric), std::abs(finer), 1e-8}) + noise)
                    break;
                step /= 10;
                numeric = finer;
            }
            const double err = relative_error(g[i], numeric);
            ++res.coords_checked;
            if (err > res.max_rel_error || res.worst.empty()) {
                res.max_rel_error = std::max(err, res.max_rel_error);
                res.worst = label + "[" + std::to_string(i) + "]";
            }
        }
    };
    for (std::size_t k = 0; k < inputs.size(); ++k) probe(inputs[k], analytic[k], "input" + std::to_string(k));
    if (params && opts.include_params) {
        for (std::size_t p = 0; p < params->size(); ++p)
            probe((*params)[p].value, analytic[inputs.size() + p], (*params)[p].name);
    }
}

} // namespace

GradcheckResult gradcheck(const ScalarFn& fn, std::vector<Tensor<double>> inputs, ParameterStore<double>* params,
                          const GradcheckOptions& opts) {
    const auto& f = fn.f64();
    const double f0 = evaluate(f, inputs, params);
    const double f1 = evaluate(f, inputs, params);
    if (std::memcmp(&f0, &f1, sizeof(double)) != 0) throw ContractError("gradcheck: function is not deterministic");

    std::vector<Tensor<double>> analytic;
    {
        Tape<double> tape(params);
        std::vector<Var<double>> vars;
        for (const auto& x : inputs) vars.push_back(tape.input(x));
        Var<double> loss = f(tape, vars);
        tape.backward(loss);
        for (const auto& v : vars) analytic.push_back(tape.grad(v));
        if (params && opts.include_params) {
            auto pg = tape.param_grads();
            for (auto& g : pg) analytic.push_back(std::move(g));
        }
    }
    if (opts.tamper) opts.tamper(analytic);

    GradcheckResult res;
    if (!fn.extended()) {
        probe_all(f, std::move(inputs), params, analytic, opts, res);
        return res;
    }
    std::vector<Tensor<long double>> wide;
    for (const auto& x : inputs) wide.push_back(x.cast<long double>());
    ParameterStore<long double> wide_params;
    if (params)
        for (const auto& p : *params) wide_params.add(p.name, p.value.cast<long double>(), p.group);
    probe_all(fn.f80(), std::move(wide), params ? &wide_params : nullptr, analytic, opts, res);
    return res;
}

} // namespace smtc
