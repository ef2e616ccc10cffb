#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <type_traits>
#include <vector>

#include "smtc/autodiff.hpp"

namespace smtc {

// Scalar function under test. A callable generic over the tape precision also
// gets a long double instance, used for the finite differences.
class ScalarFn {
public:
    using F64 = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;
    using F80 = std::function<Var<long double>(Tape<long double>&, const std::vector<Var<long double>>&)>;

    template <typename F>
        requires std::is_invocable_v<F&, Tape<double>&, const std::vector<Var<double>>&>
    ScalarFn(F f) : f64_(f) {
        if constexpr (std::is_invocable_v<F&, Tape<long double>&, const std::vector<Var<long double>>&>) f80_ = f;
    }

    const F64& f64() const { return f64_; }
    const F80& f80() const { return f80_; }
    bool extended() const { return static_cast<bool>(f80_); }

private:
    F64 f64_;
    F80 f80_;
};

// Records a double tensor as a constant on a tape of any precision.
template <typename T>
Var<T> lift(Tape<T>& t, const Tensor<double>& x) {
    if constexpr (std::is_same_v<T, double>)
        return t.constant(x);
    else
        return t.constant(x.cast<T>());
}

struct GradcheckOptions {
    double h = 1e-6;
    // Coordinates probed per tensor; 0 probes every coordinate.
    std::size_t max_coords = 0;
    // Also probe every parameter of the store handed to gradcheck.
    bool include_params = true;
    std::uint64_t seed = 0;
    // Non-smooth points (max, relu): while the central differences at h and h/10
    // disagree by more than this relative amount, retry with h/10, at most
    // refine_steps times. Uses function values only.
    int refine_steps = 0;
    double consistency = 1e-5;
    // Test hook applied to analytic gradients before comparison.
    std::function<void(std::vector<Tensor<double>>&)> tamper;
};

struct GradcheckResult {
    double max_rel_error = 0.0;
    std::size_t coords_checked = 0;
    std::string worst;  // "<tensor>[index]" of the worst coordinate
};

// Compares tape gradients with central differences (f(x+h) - f(x-h)) / 2h.
// Differences are evaluated in long double when the function supports it.
// Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
GradcheckResult gradcheck(const ScalarFn& f, std::vector<Tensor<double>> inputs, ParameterStore<double>* params,
                          const GradcheckOptions& opts = {});

double relative_error(double analytic, double numeric);

// Redraws every parameter uniformly in [-scale, scale] (norm gammas in [1-scale, 1+scale]).
// Initialization-scale weights give gradients near the finite-difference roundoff floor.
void randomize_for_gradcheck(ParameterStore<double>& params, std::uint64_t seed, double scale = 0.5);

} // namespace smtc
