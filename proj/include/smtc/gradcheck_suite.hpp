#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace smtc {

struct GradcheckRow {
    std::string component;
    double max_rel_error = 0.0;
    std::string worst;  // seed and coordinate of the largest error
    std::size_t coords = 0;
    bool pass = false;
};

struct GradcheckSuiteOptions {
    int seeds = 10;
    double tolerance = 1e-4;
    // Harness self-test: negate the analytic gradients of this component.
    std::string tamper;
};

// lora_apply, efficient_self_attention, mix_ffn, cbam, isrm_forward, each loss and
// the two-round model, in double precision on the tiny configuration.
const std::vector<std::string>& gradcheck_components();

std::vector<GradcheckRow> gradcheck_suite(const GradcheckSuiteOptions& opts = {});
GradcheckRow gradcheck_component(const std::string& component, const GradcheckSuiteOptions& opts = {});

} // namespace smtc
