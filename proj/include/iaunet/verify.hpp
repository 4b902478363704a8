#pragma once

#include <functional>
#include <string>
#include <vector>

#include "iaunet/tape.hpp"

namespace iaunet::verify {

// All numeric verification runs in 64-bit.

struct GradCheckSpec {
    double rtol = 1e-5;
    double h_scale = 1e-3;         // step = h_scale * max(1, |value|)
    int samples_per_tensor = 0;    // 0 = every element
    std::uint64_t seed = 1;        // sampling of element indices
    double floor = 1e-6;           // relative-error denominator floor
};

struct GradCheckResult {
    bool pass = true;
    double max_rel_err = 0.0;
    std::string worst;  // "param[index]" of the worst element
    int checked = 0;
};

// Central finite difference of `loss_forward` with respect to one slot.
inline double central_diff(const std::function<double()>& loss_forward, double* slot, double h) {
    const double saved = *slot;
    *slot = saved + h;
    const double up = loss_forward();
    *slot = saved - h;
    const double down = loss_forward();
    *slot = saved;
    return (up - down) / (2.0 * h);
}

// Compares analytic gradients (populated by compute_grads, which must zero,
// forward and backward) against central finite differences of loss_forward.
// loss_forward must depend only on the parameter values, re-running the
// forward pass from scratch each call.
inline GradCheckResult check_parameters(const std::vector<nn::Parameter<double>*>& params,
                                        const std::function<double()>& loss_forward,
                                        const std::function<void()>& compute_grads, const GradCheckSpec& spec) {
    compute_grads();
    GradCheckResult res;
    Rng rng(spec.seed);
    for (nn::Parameter<double>* p : params) {
        const std::int64_t n = p->value.numel();
        std::vector<std::int64_t> idxs;
        if (spec.samples_per_tensor <= 0 || spec.samples_per_tensor >= n) {
            idxs.resize(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) idxs[static_cast<std::size_t>(i)] = i;
        } else {
            for (int s = 0; s < spec.samples_per_tensor; ++s) idxs.push_back(rng.uniform_int(n));
        }
        for (std::int64_t i : idxs) {
            double* slot = p->value.data() + i;
            const double h = spec.h_scale * std::max(1.0, std::abs(*slot));
            const double fd = central_diff(loss_forward, slot, h);
            const double an = p->grad[i];
            const double denom = std::max({std::abs(fd), std::abs(an), spec.floor});
            const double rel = std::abs(fd - an) / denom;
            ++res.checked;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst = p->name + "[" + std::to_string(i) + "]";
            }
        }
    }
    res.pass = res.max_rel_err < spec.rtol;
    return res;
}

// Named verification cases, runnable individually so the harness itself can
// be tested with injected faults.
struct Case {
    std::string name;
    std::function<GradCheckResult()> run;
};

struct SuiteLine {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct SuiteReport {
    std::vector<SuiteLine> lines;
    bool all_pass = true;

    void add(const std::string& name, bool pass, const std::string& detail) {
        lines.push_back({name, pass, detail});
        all_pass = all_pass && pass;
    }
};

// Gradient checks for every nn_core primitive (64-bit, small tensors).
// inject_dice_sign_fault flips the sign of the dice_loss analytic gradient;
// it exists so the harness's failure path can be exercised by tests.
std::vector<Case> primitive_grad_cases(bool inject_dice_sign_fault = false);

SuiteReport run_gradient_suite(const std::vector<Case>& cases, double rtol = 1e-5);
SuiteReport run_loss_oracle_suite(int instances = 500, std::uint64_t seed = 7);
SuiteReport run_shape_suite();

// End-to-end check of total_loss through the full default-config model on a
// 1x3x32x32 input (sampled parameter elements).
GradCheckResult model_grad_check(int samples_per_tensor = 2, std::uint64_t seed = 11);

struct VerifyReport {
    SuiteReport gradients;
    SuiteReport losses;
    SuiteReport shapes;
    GradCheckResult model;
    bool all_pass = false;
};

VerifyReport run_all();

}  // namespace iaunet::verify
