#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "iagc/ops.hpp"
#include "iagc/tensor.hpp"

namespace iagc {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::vector<std::pair<std::string, double>> per_param;
    std::size_t probes = 0;

    bool pass(double tol = 1e-4) const { return max_rel_err < tol; }
};

// Central finite differences against the analytic backward pass. Meant to run
// at 64-bit; relative error uses denominator max(|analytic|,|numeric|,1e-8).
// max_probes_per_param = 0 checks every entry; otherwise entries are probed
// at a fixed stride so large tensors stay affordable.
template <class T, class Fn>
GradCheckReport gradient_check(Fn&& fn, ParamStore<T>& params, T h = T(1e-5),
                               std::size_t max_probes_per_param = 0) {
    {
        auto v1 = fn();
        if (v1.numel() != 1) throw ShapeError("gradient_check: fn must produce a scalar");
        auto v2 = fn();
        if (v1.data() != v2.data())
            throw NonDeterministicFunction("gradient_check: two forward passes disagree");
    }

    params.zero_grad();
    auto loss = fn();
    backward(loss);

    std::vector<std::vector<T>> analytic;
    analytic.reserve(params.size());
    for (auto& [name, p] : params) {
        (void)name;
        analytic.push_back(p.has_grad() ? p.grad() : std::vector<T>(p.numel(), T(0)));
    }

    GradCheckReport report;
    std::size_t pi = 0;
    for (auto& [name, p] : params) {
        double param_max = 0.0;
        const std::size_t n = p.numel();
        std::size_t stride = 1;
        if (max_probes_per_param > 0 && n > max_probes_per_param)
            stride = (n + max_probes_per_param - 1) / max_probes_per_param;
        NoGradGuard ng;  // finite-difference passes need values only
        for (std::size_t e = 0; e < n; e += stride) {
            const T saved = p[e];
            p[e] = saved + h;
            const double f_plus = double(fn()[0]);
            p[e] = saved - h;
            const double f_minus = double(fn()[0]);
            p[e] = saved;
            const double numeric = (f_plus - f_minus) / (2.0 * double(h));
            const double a = double(analytic[pi][e]);
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            const double rel = std::abs(a - numeric) / denom;
            param_max = std::max(param_max, rel);
            ++report.probes;
        }
        report.per_param.emplace_back(name, param_max);
        report.max_rel_err = std::max(report.max_rel_err, param_max);
        ++pi;
    }
    return report;
}

}  // namespace iagc
