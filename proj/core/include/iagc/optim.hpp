#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "iagc/tensor.hpp"

namespace iagc {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-7;  // decoupled: p *= (1 - lr*wd) before the step
};

template <class T>
struct AdamState {
    struct Slot {
        std::vector<T> m, v;
    };
    std::vector<Slot> slots;  // one per parameter, store order
    std::uint64_t t = 0;

    void init(const ParamStore<T>& params) {
        slots.clear();
        for (const auto& [name, p] : params) {
            (void)name;
            slots.push_back({std::vector<T>(p.numel(), T(0)), std::vector<T>(p.numel(), T(0))});
        }
        t = 0;
    }
};

// Standard Adam with bias correction. Parameters with no gradient buffer are
// treated as zero-gradient (weight decay still applies).
template <class T>
void adam_step(ParamStore<T>& params, AdamState<T>& state, double lr_t,
               const AdamConfig& cfg = {}) {
    if (state.slots.size() != params.size()) state.init(params);
    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.t));
    std::size_t i = 0;
    for (auto& [name, p] : params) {
        (void)name;
        auto& slot = state.slots[i++];
        auto& data = p.data();
        const bool has_grad = p.has_grad();
        const std::vector<T>* g = has_grad ? &p.node()->grad : nullptr;
        const T shrink = T(1.0 - lr_t * cfg.weight_decay);
        for (std::size_t e = 0; e < data.size(); ++e) {
            data[e] *= shrink;
            const double ge = g ? double((*g)[e]) : 0.0;
            const double m = cfg.beta1 * double(slot.m[e]) + (1.0 - cfg.beta1) * ge;
            const double v = cfg.beta2 * double(slot.v[e]) + (1.0 - cfg.beta2) * ge * ge;
            slot.m[e] = T(m);
            slot.v[e] = T(v);
            const double mhat = m / bc1;
            const double vhat = v / bc2;
            data[e] -= T(lr_t * mhat / (std::sqrt(vhat) + cfg.eps));
        }
    }
}

// Cosine decay from base_lr at step 0 to zero at total_steps.
inline double lr_schedule(std::uint64_t step, std::uint64_t total_steps, double base_lr) {
    if (total_steps == 0) return base_lr;
    if (step > total_steps) step = total_steps;
    constexpr double pi = 3.14159265358979323846;
    return base_lr * 0.5 * (1.0 + std::cos(pi * double(step) / double(total_steps)));
}

}  // namespace iagc
