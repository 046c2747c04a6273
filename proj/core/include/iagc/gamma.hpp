#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "iagc/layers.hpp"
#include "iagc/ops.hpp"
#include "iagc/tensor.hpp"

namespace iagc {

// Scalar correction factor in (0,1), broadcast over the image when applied.
template <class T>
struct GlobalGamma {
    BasicTensor<T> value;  // shape [1]
};

// Per-pixel, per-channel correction map in (0,1).
template <class T>
struct LocalGammaMap {
    BasicTensor<T> map;  // shape [H,W,3]
};

// ---- gamma application ----

// out = exp(gamma * ln(clamp(I, floor, 1))). The reference path: exact
// exponentiation, and the oracle the Taylor path is checked against.
template <class T>
BasicTensor<T> apply_gamma_exact(const BasicTensor<T>& image, const BasicTensor<T>& gamma,
                                 T floor = T(1e-4)) {
    auto clamped = clamp(image, floor, T(1));
    return exp(mul(ln(clamped), gamma));
}

// Truncated series for I^gamma = e^{gamma ln I}: 1 + x + x^2/2! + ... with
// x = gamma*ln(I). Only add/mul/ln/scale appear in the recorded graph; no
// exponentiation runs in forward or backward. Outputs are left unclamped.
template <class T>
BasicTensor<T> apply_gamma_taylor(const BasicTensor<T>& image, const BasicTensor<T>& gamma,
                                  int order = 2, T floor = T(1e-4)) {
    if (order < 1) throw InvalidOrder("taylor order must be >= 1");
    auto clamped = clamp(image, floor, T(1));
    auto lt = ln(clamped);

    auto acc = add(mul(lt, gamma), scalar_tensor<T>(T(1)));
    auto pow_lt = lt;       // lt^j
    auto pow_g = gamma;     // gamma^j
    double fact = 1.0;
    for (int j = 2; j <= order; ++j) {
        pow_lt = mul(pow_lt, lt);
        pow_g = mul(pow_g, gamma);
        fact *= j;
        acc = add(acc, scale(mul(pow_lt, pow_g), T(1.0 / fact)));
    }
    return acc;
}

template <class T>
BasicTensor<T> apply_gamma_exact(const BasicTensor<T>& image, const GlobalGamma<T>& g,
                                 T floor = T(1e-4)) {
    return apply_gamma_exact(image, g.value, floor);
}
template <class T>
BasicTensor<T> apply_gamma_exact(const BasicTensor<T>& image, const LocalGammaMap<T>& g,
                                 T floor = T(1e-4)) {
    return apply_gamma_exact(image, g.map, floor);
}
template <class T>
BasicTensor<T> apply_gamma_taylor(const BasicTensor<T>& image, const GlobalGamma<T>& g,
                                  int order = 2, T floor = T(1e-4)) {
    return apply_gamma_taylor(image, g.value, order, floor);
}
template <class T>
BasicTensor<T> apply_gamma_taylor(const BasicTensor<T>& image, const LocalGammaMap<T>& g,
                                  int order = 2, T floor = T(1e-4)) {
    return apply_gamma_taylor(image, g.map, order, floor);
}

// ---- GGCM: global gamma prediction ----

// gamma_g = sigmoid(FC(AvgPool(Conv(I)))), one scalar for the whole image.
template <class T>
struct GgcmModule {
    Conv2dLayer<T> conv;  // 3 -> c
    Linear<T> fc;         // c -> 1

    GgcmModule() = default;
    GgcmModule(std::size_t channels, SeedStream& seeds)
        : conv(3, channels, 3, seeds), fc(channels, 1, seeds) {}

    void register_params(ParamStore<T>& ps, const std::string& prefix) {
        conv.register_params(ps, prefix + ".conv");
        fc.register_params(ps, prefix + ".fc");
    }

    GlobalGamma<T> predict(const BasicTensor<T>& image_hwc) const {
        if (image_hwc.rank() != 3 || image_hwc.dim(2) != 3)
            throw ShapeError("ggcm: expected [H,W,3] image, got " + shape_str(image_hwc.shape()));
        auto feat = conv.forward(hwc_to_bchw(image_hwc));  // [1,c,H,W]
        auto pooled = global_avg_pool(feat);               // [1,c]
        auto logit = fc.forward(pooled);                   // [1,1]
        return GlobalGamma<T>{reshape(sigmoid(logit), {1})};
    }
};

// ---- LGCM: pixel-wise gamma prediction ----

// gamma_l = sigmoid(conv stack(R_s2)), one factor per pixel per channel.
// The stack is three 3x3 convolutions (3 -> c -> c -> 3) with a pointwise
// nonlinearity between layers.
template <class T>
struct LgcmModule {
    Conv2dLayer<T> conv1, conv2, conv3;

    LgcmModule() = default;
    LgcmModule(std::size_t channels, SeedStream& seeds)
        : conv1(3, channels, 3, seeds), conv2(channels, channels, 3, seeds),
          conv3(channels, 3, 3, seeds) {}

    void register_params(ParamStore<T>& ps, const std::string& prefix) {
        conv1.register_params(ps, prefix + ".conv1");
        conv2.register_params(ps, prefix + ".conv2");
        conv3.register_params(ps, prefix + ".conv3");
    }

    LocalGammaMap<T> predict(const BasicTensor<T>& image_hwc) const {
        if (image_hwc.rank() != 3 || image_hwc.dim(2) != 3)
            throw ShapeError("lgcm: expected [H,W,3] image, got " + shape_str(image_hwc.shape()));
        auto x = hwc_to_bchw(image_hwc);
        x = gelu(conv1.forward(x));
        x = gelu(conv2.forward(x));
        x = conv3.forward(x);
        return LocalGammaMap<T>{sigmoid(bchw_to_hwc(x))};
    }
};

// ---- exact-vs-Taylor micro-benchmark ----

struct GammaBenchReport {
    std::size_t element_count = 0;
    std::size_t iterations = 0;
    double exact_forward_ns = 0.0;
    double exact_backward_ns = 0.0;
    double taylor_forward_ns = 0.0;
    double taylor_backward_ns = 0.0;
    double max_abs_error = 0.0;
    // one row per iteration: {exact_fwd, exact_bwd, taylor_fwd, taylor_bwd}
    std::vector<std::array<double, 4>> samples_ns;

    bool taylor_wins() const {
        return taylor_forward_ns + taylor_backward_ns <= exact_forward_ns + exact_backward_ns;
    }
};

namespace detail {

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

// Times forward and backward of both gamma paths on identical data:
// I ~ U[0.05,1], gamma ~ U[0.3,1]. Wall times are medians over iterations.
template <class T = float>
GammaBenchReport bench_gamma(std::size_t n_elements, std::size_t iterations, std::uint64_t seed) {
    using clock = std::chrono::steady_clock;
    auto now_ns = [] {
        return std::chrono::duration<double, std::nano>(clock::now().time_since_epoch()).count();
    };

    GammaBenchReport rep;
    rep.element_count = n_elements;
    rep.iterations = iterations;

    auto image = create<T>({n_elements}, init_uniform(0.05, 1.0, seed), true);
    auto gamma = create<T>({n_elements}, init_uniform(0.3, 1.0, seed + 1), true);

    std::vector<double> ef, eb, tf, tb;
    BasicTensor<T> exact_out, taylor_out;
    for (std::size_t it = 0; it < iterations; ++it) {
        image.zero_grad();
        gamma.zero_grad();

        double t0 = now_ns();
        exact_out = apply_gamma_exact(image, gamma);
        double t1 = now_ns();
        auto exact_loss = sum_all(exact_out);
        double t2 = now_ns();
        backward(exact_loss);
        double t3 = now_ns();

        image.zero_grad();
        gamma.zero_grad();

        double t4 = now_ns();
        taylor_out = apply_gamma_taylor(image, gamma);
        double t5 = now_ns();
        auto taylor_loss = sum_all(taylor_out);
        double t6 = now_ns();
        backward(taylor_loss);
        double t7 = now_ns();

        ef.push_back(t1 - t0);
        eb.push_back(t3 - t2);
        tf.push_back(t5 - t4);
        tb.push_back(t7 - t6);
        rep.samples_ns.push_back({t1 - t0, t3 - t2, t5 - t4, t7 - t6});
    }
    rep.exact_forward_ns = detail::median(ef);
    rep.exact_backward_ns = detail::median(eb);
    rep.taylor_forward_ns = detail::median(tf);
    rep.taylor_backward_ns = detail::median(tb);

    double max_err = 0.0;
    for (std::size_t i = 0; i < n_elements; ++i)
        max_err = std::max(max_err, std::abs(double(taylor_out[i]) - double(exact_out[i])));
    rep.max_abs_error = max_err;
    return rep;
}

// Worst |taylor - exact| over an nI x nG grid of (I, gamma) pairs restricted
// to |gamma*ln(I)| <= x_limit. Runs in double off the graph.
inline double taylor_error_on_grid(std::size_t n_i, std::size_t n_g, double x_limit,
                                   int order = 2) {
    double worst = 0.0;
    for (std::size_t a = 0; a < n_i; ++a) {
        const double I = 0.05 + (1.0 - 0.05) * double(a) / double(n_i - 1);
        const double li = std::log(I);
        for (std::size_t b = 0; b < n_g; ++b) {
            const double g = 0.3 + (1.0 - 0.3) * double(b) / double(n_g - 1);
            const double x = g * li;
            if (std::abs(x) > x_limit) continue;
            double term = 1.0, sum = 1.0;
            for (int j = 1; j <= order; ++j) {
                term *= x / j;
                sum += term;
            }
            worst = std::max(worst, std::abs(sum - std::pow(I, g)));
        }
    }
    return worst;
}

}  // namespace iagc
