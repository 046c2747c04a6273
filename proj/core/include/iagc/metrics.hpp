#pragma once

#include <cmath>
#include <vector>

#include "iagc/errors.hpp"
#include "iagc/tensor.hpp"

namespace iagc {

// Peak signal-to-noise ratio in dB over all channels; inputs are clamped to
// [0,peak] first. Zero MSE reports the 99 dB cap (no infinities in logs).
template <class T>
double psnr(const BasicTensor<T>& a, const BasicTensor<T>& b, double peak = 1.0) {
    if (a.shape() != b.shape())
        throw ShapeError("psnr: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    const auto& pa = a.data();
    const auto& pb = b.data();
    double mse = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        const double va = std::min(peak, std::max(0.0, double(pa[i])));
        const double vb = std::min(peak, std::max(0.0, double(pb[i])));
        const double d = va - vb;
        mse += d * d;
    }
    mse /= double(pa.size());
    if (mse == 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(peak * peak / mse));
}

// Structural similarity: Gaussian-weighted local statistics (11x11, sigma
// 1.5), K1=0.01, K2=0.03, computed per channel over the valid interior and
// averaged. Inputs clamped to [0,peak].
template <class T>
double ssim(const BasicTensor<T>& a, const BasicTensor<T>& b, std::size_t window = 11,
            double sigma = 1.5, double k1 = 0.01, double k2 = 0.03, double peak = 1.0) {
    if (a.shape() != b.shape()) throw ShapeError("ssim: shape mismatch");
    if (a.rank() != 3) throw ShapeError("ssim: expected [H,W,C]");
    const std::size_t H = a.dim(0), W = a.dim(1), C = a.dim(2);
    if (H < window || W < window)
        throw ConfigError("ssim: image smaller than the " + std::to_string(window) + "x" +
                          std::to_string(window) + " window");

    std::vector<double> kernel(window * window);
    const double half = (double(window) - 1.0) / 2.0;
    double ksum = 0.0;
    for (std::size_t i = 0; i < window; ++i)
        for (std::size_t j = 0; j < window; ++j) {
            const double dy = double(i) - half, dx = double(j) - half;
            const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            kernel[i * window + j] = v;
            ksum += v;
        }
    for (auto& v : kernel) v /= ksum;

    const double c1 = (k1 * peak) * (k1 * peak);
    const double c2 = (k2 * peak) * (k2 * peak);
    auto clampv = [&](T v) { return std::min(peak, std::max(0.0, double(v))); };

    double total = 0.0;
    std::size_t count = 0;
    const std::size_t Hv = H - window + 1, Wv = W - window + 1;
    for (std::size_t ch = 0; ch < C; ++ch) {
        for (std::size_t oy = 0; oy < Hv; ++oy) {
            for (std::size_t ox = 0; ox < Wv; ++ox) {
                double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
                for (std::size_t i = 0; i < window; ++i)
                    for (std::size_t j = 0; j < window; ++j) {
                        const double k = kernel[i * window + j];
                        const std::size_t at = ((oy + i) * W + (ox + j)) * C + ch;
                        const double xa = clampv(a.data()[at]);
                        const double xb = clampv(b.data()[at]);
                        ma += k * xa;
                        mb += k * xb;
                        va += k * xa * xa;
                        vb += k * xb * xb;
                        cov += k * xa * xb;
                    }
                va -= ma * ma;
                vb -= mb * mb;
                cov -= ma * mb;
                const double num = (2 * ma * mb + c1) * (2 * cov + c2);
                const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
                total += num / den;
                ++count;
            }
        }
    }
    return total / double(count);
}

}  // namespace iagc
