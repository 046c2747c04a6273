#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "iagc/image_io.hpp"
#include "iagc/tensor.hpp"

namespace iagc {

// Synthetic low/normal pair generation: ground-truth test patterns degraded
// by low = clamp(gt^gamma_d * alpha + n, 0, 1) with n ~ N(0, sigma^2).
struct SyntheticSpec {
    std::size_t count = 4;
    std::size_t height = 64, width = 64;
    double gamma_lo = 2.0, gamma_hi = 5.0;   // gamma_d range
    double alpha_lo = 0.1, alpha_hi = 0.5;   // brightness scale range
    double sigma_lo = 0.0, sigma_hi = 0.05;  // noise std range
    std::uint64_t seed = 7;
};

namespace detail {

inline std::uint64_t pair_seed(std::uint64_t seed, std::size_t index) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Test patterns with enough structure for gradients and metrics to bite:
// color ramps, checkerboards, soft blobs, stroke marks.
inline std::vector<float> make_pattern(std::size_t kind, std::size_t H, std::size_t W,
                                       std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<float> img(H * W * 3);
    auto px = [&](std::size_t i, std::size_t j) { return &img[(i * W + j) * 3]; };

    switch (kind % 4) {
        case 0: {  // two-color diagonal ramp
            double c0[3], c1[3];
            for (int k = 0; k < 3; ++k) c0[k] = 0.15 + 0.5 * uni(rng);
            for (int k = 0; k < 3; ++k) c1[k] = 0.5 + 0.5 * uni(rng);
            const double ang = uni(rng) * 2 * 3.14159265358979;
            const double dx = std::cos(ang), dy = std::sin(ang);
            for (std::size_t i = 0; i < H; ++i)
                for (std::size_t j = 0; j < W; ++j) {
                    double t = (dx * j / double(W - 1) + dy * i / double(H - 1) + 1.0) / 2.0;
                    t = std::min(1.0, std::max(0.0, t));
                    float* p = px(i, j);
                    for (int k = 0; k < 3; ++k) p[k] = float(c0[k] + (c1[k] - c0[k]) * t);
                }
            break;
        }
        case 1: {  // checkerboard
            const std::size_t period = 8 + std::size_t(uni(rng) * 8);
            double ca[3], cb[3];
            for (int k = 0; k < 3; ++k) ca[k] = 0.2 + 0.3 * uni(rng);
            for (int k = 0; k < 3; ++k) cb[k] = 0.6 + 0.4 * uni(rng);
            for (std::size_t i = 0; i < H; ++i)
                for (std::size_t j = 0; j < W; ++j) {
                    const bool on = ((i / period) + (j / period)) % 2 == 0;
                    float* p = px(i, j);
                    for (int k = 0; k < 3; ++k) p[k] = float(on ? ca[k] : cb[k]);
                }
            break;
        }
        case 2: {  // soft gaussian blobs on a dim base
            for (auto& v : img) v = float(0.2 + 0.1 * uni(rng) * 0);
            const int blobs = 3 + int(uni(rng) * 4);
            for (int b = 0; b < blobs; ++b) {
                const double cy = uni(rng) * H, cx = uni(rng) * W;
                const double r = (0.08 + 0.17 * uni(rng)) * double(std::min(H, W));
                double col[3];
                for (int k = 0; k < 3; ++k) col[k] = 0.4 + 0.6 * uni(rng);
                for (std::size_t i = 0; i < H; ++i)
                    for (std::size_t j = 0; j < W; ++j) {
                        const double d2 = (i - cy) * (i - cy) + (j - cx) * (j - cx);
                        const double wgt = std::exp(-d2 / (2 * r * r));
                        float* p = px(i, j);
                        for (int k = 0; k < 3; ++k)
                            p[k] = float(std::min(1.0, p[k] + wgt * col[k]));
                    }
            }
            break;
        }
        default: {  // stroke marks on a mid base
            for (auto& v : img) v = 0.3f;
            const int strokes = 6 + int(uni(rng) * 6);
            for (int s = 0; s < strokes; ++s) {
                double y = uni(rng) * H, x = uni(rng) * W;
                const double ang = uni(rng) * 2 * 3.14159265358979;
                const double len = (0.2 + 0.4 * uni(rng)) * double(std::min(H, W));
                const int thick = 1 + int(uni(rng) * 2);
                double col[3];
                for (int k = 0; k < 3; ++k) col[k] = 0.55 + 0.45 * uni(rng);
                const double step_y = std::sin(ang), step_x = std::cos(ang);
                for (int t = 0; t < int(len); ++t) {
                    y += step_y;
                    x += step_x;
                    for (int oy = -thick; oy <= thick; ++oy)
                        for (int ox = -thick; ox <= thick; ++ox) {
                            const long ii = long(y) + oy, jj = long(x) + ox;
                            if (ii < 0 || jj < 0 || ii >= long(H) || jj >= long(W)) continue;
                            float* p = px(std::size_t(ii), std::size_t(jj));
                            for (int k = 0; k < 3; ++k) p[k] = float(col[k]);
                        }
                }
            }
            break;
        }
    }
    return img;
}

}  // namespace detail

// Writes count (low, gt) PPM pairs plus manifest.json recording the
// degradation parameters of every pair. Fully determined by spec.seed.
inline void gen_synthetic(const SyntheticSpec& spec, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create dataset directory " + out_dir + ": " + ec.message());

    static const char* kPatternNames[4] = {"gradient", "checker", "blobs", "strokes"};
    nlohmann::json manifest;
    manifest["seed"] = spec.seed;
    manifest["count"] = spec.count;
    manifest["height"] = spec.height;
    manifest["width"] = spec.width;
    manifest["pairs"] = nlohmann::json::array();

    for (std::size_t idx = 0; idx < spec.count; ++idx) {
        std::mt19937_64 rng(detail::pair_seed(spec.seed, idx));
        std::uniform_real_distribution<double> uni(0.0, 1.0);

        auto gt = detail::make_pattern(idx, spec.height, spec.width, rng);
        const double gamma_d = spec.gamma_lo + (spec.gamma_hi - spec.gamma_lo) * uni(rng);
        const double alpha = spec.alpha_lo + (spec.alpha_hi - spec.alpha_lo) * uni(rng);
        const double sigma = spec.sigma_lo + (spec.sigma_hi - spec.sigma_lo) * uni(rng);

        std::normal_distribution<double> gauss(0.0, 1.0);
        std::vector<float> low(gt.size());
        for (std::size_t i = 0; i < gt.size(); ++i) {
            const double noise = sigma > 0.0 ? sigma * gauss(rng) : 0.0;
            const double v = std::pow(double(gt[i]), gamma_d) * alpha + noise;
            low[i] = float(std::min(1.0, std::max(0.0, v)));
        }

        char base[32];
        std::snprintf(base, sizeof(base), "pair_%04zu", idx);
        const std::string gt_name = std::string(base) + "_gt.ppm";
        const std::string low_name = std::string(base) + "_low.ppm";
        write_image((fs::path(out_dir) / gt_name).string(),
                    TensorF::from_data({spec.height, spec.width, 3}, std::move(gt)));
        write_image((fs::path(out_dir) / low_name).string(),
                    TensorF::from_data({spec.height, spec.width, 3}, std::move(low)));

        manifest["pairs"].push_back({{"name", base},
                                     {"gt", gt_name},
                                     {"low", low_name},
                                     {"pattern", kPatternNames[idx % 4]},
                                     {"gamma_d", gamma_d},
                                     {"alpha", alpha},
                                     {"sigma", sigma}});
    }

    std::ofstream mf((fs::path(out_dir) / "manifest.json").string(), std::ios::trunc);
    if (!mf) throw IoError("cannot write manifest.json in " + out_dir);
    mf << manifest.dump(2) << "\n";
}

}  // namespace iagc
