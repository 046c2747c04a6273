#pragma once

#include <random>
#include <string>
#include <vector>

#include "iagc/como_vit.hpp"
#include "iagc/fusion.hpp"
#include "iagc/gamma.hpp"
#include "iagc/layers.hpp"

namespace iagc {

// Architecture hyper-parameters. Defaults are the trained configuration:
// embedding width 15, 5 heads, 2 blocks, 16x16 windows.
struct IagcConfig {
    std::size_t embed_dim = 15;
    std::size_t heads = 5;
    std::size_t blocks = 2;       // L
    std::size_t window = 16;      // w
    std::size_t global_dim = 60;  // window-token width (4x embed)
    std::size_t mlp_ratio = 4;
    std::size_t se_reduction = 4;
    int taylor_order = 2;
    double gamma_floor = 1e-4;
    double drop_path = 0.1;
    // Spatial size the window-position table is laid out for.
    std::size_t pos_extent = 64;
    AblationVariant variant = AblationVariant::A4;
    bool use_ggcm = true;  // G-ablations
    bool use_lgcm = true;

    void validate() const {
        if (embed_dim == 0 || heads == 0 || blocks == 0 || window == 0 || global_dim == 0)
            throw ConfigError("architecture extents must be positive");
        if (embed_dim % heads != 0)
            throw ConfigError("heads (" + std::to_string(heads) + ") must divide embed_dim (" +
                              std::to_string(embed_dim) + ")");
        if (global_dim % heads != 0)
            throw ConfigError("heads must divide global_dim (" + std::to_string(global_dim) + ")");
        if (taylor_order < 1) throw InvalidOrder("taylor_order must be >= 1");
    }

    ComoVitSettings block_settings() const {
        ComoVitSettings s;
        s.channels = embed_dim;
        s.heads = heads;
        s.window = window;
        s.global_dim = global_dim;
        s.mlp_ratio = mlp_ratio;
        s.se_reduction = se_reduction;
        s.drop_path = drop_path;
        s.pos_grid_h = std::max<std::size_t>(1, (pos_extent + window - 1) / window);
        s.pos_grid_w = s.pos_grid_h;
        s.variant = variant;
        return s;
    }
};

template <class T>
struct StageOutputs {
    BasicTensor<T> r_s1, r_s2, r_s3;  // [H,W,3] each
    BasicTensor<T> gamma_g;           // [1]
    BasicTensor<T> gamma_l;           // [H,W,3]
    BasicTensor<T> attn_input;        // SAM mask over the raw input, [H,W,1]
    BasicTensor<T> attn_stage1;       // SAM mask over the stage-1 result
};

// The three-stage enhancement model: global gamma correction, fused-feature
// encoder with COMO-ViT blocks plus conv decoder, local gamma correction.
template <class T>
struct IagcModel {
    IagcConfig cfg;
    GgcmModule<T> ggcm;
    FusionModule<T> fusion;
    std::vector<ComoVitBlock<T>> blocks;
    Conv2dLayer<T> decoder;  // c -> 3
    LgcmModule<T> lgcm;
    ParamStore<T> params;

    explicit IagcModel(const IagcConfig& config, std::uint64_t seed = 1) : cfg(config) {
        cfg.validate();
        SeedStream seeds(seed);
        if (cfg.use_ggcm) ggcm = GgcmModule<T>(cfg.embed_dim, seeds);
        fusion = FusionModule<T>(cfg.embed_dim, seeds);
        const auto bs = cfg.block_settings();
        for (std::size_t l = 0; l < cfg.blocks; ++l) blocks.emplace_back(bs, seeds);
        decoder = Conv2dLayer<T>(cfg.embed_dim, 3, 3, seeds);
        if (cfg.use_lgcm) lgcm = LgcmModule<T>(cfg.embed_dim, seeds);

        if (cfg.use_ggcm) ggcm.register_params(params, "ggcm");
        fusion.register_params(params, "fusion");
        for (std::size_t l = 0; l < cfg.blocks; ++l)
            blocks[l].register_params(params, "blocks." + std::to_string(l));
        decoder.register_params(params, "decode");
        if (cfg.use_lgcm) lgcm.register_params(params, "lgcm");
    }

    // Stage-2 decode of the encoder feature map.
    BasicTensor<T> decode(const BasicTensor<T>& feat) const { return conv_hwc(decoder, feat); }

    StageOutputs<T> forward(const BasicTensor<T>& image, bool training = false,
                            std::mt19937_64* rng = nullptr) const {
        if (image.rank() != 3 || image.dim(2) != 3)
            throw ShapeError("iagc: expected [H,W,3] input, got " + shape_str(image.shape()));
        const std::size_t H = image.dim(0), W = image.dim(1);
        DropPath dp{training && rng != nullptr, cfg.drop_path, rng};

        StageOutputs<T> out;

        // stage 1: global gamma
        if (cfg.use_ggcm) {
            auto gg = ggcm.predict(image);
            out.gamma_g = gg.value;
            out.r_s1 = apply_gamma_taylor(image, gg, cfg.taylor_order, T(cfg.gamma_floor));
        } else {
            out.gamma_g = scalar_tensor<T>(T(1));
            out.r_s1 = image;
        }

        // stage 2: fuse, encode with COMO-ViT blocks, decode
        auto img_p = pad_to_multiple_reflect(image, cfg.window);
        auto s1_p = pad_to_multiple_reflect(out.r_s1, cfg.window);
        auto fused = fusion.forward(img_p, s1_p);
        out.attn_input = crop_top_left(fused.attn_input.map, H, W);
        out.attn_stage1 = crop_top_left(fused.attn_stage1.map, H, W);
        auto feat = fused.fused;
        for (const auto& block : blocks) feat = block.forward(feat, dp);
        out.r_s2 = crop_top_left(decode(feat), H, W);

        // stage 3: local gamma
        if (cfg.use_lgcm) {
            auto gl = lgcm.predict(out.r_s2);
            out.gamma_l = gl.map;
            out.r_s3 = apply_gamma_taylor(out.r_s2, gl, cfg.taylor_order, T(cfg.gamma_floor));
        } else {
            out.gamma_l = create<T>({H, W, 3}, init_one());
            out.r_s3 = out.r_s2;
        }
        return out;
    }
};

}  // namespace iagc
