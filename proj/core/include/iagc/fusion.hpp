#pragma once

#include <string>

#include "iagc/layers.hpp"
#include "iagc/ops.hpp"
#include "iagc/tensor.hpp"

namespace iagc {

// Sigmoid-gated spatial mask, single channel, broadcast across features.
template <class T>
struct SpatialAttentionMap {
    BasicTensor<T> map;  // [H,W,1], entries in (0,1)
};

template <class T>
struct FusedFeature {
    BasicTensor<T> tensor;  // [H,W,c]
};

// Projects the raw input and the stage-1 result into feature space, weights
// each branch with a spatial attention mask, and fuses the sum with one conv.
// All convolutions are 3x3, stride 1, pad 1.
template <class T>
struct FusionModule {
    Conv2dLayer<T> proj_input;   // 3 -> c
    Conv2dLayer<T> proj_stage1;  // 3 -> c
    Conv2dLayer<T> sam_input;    // c -> 1
    Conv2dLayer<T> sam_stage1;   // c -> 1
    Conv2dLayer<T> fuse_conv;    // c -> c

    FusionModule() = default;
    FusionModule(std::size_t channels, SeedStream& seeds)
        : proj_input(3, channels, 3, seeds), proj_stage1(3, channels, 3, seeds),
          sam_input(channels, 1, 3, seeds), sam_stage1(channels, 1, 3, seeds),
          fuse_conv(channels, channels, 3, seeds) {}

    void register_params(ParamStore<T>& ps, const std::string& prefix) {
        proj_input.register_params(ps, prefix + ".proj_i");
        proj_stage1.register_params(ps, prefix + ".proj_r");
        sam_input.register_params(ps, prefix + ".sam_i");
        sam_stage1.register_params(ps, prefix + ".sam_r");
        fuse_conv.register_params(ps, prefix + ".fuse");
    }

    std::pair<BasicTensor<T>, BasicTensor<T>> project_features(const BasicTensor<T>& image,
                                                               const BasicTensor<T>& stage1) const {
        if (image.shape() != stage1.shape())
            throw ShapeError("fusion: image and stage-1 result must share a shape, got " +
                             shape_str(image.shape()) + " vs " + shape_str(stage1.shape()));
        return {conv_hwc(proj_input, image), conv_hwc(proj_stage1, stage1)};
    }

    // A = sigmoid(Conv(F)); F_hat = A (.) F, the mask broadcast over channels.
    static std::pair<SpatialAttentionMap<T>, BasicTensor<T>> sam_attend(const Conv2dLayer<T>& sam,
                                                                        const BasicTensor<T>& feat) {
        auto mask = sigmoid(conv_hwc(sam, feat));  // [H,W,1]
        auto weighted = mul(feat, mask);
        return {SpatialAttentionMap<T>{mask}, weighted};
    }

    FusedFeature<T> fuse(const BasicTensor<T>& weighted_input,
                         const BasicTensor<T>& weighted_stage1) const {
        if (weighted_input.shape() != weighted_stage1.shape())
            throw ShapeError("fuse: branch shapes disagree");
        return FusedFeature<T>{conv_hwc(fuse_conv, add(weighted_input, weighted_stage1))};
    }

    struct Output {
        BasicTensor<T> fused;         // [H,W,c]
        SpatialAttentionMap<T> attn_input;
        SpatialAttentionMap<T> attn_stage1;
    };

    Output forward(const BasicTensor<T>& image, const BasicTensor<T>& stage1) const {
        auto [fi, fr] = project_features(image, stage1);
        auto [ai, fi_hat] = sam_attend(sam_input, fi);
        auto [ar, fr_hat] = sam_attend(sam_stage1, fr);
        return Output{fuse(fi_hat, fr_hat).tensor, ai, ar};
    }
};

}  // namespace iagc
