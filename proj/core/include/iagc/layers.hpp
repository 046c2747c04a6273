#pragma once

#include <cmath>
#include <random>
#include <string>

#include "iagc/ops.hpp"
#include "iagc/tensor.hpp"

namespace iagc {

// Deterministic per-tensor seeds derived from one master seed (splitmix64).
struct SeedStream {
    std::uint64_t master = 0;
    std::uint64_t counter = 0;

    explicit SeedStream(std::uint64_t m) : master(m) {}

    std::uint64_t next() {
        std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (++counter);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }
};

// ---- layout helpers: model tensors are [H,W,C], conv kernels want [B,C,H,W]

template <class T>
BasicTensor<T> hwc_to_bchw(const BasicTensor<T>& x) {
    if (x.rank() != 3) throw ShapeError("hwc_to_bchw: expected [H,W,C]");
    auto chw = permute(x, {2, 0, 1});
    return reshape(chw, {1, x.dim(2), x.dim(0), x.dim(1)});
}

template <class T>
BasicTensor<T> bchw_to_hwc(const BasicTensor<T>& x) {
    if (x.rank() != 4 || x.dim(0) != 1) throw ShapeError("bchw_to_hwc: expected [1,C,H,W]");
    auto chw = reshape(x, {x.dim(1), x.dim(2), x.dim(3)});
    return permute(chw, {1, 2, 0});
}

// ---- linear ----

template <class T>
struct Linear {
    BasicTensor<T> weight;  // [in, out]
    BasicTensor<T> bias;    // [out]

    Linear() = default;
    Linear(std::size_t in, std::size_t out, SeedStream& seeds) {
        const double limit = std::sqrt(6.0 / double(in + out));
        weight = create<T>({in, out}, init_uniform(-limit, limit, seeds.next()), true);
        bias = create<T>({out}, init_zero(), true);
    }

    void register_params(ParamStore<T>& ps, const std::string& prefix) {
        ps.add(prefix + ".w", weight);
        ps.add(prefix + ".b", bias);
    }

    BasicTensor<T> forward(const BasicTensor<T>& x) const {
        if (x.rank() == 1) {
            auto y = add(matmul(reshape(x, {1, x.dim(0)}), weight), bias);
            return reshape(y, {weight.dim(1)});
        }
        return add(matmul(x, weight), bias);
    }
};

// ---- conv ----

template <class T>
struct Conv2dLayer {
    BasicTensor<T> weight;  // [O,C,k,k]
    BasicTensor<T> bias;    // [O]
    std::size_t pad = 0;

    Conv2dLayer() = default;
    Conv2dLayer(std::size_t in_ch, std::size_t out_ch, std::size_t k, SeedStream& seeds)
        : pad((k - 1) / 2) {
        const double fan_in = double(in_ch * k * k);
        const double fan_out = double(out_ch * k * k);
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        weight = create<T>({out_ch, in_ch, k, k}, init_uniform(-limit, limit, seeds.next()), true);
        bias = create<T>({out_ch}, init_zero(), true);
    }

    void register_params(ParamStore<T>& ps, const std::string& prefix) {
        ps.add(prefix + ".w", weight);
        ps.add(prefix + ".b", bias);
    }

    BasicTensor<T> forward(const BasicTensor<T>& x_bchw, std::size_t stride = 1) const {
        return conv2d(x_bchw, weight, bias, stride, pad);
    }
};

// Convolution on a [H,W,C] tensor, spatial size preserved.
template <class T>
BasicTensor<T> conv_hwc(const Conv2dLayer<T>& layer, const BasicTensor<T>& x_hwc) {
    return bchw_to_hwc(layer.forward(hwc_to_bchw(x_hwc)));
}

// ---- layer norm over the last axis ----

template <class T>
struct LayerNormLayer {
    BasicTensor<T> gain;
    BasicTensor<T> offset;

    LayerNormLayer() = default;
    explicit LayerNormLayer(std::size_t dim) {
        gain = create<T>({dim}, init_one(), true);
        offset = create<T>({dim}, init_zero(), true);
    }

    void register_params(ParamStore<T>& ps, const std::string& prefix) {
        ps.add(prefix + ".g", gain);
        ps.add(prefix + ".o", offset);
    }

    BasicTensor<T> forward(const BasicTensor<T>& x) const { return layernorm(x, gain, offset); }
};

// ---- multi-head self-attention ----

template <class T>
struct Msa {
    std::size_t heads = 1;
    std::size_t head_dim = 1;
    Linear<T> wq, wk, wv, wo;

    Msa() = default;
    Msa(std::size_t dim, std::size_t n_heads, SeedStream& seeds)
        : heads(n_heads), head_dim(dim / n_heads) {
        if (n_heads == 0 || dim % n_heads != 0)
            throw ConfigError("attention heads (" + std::to_string(n_heads) +
                              ") must divide embedding dim (" + std::to_string(dim) + ")");
        wq = Linear<T>(dim, dim, seeds);
        wk = Linear<T>(dim, dim, seeds);
        wv = Linear<T>(dim, dim, seeds);
        wo = Linear<T>(dim, dim, seeds);
    }

    void register_params(ParamStore<T>& ps, const std::string& prefix) {
        wq.register_params(ps, prefix + ".q");
        wk.register_params(ps, prefix + ".k");
        wv.register_params(ps, prefix + ".v");
        wo.register_params(ps, prefix + ".o");
    }

    // x: [B,S,c]. Per-query attention weights are softmax rows over S.
    BasicTensor<T> forward(const BasicTensor<T>& x, BasicTensor<T>* attn_out = nullptr) const {
        if (x.rank() != 3) throw ShapeError("msa: expected [B,S,c]");
        const std::size_t B = x.dim(0), S = x.dim(1), c = x.dim(2);
        auto split = [&](const BasicTensor<T>& t) {
            return permute(reshape(t, {B, S, heads, head_dim}), {0, 2, 1, 3});
        };
        auto q = split(wq.forward(x));
        auto k = split(wk.forward(x));
        auto v = split(wv.forward(x));
        auto scores = scale(matmul(q, transpose_last2(k)), T(1.0 / std::sqrt(double(head_dim))));
        auto attn = softmax(scores, -1);  // [B,h,S,S]
        if (attn_out) *attn_out = attn;
        auto ctx = matmul(attn, v);  // [B,h,S,dh]
        auto merged = reshape(permute(ctx, {0, 2, 1, 3}), {B, S, c});
        return wo.forward(merged);
    }
};

// ---- transformer MLP ----

template <class T>
struct Mlp {
    Linear<T> fc1, fc2;

    Mlp() = default;
    Mlp(std::size_t dim, std::size_t hidden, SeedStream& seeds)
        : fc1(dim, hidden, seeds), fc2(hidden, dim, seeds) {}

    void register_params(ParamStore<T>& ps, const std::string& prefix) {
        fc1.register_params(ps, prefix + ".fc1");
        fc2.register_params(ps, prefix + ".fc2");
    }

    BasicTensor<T> forward(const BasicTensor<T>& x) const {
        return fc2.forward(gelu(fc1.forward(x)));
    }
};

// ---- stochastic depth ----

// Training-time residual-branch dropping with inverted rescaling: each branch
// is kept with probability 1-drop_prob and scaled by 1/(1-drop_prob).
struct DropPath {
    bool training = false;
    double drop_prob = 0.0;
    std::mt19937_64* rng = nullptr;

    template <class T>
    BasicTensor<T> apply(const BasicTensor<T>& branch) const {
        if (!training || drop_prob <= 0.0 || rng == nullptr) return branch;
        std::uniform_real_distribution<double> dist(0.0, 1.0);
        const bool keep = dist(*rng) >= drop_prob;
        return keep ? scale(branch, T(1.0 / (1.0 - drop_prob))) : scale(branch, T(0));
    }
};

// Pre-norm residual MSA followed by pre-norm residual MLP.
template <class T>
struct TransformerStage {
    LayerNormLayer<T> ln1, ln2;
    Msa<T> attn;
    Mlp<T> mlp;

    TransformerStage() = default;
    TransformerStage(std::size_t dim, std::size_t heads, std::size_t mlp_ratio, SeedStream& seeds)
        : ln1(dim), ln2(dim), attn(dim, heads, seeds), mlp(dim, dim * mlp_ratio, seeds) {}

    void register_params(ParamStore<T>& ps, const std::string& prefix) {
        ln1.register_params(ps, prefix + ".ln1");
        attn.register_params(ps, prefix + ".attn");
        ln2.register_params(ps, prefix + ".ln2");
        mlp.register_params(ps, prefix + ".mlp");
    }

    BasicTensor<T> forward(const BasicTensor<T>& x, const DropPath& dp,
                           BasicTensor<T>* attn_out = nullptr) const {
        auto y = add(x, dp.template apply<T>(attn.forward(ln1.forward(x), attn_out)));
        return add(y, dp.template apply<T>(mlp.forward(ln2.forward(y))));
    }
};

}  // namespace iagc
