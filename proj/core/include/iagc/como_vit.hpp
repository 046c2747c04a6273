#pragma once

#include <memory>
#include <string>
#include <vector>

#include "iagc/layers.hpp"
#include "iagc/ops.hpp"
#include "iagc/tensor.hpp"

namespace iagc {

// ---- window tiling ----

struct WindowGrid {
    std::size_t H = 0, W = 0;
    std::size_t w = 0;        // window side
    std::size_t gh = 0, gw = 0;
    std::size_t n = 0;        // window count
    std::size_t m = 0;        // pixels per window

    static WindowGrid make(std::size_t H, std::size_t W, std::size_t w) {
        if (w == 0) throw ShapeError("window size must be >= 1");
        if (H % w != 0 || W % w != 0)
            throw ShapeError("feature map " + std::to_string(H) + "x" + std::to_string(W) +
                             " is not divisible by window size " + std::to_string(w));
        WindowGrid g;
        g.H = H;
        g.W = W;
        g.w = w;
        g.gh = H / w;
        g.gw = W / w;
        g.n = g.gh * g.gw;
        g.m = w * w;
        return g;
    }

    // Window index (row-major over the grid) and local coords of a pixel.
    std::size_t window_of(std::size_t row, std::size_t col) const {
        return (row / w) * gw + (col / w);
    }
    std::pair<std::size_t, std::size_t> local_coords(std::size_t row, std::size_t col) const {
        return {row % w, col % w};
    }
};

namespace detail {

inline std::vector<std::size_t> partition_indices(const WindowGrid& g, std::size_t c) {
    std::vector<std::size_t> idx(g.n * g.m * c);
    std::size_t o = 0;
    for (std::size_t wr = 0; wr < g.gh; ++wr)
        for (std::size_t wc = 0; wc < g.gw; ++wc)
            for (std::size_t i = 0; i < g.w; ++i)
                for (std::size_t j = 0; j < g.w; ++j) {
                    const std::size_t src = ((wr * g.w + i) * g.W + (wc * g.w + j)) * c;
                    for (std::size_t ch = 0; ch < c; ++ch) idx[o++] = src + ch;
                }
    return idx;
}

inline std::vector<std::size_t> merge_indices(const WindowGrid& g, std::size_t c) {
    std::vector<std::size_t> idx(g.n * g.m * c);
    std::size_t o = 0;
    for (std::size_t row = 0; row < g.H; ++row)
        for (std::size_t col = 0; col < g.W; ++col) {
            const std::size_t win = g.window_of(row, col);
            const std::size_t li = row % g.w, lj = col % g.w;
            const std::size_t src = ((win * g.w + li) * g.w + lj) * c;
            for (std::size_t ch = 0; ch < c; ++ch) idx[o++] = src + ch;
        }
    return idx;
}

}  // namespace detail

// [H,W,c] -> [n,w,w,c], windows in row-major grid order. Lossless.
template <class T>
std::pair<BasicTensor<T>, WindowGrid> window_partition(const BasicTensor<T>& f, std::size_t w) {
    if (f.rank() != 3) throw ShapeError("window_partition: expected [H,W,c]");
    const auto g = WindowGrid::make(f.dim(0), f.dim(1), w);
    const std::size_t c = f.dim(2);
    auto out = gather(f, detail::partition_indices(g, c), {g.n, g.w, g.w, c});
    return {out, g};
}

// Exact inverse of window_partition.
template <class T>
BasicTensor<T> window_merge(const BasicTensor<T>& windows, const WindowGrid& g) {
    if (windows.rank() != 4 || windows.dim(0) != g.n || windows.dim(1) != g.w ||
        windows.dim(2) != g.w)
        throw ShapeError("window_merge: windows shape inconsistent with grid");
    const std::size_t c = windows.dim(3);
    return gather(windows, detail::merge_indices(g, c), {g.H, g.W, c});
}

// Reflect-pad on the bottom/right to the next multiple of w (identity when
// already divisible), and the crop that undoes it.
template <class T>
BasicTensor<T> pad_to_multiple_reflect(const BasicTensor<T>& f, std::size_t w) {
    const std::size_t H = f.dim(0), W = f.dim(1), c = f.dim(2);
    const std::size_t Hp = (H + w - 1) / w * w;
    const std::size_t Wp = (W + w - 1) / w * w;
    if (Hp == H && Wp == W) return f;
    auto reflect = [](std::size_t i, std::size_t n) {
        if (i < n) return i;
        const std::size_t over = i - (n - 1);
        return over < n ? n - 1 - over : std::size_t(0);
    };
    std::vector<std::size_t> idx(Hp * Wp * c);
    std::size_t o = 0;
    for (std::size_t i = 0; i < Hp; ++i) {
        const std::size_t si = reflect(i, H);
        for (std::size_t j = 0; j < Wp; ++j) {
            const std::size_t sj = reflect(j, W);
            const std::size_t src = (si * W + sj) * c;
            for (std::size_t ch = 0; ch < c; ++ch) idx[o++] = src + ch;
        }
    }
    return gather(f, std::move(idx), {Hp, Wp, c});
}

template <class T>
BasicTensor<T> crop_top_left(const BasicTensor<T>& f, std::size_t H, std::size_t W) {
    if (f.dim(0) == H && f.dim(1) == W) return f;
    if (f.dim(0) < H || f.dim(1) < W) throw ShapeError("crop_top_left: target larger than input");
    const std::size_t c = f.dim(2), Wf = f.dim(1);
    std::vector<std::size_t> idx(H * W * c);
    std::size_t o = 0;
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
            const std::size_t src = (i * Wf + j) * c;
            for (std::size_t ch = 0; ch < c; ++ch) idx[o++] = src + ch;
        }
    return gather(f, std::move(idx), {H, W, c});
}

// ---- the block ----

// A1: no pixel-level attention (windows embed directly); A2: no window-level
// attention (local only); A3: local output feeds the window embedding as an
// auxiliary bypass; A4: the full local-to-global block.
enum class AblationVariant { A1, A2, A3, A4 };

inline const char* variant_name(AblationVariant v) {
    switch (v) {
        case AblationVariant::A1: return "A1";
        case AblationVariant::A2: return "A2";
        case AblationVariant::A3: return "A3";
        case AblationVariant::A4: return "A4";
    }
    return "?";
}

inline AblationVariant parse_variant(const std::string& s) {
    if (s == "A1") return AblationVariant::A1;
    if (s == "A2") return AblationVariant::A2;
    if (s == "A3") return AblationVariant::A3;
    if (s == "A4") return AblationVariant::A4;
    throw ConfigError("unknown attention variant '" + s + "' (expected A1|A2|A3|A4)");
}

struct ComoVitSettings {
    std::size_t channels = 15;    // c == c1: branch outputs are summed
    std::size_t heads = 5;
    std::size_t window = 16;
    std::size_t global_dim = 60;  // d_g, window-token width
    std::size_t mlp_ratio = 4;
    std::size_t se_reduction = 4;
    double drop_path = 0.1;
    // Grid the learnable window-position table is sized for; other grids are
    // served by nearest-neighbor lookup into this table.
    std::size_t pos_grid_h = 4, pos_grid_w = 4;
    AblationVariant variant = AblationVariant::A4;
};

// Pixel-level attention inside non-overlapping windows, a parallel conv+SE
// branch, window embedding, attention across windows, and a residual merge
// back to the [H,W,c] map.
template <class T>
struct ComoVitBlock {
    ComoVitSettings cfg;

    // local branch
    Conv2dLayer<T> pixel_embed;          // 1x1, c -> c
    BasicTensor<T> pixel_pos;            // [m, c]
    TransformerStage<T> local_stage;

    // conv branch
    LayerNormLayer<T> conv_ln;
    Conv2dLayer<T> branch_conv;          // 3x3, c -> c
    Linear<T> se_fc1, se_fc2;

    // global branch
    Linear<T> win_embed;                 // w*w*c -> d_g
    Linear<T> aux_embed;                 // A3 only: w*w*c -> d_g
    BasicTensor<T> win_pos;              // [pos_grid_h*pos_grid_w, d_g]
    TransformerStage<T> global_stage;
    Linear<T> win_unembed;               // d_g -> w*w*c

    ComoVitBlock() = default;

    ComoVitBlock(const ComoVitSettings& settings, SeedStream& seeds) : cfg(settings) {
        const std::size_t c = cfg.channels;
        const std::size_t m = cfg.window * cfg.window;
        const bool local = cfg.variant != AblationVariant::A1;
        const bool global = cfg.variant != AblationVariant::A2;

        if (local) {
            pixel_embed = Conv2dLayer<T>(c, c, 1, seeds);
            pixel_pos = create<T>({m, c}, init_normal(0.0, 0.02, seeds.next()), true);
            local_stage = TransformerStage<T>(c, cfg.heads, cfg.mlp_ratio, seeds);
        }
        conv_ln = LayerNormLayer<T>(c);
        branch_conv = Conv2dLayer<T>(c, c, 3, seeds);
        const std::size_t bottleneck = std::max<std::size_t>(1, c / cfg.se_reduction);
        se_fc1 = Linear<T>(c, bottleneck, seeds);
        se_fc2 = Linear<T>(bottleneck, c, seeds);
        if (global) {
            win_embed = Linear<T>(m * c, cfg.global_dim, seeds);
            if (cfg.variant == AblationVariant::A3) aux_embed = Linear<T>(m * c, cfg.global_dim, seeds);
            win_pos = create<T>({cfg.pos_grid_h * cfg.pos_grid_w, cfg.global_dim},
                                init_normal(0.0, 0.02, seeds.next()), true);
            global_stage = TransformerStage<T>(cfg.global_dim, cfg.heads, cfg.mlp_ratio, seeds);
            win_unembed = Linear<T>(cfg.global_dim, m * c, seeds);
        }
    }

    void register_params(ParamStore<T>& ps, const std::string& prefix) {
        const bool local = cfg.variant != AblationVariant::A1;
        const bool global = cfg.variant != AblationVariant::A2;
        if (local) {
            pixel_embed.register_params(ps, prefix + ".embed");
            ps.add(prefix + ".pixel_pos", pixel_pos);
            local_stage.register_params(ps, prefix + ".local");
        }
        conv_ln.register_params(ps, prefix + ".conv_ln");
        branch_conv.register_params(ps, prefix + ".conv");
        se_fc1.register_params(ps, prefix + ".se.fc1");
        se_fc2.register_params(ps, prefix + ".se.fc2");
        if (global) {
            win_embed.register_params(ps, prefix + ".win_embed");
            if (cfg.variant == AblationVariant::A3)
                aux_embed.register_params(ps, prefix + ".aux_embed");
            ps.add(prefix + ".win_pos", win_pos);
            global_stage.register_params(ps, prefix + ".global");
            win_unembed.register_params(ps, prefix + ".win_unembed");
        }
    }

    // Pixel sequence for the local transformer: 1x1 projection, window
    // partition, learnable per-pixel location embedding.
    BasicTensor<T> pixel_sequence(const BasicTensor<T>& f, const WindowGrid& g) const {
        auto embedded = conv_hwc(pixel_embed, f);                 // [H,W,c]
        auto [wins, grid] = window_partition(embedded, cfg.window);
        (void)grid;
        auto seq = reshape(wins, {g.n, g.m, cfg.channels});
        return add(seq, pixel_pos);
    }

    // Pre-norm residual MSA + MLP over the m pixels of each window.
    BasicTensor<T> local_transformer(const BasicTensor<T>& x, const DropPath& dp,
                                     BasicTensor<T>* attn_out = nullptr) const {
        return local_stage.forward(x, dp, attn_out);
    }

    // F' = Conv(LN(F)); F_conv = F' (.) SE(F'). The overlapped 3x3 kernel is
    // what lets information cross window boundaries before the global step.
    BasicTensor<T> conv_se_branch(const BasicTensor<T>& f) const {
        auto fp = conv_hwc(branch_conv, conv_ln.forward(f));       // [H,W,c]
        auto pooled = reshape(global_avg_pool(hwc_to_bchw(fp)), {cfg.channels});
        auto gate = sigmoid(se_fc2.forward(relu(se_fc1.forward(pooled))));  // [c]
        return mul(fp, gate);
    }

    // u^i = FC(Vec(C^i)) plus the learnable window-position embedding.
    BasicTensor<T> window_embedding(const BasicTensor<T>& combined, const WindowGrid& g) const {
        auto u = win_embed.forward(reshape(combined, {g.n, g.m * cfg.channels}));
        return add(u, window_positions(g));
    }

    // Attention across the n window tokens, projected back to windows and
    // merged; the caller adds the result residually onto merge(C).
    BasicTensor<T> global_transformer(const BasicTensor<T>& u, const WindowGrid& g,
                                      const DropPath& dp,
                                      BasicTensor<T>* attn_out = nullptr) const {
        auto tokens = reshape(u, {std::size_t(1), g.n, cfg.global_dim});
        auto y = global_stage.forward(tokens, dp, attn_out);
        auto windows = reshape(win_unembed.forward(reshape(y, {g.n, cfg.global_dim})),
                               {g.n, g.w, g.w, cfg.channels});
        return window_merge(windows, g);
    }

    BasicTensor<T> forward(const BasicTensor<T>& f, const DropPath& dp) const {
        if (f.rank() != 3 || f.dim(2) != cfg.channels)
            throw ShapeError("como_vit: expected [H,W," + std::to_string(cfg.channels) + "]");
        const auto g = WindowGrid::make(f.dim(0), f.dim(1), cfg.window);

        auto f_conv = conv_se_branch(f);
        auto q_wins = reshape(window_partition(f_conv, cfg.window).first,
                              {g.n, g.m, cfg.channels});

        BasicTensor<T> y;  // local-attention output, [n,m,c]
        if (cfg.variant != AblationVariant::A1) {
            y = local_transformer(pixel_sequence(f, g), dp);
        }

        // C^i = Q^i + Y^i elementwise; A1 and A3 use the conv branch alone.
        BasicTensor<T> combined = q_wins;
        if (cfg.variant == AblationVariant::A2 || cfg.variant == AblationVariant::A4)
            combined = add(q_wins, y);

        auto merged = window_merge(reshape(combined, {g.n, g.w, g.w, cfg.channels}), g);
        if (cfg.variant == AblationVariant::A2) return merged;

        auto u = window_embedding(combined, g);
        if (cfg.variant == AblationVariant::A3)
            u = add(u, aux_embed.forward(reshape(y, {g.n, g.m * cfg.channels})));
        return add(merged, global_transformer(u, g, dp));
    }

private:
    // Window-position rows for the current grid; nearest-neighbor lookup when
    // the grid differs from the one the table was sized for.
    BasicTensor<T> window_positions(const WindowGrid& g) const {
        const std::size_t ph = cfg.pos_grid_h, pw = cfg.pos_grid_w, d = cfg.global_dim;
        if (g.gh == ph && g.gw == pw) return win_pos;
        std::vector<std::size_t> idx(g.n * d);
        std::size_t o = 0;
        for (std::size_t r = 0; r < g.gh; ++r) {
            const std::size_t sr = std::min(ph - 1, r * ph / g.gh);
            for (std::size_t col = 0; col < g.gw; ++col) {
                const std::size_t sc = std::min(pw - 1, col * pw / g.gw);
                const std::size_t base = (sr * pw + sc) * d;
                for (std::size_t k = 0; k < d; ++k) idx[o++] = base + k;
            }
        }
        return gather(win_pos, std::move(idx), {g.n, d});
    }
};

}  // namespace iagc
