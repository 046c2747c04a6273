#pragma once

#include <vector>

#include "iagc/model.hpp"
#include "iagc/ops.hpp"
#include "iagc/tensor.hpp"

namespace iagc {

enum class CharbonnierMode {
    WholeTensor,  // sqrt(||d||^2 + eps^2), one term per stage
    Elementwise,  // mean over elements of sqrt(d^2 + eps^2)
};

namespace detail {

// Forward difference with replicate edge along the given spatial axis of a
// [H,W,C] tensor; the last row/column of differences is zero.
template <class T>
BasicTensor<T> forward_diff(const BasicTensor<T>& x, std::size_t axis) {
    const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
    std::vector<std::size_t> idx(x.numel());
    std::size_t o = 0;
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
            const std::size_t si = (axis == 0 && i + 1 < H) ? i + 1 : i;
            const std::size_t sj = (axis == 1 && j + 1 < W) ? j + 1 : j;
            const std::size_t axis0 = (axis == 0) ? si : i;
            const std::size_t axis1 = (axis == 1) ? sj : j;
            const std::size_t src = (axis0 * W + axis1) * C;
            for (std::size_t ch = 0; ch < C; ++ch) idx[o++] = src + ch;
        }
    auto shifted = gather(x, std::move(idx), x.shape());
    return sub(shifted, x);
}

}  // namespace detail

template <class T>
BasicTensor<T> charbonnier_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target,
                                T eps = T(1e-3),
                                CharbonnierMode mode = CharbonnierMode::WholeTensor) {
    if (pred.shape() != target.shape())
        throw ShapeError("charbonnier: shape mismatch " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
    auto d = sub(pred, target);
    auto eps2 = scalar_tensor<T>(eps * eps);
    if (mode == CharbonnierMode::WholeTensor)
        return sqrt(add(sum_all(mul(d, d)), eps2));
    return mean_all(sqrt(add(mul(d, d), eps2)));
}

// ||grad(pred) - grad(target)||^2 with horizontal + vertical forward
// differences, replicate edge.
template <class T>
BasicTensor<T> gradient_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
    if (pred.shape() != target.shape()) throw ShapeError("gradient_loss: shape mismatch");
    auto dx = sub(detail::forward_diff(pred, 1), detail::forward_diff(target, 1));
    auto dy = sub(detail::forward_diff(pred, 0), detail::forward_diff(target, 0));
    return add(sum_all(mul(dx, dx)), sum_all(mul(dy, dy)));
}

// Total training loss: per stage, Charbonnier plus gradient loss, summed over
// the three stage outputs.
template <class T>
BasicTensor<T> loss_total(const StageOutputs<T>& outputs, const BasicTensor<T>& target,
                          T eps = T(1e-3), CharbonnierMode mode = CharbonnierMode::WholeTensor) {
    BasicTensor<T> total;
    bool first = true;
    for (const auto* stage : {&outputs.r_s1, &outputs.r_s2, &outputs.r_s3}) {
        auto term = add(charbonnier_loss(*stage, target, eps, mode), gradient_loss(*stage, target));
        total = first ? term : add(total, term);
        first = false;
    }
    return total;
}

}  // namespace iagc
