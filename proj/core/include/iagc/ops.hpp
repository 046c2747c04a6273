#pragma once

#include <bit>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <utility>
#include <vector>

#include "iagc/tensor.hpp"
#include "iagc/threading.hpp"

namespace iagc {

namespace detail {

constexpr std::size_t kEwiseGrain = 1 << 15;

// exp for the float softmax path: 2^y split into integer exponent and a
// degree-6 polynomial on the fractional part (|rel err| ~1e-7, branch-free,
// vectorizable). Inputs are <= 0 after max subtraction; anything below -87
// saturates to a denormal-range value that normalization treats as zero.
// The double path keeps std::exp so 64-bit gradient checks see libm accuracy.
inline float fast_exp(float x) {
    x = x < -87.0f ? -87.0f : x;
    const float y = x * 1.4426950408889634f;  // log2(e)
    // round-to-nearest via the 2^23 magic constant (|y| < 2^22 here)
    const float n = (y + 12582912.0f) - 12582912.0f;
    const float f = y - n;
    // 2^f = e^{f ln2}, series in f*ln2 through degree 6
    float p = 1.54035304e-4f;
    p = p * f + 1.33335581e-3f;
    p = p * f + 9.61812911e-3f;
    p = p * f + 5.55041087e-2f;
    p = p * f + 2.40226507e-1f;
    p = p * f + 6.93147181e-1f;
    p = p * f + 1.0f;
    return p * std::bit_cast<float>(std::uint32_t(int(n) + 127) << 23);
}

template <class T>
inline T softmax_exp(T x) {
    if constexpr (std::is_same_v<T, float>)
        return fast_exp(x);
    else
        return std::exp(x);
}

// How each element of b maps onto the (larger or equal) shape of a.
// b broadcasts onto a: shapes right-aligned, every aligned dim of b must
// equal a's or be 1. The result always has a's shape.
template <class T>
struct BcastPlan {
    enum class Mode { Same, Scalar, Suffix, General } mode = Mode::Same;
    std::size_t period = 0;                // Suffix: b.numel()
    std::vector<std::size_t> out_dims;     // General
    std::vector<std::size_t> b_strides;    // General, 0 on broadcast dims

    std::size_t map(std::size_t i) const {
        switch (mode) {
            case Mode::Same: return i;
            case Mode::Scalar: return 0;
            case Mode::Suffix: return i % period;
            case Mode::General: {
                std::size_t bi = 0, rem = i;
                for (std::size_t d = out_dims.size(); d-- > 0;) {
                    std::size_t coord = rem % out_dims[d];
                    rem /= out_dims[d];
                    bi += coord * b_strides[d];
                }
                return bi;
            }
        }
        return 0;
    }
};

template <class T>
BcastPlan<T> broadcast_plan(const Shape& a, const Shape& b, const char* opname) {
    BcastPlan<T> plan;
    if (a == b) {
        plan.mode = BcastPlan<T>::Mode::Same;
        return plan;
    }
    if (numel(b) == 1) {
        plan.mode = BcastPlan<T>::Mode::Scalar;
        return plan;
    }
    if (b.size() > a.size())
        throw ShapeError(std::string(opname) + ": cannot broadcast " + shape_str(b) + " onto " +
                         shape_str(a));
    const std::size_t off = a.size() - b.size();
    bool suffix = true;
    for (std::size_t d = 0; d < b.size(); ++d) {
        if (b[d] == a[off + d]) continue;
        if (b[d] == 1) {
            suffix = false;
            continue;
        }
        throw ShapeError(std::string(opname) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
    }
    if (suffix) {
        plan.mode = BcastPlan<T>::Mode::Suffix;
        plan.period = numel(b);
        return plan;
    }
    plan.mode = BcastPlan<T>::Mode::General;
    plan.out_dims = a;
    plan.b_strides.assign(a.size(), 0);
    std::size_t stride = 1;
    for (std::size_t d = b.size(); d-- > 0;) {
        plan.b_strides[off + d] = (b[d] == 1) ? 0 : stride;
        stride *= b[d];
    }
    return plan;
}

}  // namespace detail

// ---- binary elementwise ----

namespace detail {

// OpTag: per-element value and partials. All inlined per instantiation.
struct AddTag {
    template <class T> static T fwd(T a, T b) { return a + b; }
    template <class T> static T dfa(T, T) { return T(1); }
    template <class T> static T dfb(T, T) { return T(1); }
};
struct SubTag {
    template <class T> static T fwd(T a, T b) { return a - b; }
    template <class T> static T dfa(T, T) { return T(1); }
    template <class T> static T dfb(T, T) { return T(-1); }
};
struct MulTag {
    template <class T> static T fwd(T a, T b) { return a * b; }
    template <class T> static T dfa(T, T b) { return b; }
    template <class T> static T dfb(T a, T) { return a; }
};

template <class Tag, class T>
BasicTensor<T> binary_op(OpKind kind, const BasicTensor<T>& a, const BasicTensor<T>& b) {
    auto plan = broadcast_plan<T>(a.shape(), b.shape(), op_name(kind));
    const std::size_t n = a.numel();
    std::vector<T> out(n);
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    if (plan.mode == BcastPlan<T>::Mode::Same) {
        parallel_for(n, kEwiseGrain, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) out[i] = Tag::fwd(pa[i], pb[i]);
        });
    } else if (plan.mode == BcastPlan<T>::Mode::Scalar) {
        const T bv = pb[0];
        parallel_for(n, kEwiseGrain, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) out[i] = Tag::fwd(pa[i], bv);
        });
    } else {
        parallel_for(n, kEwiseGrain, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) out[i] = Tag::fwd(pa[i], pb[plan.map(i)]);
        });
    }
    return make_op<T>(kind, a.shape(), std::move(out), {a, b},
                      [plan](Node<T>& self) {
                          auto& ia = *self.inputs[0];
                          auto& ib = *self.inputs[1];
                          const std::size_t n = self.numel();
                          const T* go = self.grad.data();
                          const T* pa = ia.data.data();
                          const T* pb = ib.data.data();
                          if (ia.requires_grad) {
                              T* da = ia.grad.data();
                              parallel_for(n, kEwiseGrain, [&](std::size_t lo, std::size_t hi) {
                                  for (std::size_t i = lo; i < hi; ++i)
                                      da[i] += go[i] * Tag::dfa(pa[i], pb[plan.map(i)]);
                              });
                          }
                          if (ib.requires_grad) {
                              T* db = ib.grad.data();
                              if (plan.mode == BcastPlan<T>::Mode::Same) {
                                  parallel_for(n, kEwiseGrain, [&](std::size_t lo, std::size_t hi) {
                                      for (std::size_t i = lo; i < hi; ++i)
                                          db[i] += go[i] * Tag::dfb(pa[i], pb[i]);
                                  });
                              } else {
                                  for (std::size_t i = 0; i < n; ++i)
                                      db[plan.map(i)] += go[i] * Tag::dfb(pa[i], pb[plan.map(i)]);
                              }
                          }
                      });
}

}  // namespace detail

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return detail::binary_op<detail::AddTag>(OpKind::Add, a, b);
}
template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return detail::binary_op<detail::SubTag>(OpKind::Sub, a, b);
}
template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return detail::binary_op<detail::MulTag>(OpKind::Mul, a, b);
}

// ---- unary elementwise ----

namespace detail {

template <class T, class Fwd, class Bwd>
BasicTensor<T> unary_op(OpKind kind, const BasicTensor<T>& a, Fwd fwd, Bwd bwd) {
    const std::size_t n = a.numel();
    std::vector<T> out(n);
    const T* pa = a.data().data();
    parallel_for(n, kEwiseGrain, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) out[i] = fwd(pa[i]);
    });
    return make_op<T>(kind, a.shape(), std::move(out), {a},
                      [bwd](Node<T>& self) {
                          auto& in = *self.inputs[0];
                          if (!in.requires_grad) return;
                          const std::size_t n = self.numel();
                          const T* go = self.grad.data();
                          const T* px = in.data.data();
                          const T* py = self.data.data();
                          T* dx = in.grad.data();
                          parallel_for(n, kEwiseGrain, [&](std::size_t lo, std::size_t hi) {
                              for (std::size_t i = lo; i < hi; ++i) dx[i] += go[i] * bwd(px[i], py[i]);
                          });
                      });
}

}  // namespace detail

template <class T>
BasicTensor<T> ln(const BasicTensor<T>& a) {
    for (T v : a.data())
        if (!(v > T(0))) throw DomainError("ln requires strictly positive input");
    return detail::unary_op<T>(
        OpKind::Ln, a, [](T x) { return std::log(x); },
        [](T x, T) { return T(1) / x; });
}

template <class T>
BasicTensor<T> exp(const BasicTensor<T>& a) {
    return detail::unary_op<T>(
        OpKind::Exp, a, [](T x) { return std::exp(x); },
        [](T, T y) { return y; });
}

template <class T>
BasicTensor<T> sqrt(const BasicTensor<T>& a) {
    for (T v : a.data())
        if (v < T(0)) throw DomainError("sqrt requires non-negative input");
    return detail::unary_op<T>(
        OpKind::Sqrt, a, [](T x) { return std::sqrt(x); },
        [](T, T y) { return T(0.5) / y; });
}

template <class T>
BasicTensor<T> sigmoid(const BasicTensor<T>& a) {
    return detail::unary_op<T>(
        OpKind::Sigmoid, a,
        [](T x) {
            if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
            const T e = std::exp(x);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& a) {
    return detail::unary_op<T>(
        OpKind::Relu, a, [](T x) { return x > T(0) ? x : T(0); },
        [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
BasicTensor<T> gelu(const BasicTensor<T>& a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    return detail::unary_op<T>(
        OpKind::Gelu, a,
        [](T x) { return static_cast<T>(0.5 * x * (1.0 + std::erf(x * T(inv_sqrt2)))); },
        [](T x, T) {
            const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * double(x) * double(x));
            return static_cast<T>(cdf + x * pdf);
        });
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& a, T c) {
    return detail::unary_op<T>(
        OpKind::Scale, a, [c](T x) { return c * x; }, [c](T, T) { return c; });
}

template <class T>
BasicTensor<T> power_int(const BasicTensor<T>& a, int k) {
    auto ipow = [](T x, int e) {
        if (e == 0) return T(1);
        bool neg = e < 0;
        unsigned long long m = neg ? -(long long)e : e;
        T r = T(1), base = x;
        while (m) {
            if (m & 1) r *= base;
            base *= base;
            m >>= 1;
        }
        return neg ? T(1) / r : r;
    };
    if (k < 0)
        for (T v : a.data())
            if (v == T(0)) throw DomainError("power_int: zero base with negative exponent");
    return detail::unary_op<T>(
        OpKind::PowerInt, a, [=](T x) { return ipow(x, k); },
        [=](T x, T) { return k == 0 ? T(0) : T(k) * ipow(x, k - 1); });
}

// Gradient is zero wherever the input was clamped.
template <class T>
BasicTensor<T> clamp(const BasicTensor<T>& a, T lo, T hi) {
    if (!(lo <= hi)) throw Error("clamp: lo must be <= hi");
    return detail::unary_op<T>(
        OpKind::Clamp, a, [=](T x) { return x < lo ? lo : (x > hi ? hi : x); },
        [=](T x, T) { return (x > lo && x < hi) ? T(1) : T(0); });
}

// ---- spec's elementwise dispatcher ----

struct EwiseSpec {
    OpKind kind;
    double c = 0.0;  // Scale factor
    int k = 0;       // PowerInt exponent
};

template <class T>
BasicTensor<T> elementwise(const EwiseSpec& spec, const BasicTensor<T>& a,
                           const BasicTensor<T>* b = nullptr) {
    auto need_b = [&]() -> const BasicTensor<T>& {
        if (!b) throw Error(std::string(op_name(spec.kind)) + " requires two operands");
        return *b;
    };
    switch (spec.kind) {
        case OpKind::Add: return add(a, need_b());
        case OpKind::Sub: return sub(a, need_b());
        case OpKind::Mul: return mul(a, need_b());
        case OpKind::Ln: return ln(a);
        case OpKind::Exp: return exp(a);
        case OpKind::Sqrt: return sqrt(a);
        case OpKind::Sigmoid: return sigmoid(a);
        case OpKind::Relu: return relu(a);
        case OpKind::Gelu: return gelu(a);
        case OpKind::Scale: return scale(a, static_cast<T>(spec.c));
        case OpKind::PowerInt: return power_int(a, spec.k);
        default: throw Error("elementwise: unsupported kind");
    }
}

// ---- matmul ----

// a: [*, m, k]; b: [*, k, n] with identical leading dims, or plain [k, n]
// shared across the batch.
template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (a.rank() < 2 || b.rank() < 2) throw ShapeError("matmul operands must have rank >= 2");
    const auto& as = a.shape();
    const auto& bs = b.shape();
    const std::size_t m = as[as.size() - 2], k = as[as.size() - 1];
    const std::size_t kb = bs[bs.size() - 2], n = bs[bs.size() - 1];
    if (k != kb)
        throw ShapeError("matmul: inner dimensions disagree: " + shape_str(as) + " x " + shape_str(bs));
    const bool shared_b = bs.size() == 2;
    Shape batch_dims(as.begin(), as.end() - 2);
    if (!shared_b) {
        Shape bbatch(bs.begin(), bs.end() - 2);
        if (bbatch != batch_dims)
            throw ShapeError("matmul: batch dims disagree: " + shape_str(as) + " x " + shape_str(bs));
    }
    const std::size_t nb = batch_dims.empty() ? 1 : numel(batch_dims);

    Shape out_shape = batch_dims;
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<T> out(nb * m * n, T(0));

    const T* __restrict__ pa = a.data().data();
    const T* __restrict__ pb = b.data().data();
    T* __restrict__ pc = out.data();
    const std::size_t rows = nb * m;
    const std::size_t row_grain = std::max<std::size_t>(1, 8192 / std::max<std::size_t>(1, k * n));
    parallel_for(rows, row_grain, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t r = lo; r < hi; ++r) {
            const std::size_t bi = r / m, i = r % m;
            const T* __restrict__ arow = pa + (bi * m + i) * k;
            const T* __restrict__ bbase = shared_b ? pb : pb + bi * k * n;
            T* __restrict__ crow = pc + r * n;
            if (n <= 4) {
                // narrow outputs: accumulate in registers over the k loop
                T acc[4] = {T(0), T(0), T(0), T(0)};
                for (std::size_t kk = 0; kk < k; ++kk) {
                    const T av = arow[kk];
                    const T* __restrict__ brow = bbase + kk * n;
                    for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
                }
                for (std::size_t j = 0; j < n; ++j) crow[j] = acc[j];
            } else {
                for (std::size_t kk = 0; kk < k; ++kk) {
                    const T av = arow[kk];
                    const T* __restrict__ brow = bbase + kk * n;
                    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
                }
            }
        }
    });

    return make_op<T>(OpKind::Matmul, std::move(out_shape), std::move(out), {a, b},
                      [m, k, n, nb, shared_b, row_grain](Node<T>& self) {
                          auto& ia = *self.inputs[0];
                          auto& ib = *self.inputs[1];
                          const T* __restrict__ go = self.grad.data();
                          const T* __restrict__ pa = ia.data.data();
                          const T* __restrict__ pb = ib.data.data();
                          if (ia.requires_grad) {
                              T* __restrict__ da = ia.grad.data();
                              parallel_for(nb * m, row_grain, [&](std::size_t lo, std::size_t hi) {
                                  for (std::size_t r = lo; r < hi; ++r) {
                                      const std::size_t bi = r / m;
                                      const T* __restrict__ grow = go + r * n;
                                      const T* __restrict__ bbase = shared_b ? pb : pb + bi * k * n;
                                      T* __restrict__ darow = da + r * k;
                                      for (std::size_t kk = 0; kk < k; ++kk) {
                                          const T* __restrict__ brow = bbase + kk * n;
                                          T acc = T(0);
                                          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                                          darow[kk] += acc;
                                      }
                                  }
                              });
                          }
                          if (ib.requires_grad) {
                              T* __restrict__ db = ib.grad.data();
                              if (shared_b) {
                                  // dB[kk][j] = sum over batch and rows; each kk
                                  // row is owned by one chunk.
                                  parallel_for(k, 1, [&](std::size_t lo, std::size_t hi) {
                                      for (std::size_t kk = lo; kk < hi; ++kk) {
                                          T* __restrict__ dbrow = db + kk * n;
                                          for (std::size_t r = 0; r < nb * m; ++r) {
                                              const T av = pa[r * k + kk];
                                              if (av == T(0)) continue;
                                              const T* __restrict__ grow = go + r * n;
                                              for (std::size_t j = 0; j < n; ++j)
                                                  dbrow[j] += av * grow[j];
                                          }
                                      }
                                  });
                              } else {
                                  parallel_for(nb, 1, [&](std::size_t lo, std::size_t hi) {
                                      for (std::size_t bi = lo; bi < hi; ++bi) {
                                          const T* __restrict__ abase = pa + bi * m * k;
                                          const T* __restrict__ gbase = go + bi * m * n;
                                          T* __restrict__ dbbase = db + bi * k * n;
                                          for (std::size_t i = 0; i < m; ++i) {
                                              const T* __restrict__ arow = abase + i * k;
                                              const T* __restrict__ grow = gbase + i * n;
                                              for (std::size_t kk = 0; kk < k; ++kk) {
                                                  const T av = arow[kk];
                                                  if (av == T(0)) continue;
                                                  T* __restrict__ dbrow = dbbase + kk * n;
                                                  for (std::size_t j = 0; j < n; ++j)
                                                      dbrow[j] += av * grow[j];
                                              }
                                          }
                                      }
                                  });
                              }
                          }
                      });
}

// ---- conv2d ----

// Cross-correlation, zero padding. x: [B,C,H,W], w: [O,C,kh,kw], bias: [O].
template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& bias,
                      std::size_t stride = 1, std::size_t pad = 0) {
    if (x.rank() != 4) throw ShapeError("conv2d: input must be [B,C,H,W]");
    if (w.rank() != 4) throw ShapeError("conv2d: weight must be [O,C,kh,kw]");
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != C)
        throw ShapeError("conv2d: channel mismatch, input C=" + std::to_string(C) + " weight C=" +
                         std::to_string(w.dim(1)));
    if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("conv2d: kernel extents must be odd");
    if (bias.numel() != O) throw ShapeError("conv2d: bias length must equal output channels");
    if (stride == 0) throw ShapeError("conv2d: stride must be >= 1");
    if (H + 2 * pad < kh || W + 2 * pad < kw) throw ShapeError("conv2d: kernel larger than padded input");
    const std::size_t Ho = (H + 2 * pad - kh) / stride + 1;
    const std::size_t Wo = (W + 2 * pad - kw) / stride + 1;

    std::vector<T> out(B * O * Ho * Wo);
    const T* px = x.data().data();
    const T* pw = w.data().data();
    const T* pbias = bias.data().data();
    T* po = out.data();

    const std::size_t ip = pad;  // signed arithmetic below uses ptrdiff_t
    parallel_for(B * O, 1, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t bo = lo; bo < hi; ++bo) {
            const std::size_t b = bo / O, oc = bo % O;
            T* plane = po + bo * Ho * Wo;
            std::fill(plane, plane + Ho * Wo, pbias[oc]);
            for (std::size_t ic = 0; ic < C; ++ic) {
                const T* xplane = px + (b * C + ic) * H * W;
                const T* wslice = pw + (oc * C + ic) * kh * kw;
                for (std::size_t r = 0; r < kh; ++r) {
                    for (std::size_t s = 0; s < kw; ++s) {
                        const T wv = wslice[r * kw + s];
                        if (wv == T(0)) continue;
                        for (std::size_t oh = 0; oh < Ho; ++oh) {
                            const std::ptrdiff_t ih = std::ptrdiff_t(oh * stride + r) - std::ptrdiff_t(ip);
                            if (ih < 0 || ih >= std::ptrdiff_t(H)) continue;
                            T* orow = plane + oh * Wo;
                            const T* xrow = xplane + ih * W;
                            if (stride == 1) {
                                const std::ptrdiff_t shift = std::ptrdiff_t(s) - std::ptrdiff_t(ip);
                                const std::size_t ow0 = shift < 0 ? std::size_t(-shift) : 0;
                                const std::size_t ow1 =
                                    std::min<std::size_t>(Wo, std::size_t(std::ptrdiff_t(W) - shift));
                                for (std::size_t ow = ow0; ow < ow1; ++ow)
                                    orow[ow] += wv * xrow[std::size_t(std::ptrdiff_t(ow) + shift)];
                            } else {
                                for (std::size_t ow = 0; ow < Wo; ++ow) {
                                    const std::ptrdiff_t iw =
                                        std::ptrdiff_t(ow * stride + s) - std::ptrdiff_t(ip);
                                    if (iw < 0 || iw >= std::ptrdiff_t(W)) continue;
                                    orow[ow] += wv * xrow[iw];
                                }
                            }
                        }
                    }
                }
            }
        }
    });

    return make_op<T>(OpKind::Conv2d, {B, O, Ho, Wo}, std::move(out), {x, w, bias},
                      [B, C, H, W, O, kh, kw, Ho, Wo, stride, pad](Node<T>& self) {
                          auto& ix = *self.inputs[0];
                          auto& iw = *self.inputs[1];
                          auto& ibias = *self.inputs[2];
                          const T* go = self.grad.data();
                          const T* px = ix.data.data();
                          const T* pw = iw.data.data();

                          if (ibias.requires_grad) {
                              T* dbias = ibias.grad.data();
                              for (std::size_t b = 0; b < B; ++b)
                                  for (std::size_t oc = 0; oc < O; ++oc) {
                                      const T* plane = go + (b * O + oc) * Ho * Wo;
                                      T acc = T(0);
                                      for (std::size_t i = 0; i < Ho * Wo; ++i) acc += plane[i];
                                      dbias[oc] += acc;
                                  }
                          }
                          if (iw.requires_grad) {
                              T* dw = iw.grad.data();
                              parallel_for(O * C, 1, [&](std::size_t lo, std::size_t hi) {
                                  for (std::size_t oi = lo; oi < hi; ++oi) {
                                      const std::size_t oc = oi / C, ic = oi % C;
                                      T* dwslice = dw + oi * kh * kw;
                                      for (std::size_t r = 0; r < kh; ++r)
                                          for (std::size_t s = 0; s < kw; ++s) {
                                              T acc = T(0);
                                              for (std::size_t b = 0; b < B; ++b) {
                                                  const T* gplane = go + (b * O + oc) * Ho * Wo;
                                                  const T* xplane = px + (b * C + ic) * H * W;
                                                  for (std::size_t oh = 0; oh < Ho; ++oh) {
                                                      const std::ptrdiff_t ih =
                                                          std::ptrdiff_t(oh * stride + r) - std::ptrdiff_t(pad);
                                                      if (ih < 0 || ih >= std::ptrdiff_t(H)) continue;
                                                      const T* grow = gplane + oh * Wo;
                                                      const T* xrow = xplane + ih * W;
                                                      for (std::size_t ow = 0; ow < Wo; ++ow) {
                                                          const std::ptrdiff_t iww =
                                                              std::ptrdiff_t(ow * stride + s) -
                                                              std::ptrdiff_t(pad);
                                                          if (iww < 0 || iww >= std::ptrdiff_t(W)) continue;
                                                          acc += grow[ow] * xrow[iww];
                                                      }
                                                  }
                                              }
                                              dwslice[r * kw + s] += acc;
                                          }
                                  }
                              });
                          }
                          if (ix.requires_grad) {
                              T* dx = ix.grad.data();
                              parallel_for(B * C, 1, [&](std::size_t lo, std::size_t hi) {
                                  for (std::size_t bi = lo; bi < hi; ++bi) {
                                      const std::size_t b = bi / C, ic = bi % C;
                                      T* dxplane = dx + bi * H * W;
                                      for (std::size_t oc = 0; oc < O; ++oc) {
                                          const T* gplane = go + (b * O + oc) * Ho * Wo;
                                          const T* wslice = pw + (oc * C + ic) * kh * kw;
                                          for (std::size_t r = 0; r < kh; ++r)
                                              for (std::size_t s = 0; s < kw; ++s) {
                                                  const T wv = wslice[r * kw + s];
                                                  if (wv == T(0)) continue;
                                                  for (std::size_t oh = 0; oh < Ho; ++oh) {
                                                      const std::ptrdiff_t ih =
                                                          std::ptrdiff_t(oh * stride + r) - std::ptrdiff_t(pad);
                                                      if (ih < 0 || ih >= std::ptrdiff_t(H)) continue;
                                                      const T* grow = gplane + oh * Wo;
                                                      T* dxrow = dxplane + ih * W;
                                                      for (std::size_t ow = 0; ow < Wo; ++ow) {
                                                          const std::ptrdiff_t iww =
                                                              std::ptrdiff_t(ow * stride + s) -
                                                              std::ptrdiff_t(pad);
                                                          if (iww < 0 || iww >= std::ptrdiff_t(W)) continue;
                                                          dxrow[iww] += wv * grow[ow];
                                                      }
                                                  }
                                              }
                                      }
                                  }
                              });
                          }
                      });
}

// ---- softmax ----

template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& a, int axis) {
    const int r = static_cast<int>(a.rank());
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw ShapeError("softmax: axis out of range");
    const auto& s = a.shape();
    std::size_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= s[d];
    const std::size_t len = s[axis];
    for (int d = axis + 1; d < r; ++d) inner *= s[d];

    std::vector<T> out(a.numel());
    const T* __restrict__ pa = a.data().data();
    T* __restrict__ po = out.data();
    const std::size_t rows = outer * inner;
    const std::size_t grain = std::max<std::size_t>(1, 4096 / std::max<std::size_t>(1, len));
    if (inner == 1) {
        parallel_for(rows, grain, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t row = lo; row < hi; ++row) {
                const T* __restrict__ x = pa + row * len;
                T* __restrict__ y = po + row * len;
                T mx = x[0];
                for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, x[j]);
                for (std::size_t j = 0; j < len; ++j) y[j] = detail::softmax_exp(x[j] - mx);
                T s0 = T(0), s1 = T(0), s2 = T(0), s3 = T(0);
                std::size_t j = 0;
                for (; j + 4 <= len; j += 4) {
                    s0 += y[j];
                    s1 += y[j + 1];
                    s2 += y[j + 2];
                    s3 += y[j + 3];
                }
                for (; j < len; ++j) s0 += y[j];
                const T inv = T(1) / ((s0 + s1) + (s2 + s3));
                for (std::size_t jj = 0; jj < len; ++jj) y[jj] *= inv;
            }
        });
    } else {
        parallel_for(rows, grain, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t row = lo; row < hi; ++row) {
                const std::size_t o = row / inner, in = row % inner;
                const std::size_t base = o * len * inner + in;
                T mx = pa[base];
                for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, pa[base + j * inner]);
                T sum = T(0);
                for (std::size_t j = 0; j < len; ++j) {
                    const T e = detail::softmax_exp(pa[base + j * inner] - mx);
                    po[base + j * inner] = e;
                    sum += e;
                }
                const T inv = T(1) / sum;
                for (std::size_t j = 0; j < len; ++j) po[base + j * inner] *= inv;
            }
        });
    }

    return make_op<T>(OpKind::Softmax, a.shape(), std::move(out), {a},
                      [len, inner, rows, grain](Node<T>& self) {
                          auto& in0 = *self.inputs[0];
                          if (!in0.requires_grad) return;
                          const T* __restrict__ go = self.grad.data();
                          const T* __restrict__ py = self.data.data();
                          T* __restrict__ dx = in0.grad.data();
                          if (inner == 1) {
                              parallel_for(rows, grain, [&](std::size_t lo, std::size_t hi) {
                                  for (std::size_t row = lo; row < hi; ++row) {
                                      const T* __restrict__ g = go + row * len;
                                      const T* __restrict__ y = py + row * len;
                                      T* __restrict__ d = dx + row * len;
                                      T dot = T(0);
                                      for (std::size_t j = 0; j < len; ++j) dot += g[j] * y[j];
                                      for (std::size_t j = 0; j < len; ++j)
                                          d[j] += y[j] * (g[j] - dot);
                                  }
                              });
                              return;
                          }
                          parallel_for(rows, grain, [&](std::size_t lo, std::size_t hi) {
                              for (std::size_t row = lo; row < hi; ++row) {
                                  const std::size_t o = row / inner, in = row % inner;
                                  const std::size_t base = o * len * inner + in;
                                  T dot = T(0);
                                  for (std::size_t j = 0; j < len; ++j)
                                      dot += go[base + j * inner] * py[base + j * inner];
                                  for (std::size_t j = 0; j < len; ++j) {
                                      const std::size_t idx = base + j * inner;
                                      dx[idx] += py[idx] * (go[idx] - dot);
                                  }
                              }
                          });
                      });
}

// ---- layernorm over the last axis ----

template <class T>
BasicTensor<T> layernorm(const BasicTensor<T>& a, const BasicTensor<T>& gain,
                         const BasicTensor<T>& offset, T eps = T(1e-5)) {
    const std::size_t L = a.shape().back();
    if (gain.numel() != L || offset.numel() != L)
        throw ShapeError("layernorm: gain/offset must match last axis extent " + std::to_string(L));
    const std::size_t rows = a.numel() / L;

    std::vector<T> out(a.numel());
    auto mu = std::make_shared<std::vector<T>>(rows);
    auto istd = std::make_shared<std::vector<T>>(rows);
    const T* pa = a.data().data();
    const T* pg = gain.data().data();
    const T* pb = offset.data().data();
    T* po = out.data();
    parallel_for(rows, 64, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t r = lo; r < hi; ++r) {
            const T* x = pa + r * L;
            T m = T(0);
            for (std::size_t j = 0; j < L; ++j) m += x[j];
            m /= T(L);
            T v = T(0);
            for (std::size_t j = 0; j < L; ++j) {
                const T d = x[j] - m;
                v += d * d;
            }
            v /= T(L);
            const T is = T(1) / std::sqrt(v + eps);
            (*mu)[r] = m;
            (*istd)[r] = is;
            T* y = po + r * L;
            for (std::size_t j = 0; j < L; ++j) y[j] = pg[j] * (x[j] - m) * is + pb[j];
        }
    });

    return make_op<T>(OpKind::LayerNorm, a.shape(), std::move(out), {a, gain, offset},
                      [L, rows, mu, istd](Node<T>& self) {
                          auto& ia = *self.inputs[0];
                          auto& ig = *self.inputs[1];
                          auto& ib = *self.inputs[2];
                          const T* go = self.grad.data();
                          const T* pa = ia.data.data();
                          const T* pg = ig.data.data();
                          if (ia.requires_grad) {
                              T* dx = ia.grad.data();
                              parallel_for(rows, 64, [&](std::size_t lo, std::size_t hi) {
                                  for (std::size_t r = lo; r < hi; ++r) {
                                      const T* x = pa + r * L;
                                      const T* g = go + r * L;
                                      const T m = (*mu)[r], is = (*istd)[r];
                                      T sum1 = T(0), sum2 = T(0);
                                      for (std::size_t j = 0; j < L; ++j) {
                                          const T xh = (x[j] - m) * is;
                                          const T dxh = g[j] * pg[j];
                                          sum1 += dxh;
                                          sum2 += dxh * xh;
                                      }
                                      T* d = dx + r * L;
                                      for (std::size_t j = 0; j < L; ++j) {
                                          const T xh = (x[j] - m) * is;
                                          const T dxh = g[j] * pg[j];
                                          d[j] += is * (dxh - sum1 / T(L) - xh * sum2 / T(L));
                                      }
                                  }
                              });
                          }
                          if (ig.requires_grad || ib.requires_grad) {
                              T* dg = ig.requires_grad ? ig.grad.data() : nullptr;
                              T* db = ib.requires_grad ? ib.grad.data() : nullptr;
                              for (std::size_t r = 0; r < rows; ++r) {
                                  const T* x = pa + r * L;
                                  const T* g = go + r * L;
                                  const T m = (*mu)[r], is = (*istd)[r];
                                  for (std::size_t j = 0; j < L; ++j) {
                                      if (dg) dg[j] += g[j] * (x[j] - m) * is;
                                      if (db) db[j] += g[j];
                                  }
                              }
                          }
                      });
}

// ---- global average pool: [B,C,H,W] -> [B,C] ----

template <class T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& a) {
    if (a.rank() != 4) throw ShapeError("global_avg_pool: input must be [B,C,H,W]");
    const std::size_t B = a.dim(0), C = a.dim(1), HW = a.dim(2) * a.dim(3);
    std::vector<T> out(B * C);
    const T* pa = a.data().data();
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        T acc = T(0);
        const T* p = pa + bc * HW;
        for (std::size_t i = 0; i < HW; ++i) acc += p[i];
        out[bc] = acc / T(HW);
    }
    return make_op<T>(OpKind::GlobalAvgPool, {B, C}, std::move(out), {a},
                      [B, C, HW](Node<T>& self) {
                          auto& in0 = *self.inputs[0];
                          if (!in0.requires_grad) return;
                          const T* go = self.grad.data();
                          T* dx = in0.grad.data();
                          for (std::size_t bc = 0; bc < B * C; ++bc) {
                              const T g = go[bc] / T(HW);
                              T* p = dx + bc * HW;
                              for (std::size_t i = 0; i < HW; ++i) p[i] += g;
                          }
                      });
}

// ---- reductions ----

template <class T>
BasicTensor<T> sum_all(const BasicTensor<T>& a) {
    double acc = 0.0;  // double accumulation keeps float sums stable
    for (T v : a.data()) acc += double(v);
    return make_op<T>(OpKind::SumAll, {1}, {static_cast<T>(acc)}, {a},
                      [](Node<T>& self) {
                          auto& in0 = *self.inputs[0];
                          if (!in0.requires_grad) return;
                          const T g = self.grad[0];
                          T* dx = in0.grad.data();
                          const std::size_t n = in0.numel();
                          parallel_for(n, detail::kEwiseGrain, [&](std::size_t lo, std::size_t hi) {
                              for (std::size_t i = lo; i < hi; ++i) dx[i] += g;
                          });
                      });
}

template <class T>
BasicTensor<T> mean_all(const BasicTensor<T>& a) {
    return scale(sum_all(a), T(1) / T(a.numel()));
}

// ---- data movement ----

// out[i] = a[indices[i]]; any linear rearrangement (permute, window
// partition/merge, shifts, crops, pads with replication) is a gather with
// precomputed indices. Backward scatter-adds, serially, so repeated source
// indices are well-defined and deterministic.
template <class T>
BasicTensor<T> gather(const BasicTensor<T>& a, std::shared_ptr<const std::vector<std::size_t>> indices,
                      Shape out_shape) {
    BasicTensor<T>::validate_shape(out_shape);
    if (indices->size() != numel(out_shape))
        throw ShapeError("gather: index count does not match output shape");
    const std::size_t an = a.numel();
    for (std::size_t idx : *indices)
        if (idx >= an) throw ShapeError("gather: index out of range");
    const std::size_t n = indices->size();
    std::vector<T> out(n);
    const T* pa = a.data().data();
    const auto& ix = *indices;
    parallel_for(n, detail::kEwiseGrain, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) out[i] = pa[ix[i]];
    });
    return make_op<T>(OpKind::Gather, std::move(out_shape), std::move(out), {a},
                      [indices](Node<T>& self) {
                          auto& in0 = *self.inputs[0];
                          if (!in0.requires_grad) return;
                          const T* go = self.grad.data();
                          T* dx = in0.grad.data();
                          const auto& ix = *indices;
                          for (std::size_t i = 0; i < ix.size(); ++i) dx[ix[i]] += go[i];
                      });
}

template <class T>
BasicTensor<T> gather(const BasicTensor<T>& a, std::vector<std::size_t> indices, Shape out_shape) {
    return gather(a, std::make_shared<const std::vector<std::size_t>>(std::move(indices)),
                  std::move(out_shape));
}

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape new_shape) {
    BasicTensor<T>::validate_shape(new_shape);
    if (numel(new_shape) != a.numel())
        throw ShapeError("reshape: element count mismatch " + shape_str(a.shape()) + " -> " +
                         shape_str(new_shape));
    std::vector<T> out = a.data();
    return make_op<T>(OpKind::Reshape, std::move(new_shape), std::move(out), {a},
                      [](Node<T>& self) {
                          auto& in0 = *self.inputs[0];
                          if (!in0.requires_grad) return;
                          const T* go = self.grad.data();
                          T* dx = in0.grad.data();
                          const std::size_t n = in0.numel();
                          for (std::size_t i = 0; i < n; ++i) dx[i] += go[i];
                      });
}

// Axis permutation as a gather.
template <class T>
BasicTensor<T> permute(const BasicTensor<T>& a, const std::vector<std::size_t>& axes) {
    const std::size_t r = a.rank();
    if (axes.size() != r) throw ShapeError("permute: axes rank mismatch");
    std::vector<bool> seen(r, false);
    for (std::size_t ax : axes) {
        if (ax >= r || seen[ax]) throw ShapeError("permute: invalid axis list");
        seen[ax] = true;
    }
    const auto& s = a.shape();
    Shape out_shape(r);
    for (std::size_t d = 0; d < r; ++d) out_shape[d] = s[axes[d]];

    std::vector<std::size_t> in_strides(r, 1);
    for (std::size_t d = r - 1; d-- > 0;) in_strides[d] = in_strides[d + 1] * s[d + 1];

    const std::size_t n = a.numel();
    std::vector<std::size_t> indices(n);
    std::vector<std::size_t> coord(r, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t src = 0;
        for (std::size_t d = 0; d < r; ++d) src += coord[d] * in_strides[axes[d]];
        indices[i] = src;
        for (std::size_t d = r; d-- > 0;) {
            if (++coord[d] < out_shape[d]) break;
            coord[d] = 0;
        }
    }
    return gather(a, std::move(indices), std::move(out_shape));
}

// Swap the last two axes (matrix transpose over the batch).
template <class T>
BasicTensor<T> transpose_last2(const BasicTensor<T>& a) {
    if (a.rank() < 2) throw ShapeError("transpose_last2: rank must be >= 2");
    std::vector<std::size_t> axes(a.rank());
    std::iota(axes.begin(), axes.end(), 0);
    std::swap(axes[a.rank() - 1], axes[a.rank() - 2]);
    return permute(a, axes);
}

}  // namespace iagc
