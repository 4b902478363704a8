#pragma once

#include <cmath>
#include <tuple>

#include "iaunet/ops.hpp"

namespace iaunet::losses {

using nn::Tape;
using nn::Tensor;
using nn::Var;

enum class SegMode { binary, multiclass };

struct LossConfig {
    double margin = 1.0;       // triplet margin m
    double lambda = 0.5;       // weight of the triplet term
    double dice_smooth = 1.0;  // dice epsilon
    SegMode mode = SegMode::binary;
};

// Hinge on the gap between anchor-positive and anchor-negative Euclidean
// distances, averaged over the batch. Rows at exactly zero distance use the
// zero subgradient of the norm.
template <typename T>
Var<T> triplet_loss(Tape<T>& tp, Var<T> e_a, Var<T> e_p, Var<T> e_n, T margin) {
    const Tensor<T>& av = tp.value(e_a);
    const Tensor<T>& pv = tp.value(e_p);
    const Tensor<T>& nv = tp.value(e_n);
    if (!av.same_shape(pv) || !av.same_shape(nv))
        throw DimensionError("triplet_loss: embedding shapes differ: " + av.shape_str() + " / " + pv.shape_str() +
                             " / " + nv.shape_str());
    if (av.ndim() != 2) throw DimensionError("triplet_loss: expects [N,D] embeddings");
    const int N = av.dim(0), D = av.dim(1);
    std::vector<T> dp(static_cast<std::size_t>(N)), dn(static_cast<std::size_t>(N));
    T loss = T(0);
    for (int n = 0; n < N; ++n) {
        T sp = T(0), sn = T(0);
        for (int j = 0; j < D; ++j) {
            const T da = av.at2(n, j) - pv.at2(n, j);
            const T db = av.at2(n, j) - nv.at2(n, j);
            sp += da * da;
            sn += db * db;
        }
        dp[static_cast<std::size_t>(n)] = std::sqrt(sp);
        dn[static_cast<std::size_t>(n)] = std::sqrt(sn);
        const T h = dp[static_cast<std::size_t>(n)] - dn[static_cast<std::size_t>(n)] + margin;
        if (h > T(0)) loss += h;
    }
    loss /= static_cast<T>(N);
    Var<T> y = tp.make(Tensor<T>::from({1}, {loss}), "triplet_loss", nullptr);
    tp.set_backward(y, [e_a, e_p, e_n, y, N, D, margin, dp, dn](Tape<T>& t) {
        const T g = t.grad(y)[0] / static_cast<T>(N);
        const Tensor<T>& av = t.value(e_a);
        const Tensor<T>& pv = t.value(e_p);
        const Tensor<T>& nv = t.value(e_n);
        Tensor<T>& ga = t.grad(e_a);
        Tensor<T>& gp = t.grad(e_p);
        Tensor<T>& gn = t.grad(e_n);
        const T tiny = static_cast<T>(1e-30);
        for (int n = 0; n < N; ++n) {
            const T hinge = dp[static_cast<std::size_t>(n)] - dn[static_cast<std::size_t>(n)] + margin;
            if (hinge <= T(0)) continue;
            const T ip = dp[static_cast<std::size_t>(n)] > tiny ? T(1) / dp[static_cast<std::size_t>(n)] : T(0);
            const T in = dn[static_cast<std::size_t>(n)] > tiny ? T(1) / dn[static_cast<std::size_t>(n)] : T(0);
            for (int j = 0; j < D; ++j) {
                const T da = (av.at2(n, j) - pv.at2(n, j)) * ip;
                const T db = (av.at2(n, j) - nv.at2(n, j)) * in;
                ga.at2(n, j) += g * (da - db);
                gp.at2(n, j) += -g * da;
                gn.at2(n, j) += g * db;
            }
        }
    });
    return y;
}

// Mean binary cross-entropy on raw logits in the overflow-safe
// max(z,0) - z*t + log(1 + exp(-|z|)) form. The target carries no gradient.
template <typename T>
Var<T> bce_with_logits(Tape<T>& tp, Var<T> logits, const Tensor<T>& target) {
    const Tensor<T>& zv = tp.value(logits);
    if (!zv.same_shape(target)) throw DimensionError("bce_with_logits: target shape mismatch");
    const std::int64_t M = zv.numel();
    T loss = T(0);
    for (std::int64_t i = 0; i < M; ++i) {
        const T z = zv[i];
        const T t = target[i];
        loss += (z > T(0) ? z : T(0)) - z * t + std::log1p(std::exp(-std::abs(z)));
    }
    loss /= static_cast<T>(M);
    Var<T> y = tp.make(Tensor<T>::from({1}, {loss}), "bce_with_logits", nullptr);
    tp.set_backward(y, [logits, y, target, M](Tape<T>& t) {
        const T g = t.grad(y)[0] / static_cast<T>(M);
        const Tensor<T>& zv = t.value(logits);
        Tensor<T>& gz = t.grad(logits);
        for (std::int64_t i = 0; i < M; ++i) {
            const T z = zv[i];
            T sig;
            if (z >= T(0)) {
                sig = T(1) / (T(1) + std::exp(-z));
            } else {
                const T e = std::exp(z);
                sig = e / (T(1) + e);
            }
            gz[i] += g * (sig - target[i]);
        }
    });
    return y;
}

// Soft dice on probabilities. probs and target share a [N,K,H,W] layout;
// the overlap statistics are computed per class over batch and space, then
// averaged across classes. The binary path is the K=1 case.
template <typename T>
Var<T> dice_loss(Tape<T>& tp, Var<T> probs, const Tensor<T>& target, T smooth) {
    const Tensor<T>& pv = tp.value(probs);
    if (!pv.same_shape(target)) throw DimensionError("dice_loss: target shape mismatch");
    if (pv.ndim() != 4) throw DimensionError("dice_loss: expects [N,K,H,W]");
    const int N = pv.dim(0), K = pv.dim(1);
    const std::int64_t HW = static_cast<std::int64_t>(pv.dim(2)) * pv.dim(3);
    std::vector<T> s_pt(static_cast<std::size_t>(K), T(0));
    std::vector<T> s_den(static_cast<std::size_t>(K), T(0));
    for (int k = 0; k < K; ++k) {
        for (int n = 0; n < N; ++n) {
            const std::int64_t off = (static_cast<std::int64_t>(n) * K + k) * HW;
            const T* p = pv.data() + off;
            const T* t = target.data() + off;
            for (std::int64_t i = 0; i < HW; ++i) {
                s_pt[static_cast<std::size_t>(k)] += p[i] * t[i];
                s_den[static_cast<std::size_t>(k)] += p[i] + t[i];
            }
        }
    }
    T loss = T(0);
    for (int k = 0; k < K; ++k)
        loss += T(1) - (T(2) * s_pt[static_cast<std::size_t>(k)] + smooth) /
                           (s_den[static_cast<std::size_t>(k)] + smooth);
    loss /= static_cast<T>(K);
    Var<T> y = tp.make(Tensor<T>::from({1}, {loss}), "dice_loss", nullptr);
    tp.set_backward(y, [probs, y, target, N, K, HW, smooth, s_pt, s_den](Tape<T>& t) {
        const T g = t.grad(y)[0] / static_cast<T>(K);
        Tensor<T>& gp = t.grad(probs);
        for (int k = 0; k < K; ++k) {
            const T num = T(2) * s_pt[static_cast<std::size_t>(k)] + smooth;
            const T den = s_den[static_cast<std::size_t>(k)] + smooth;
            const T num_over_den2 = num / (den * den);
            const T two_over_den = T(2) / den;
            for (int n = 0; n < N; ++n) {
                const std::int64_t off = (static_cast<std::int64_t>(n) * K + k) * HW;
                const T* tg = target.data() + off;
                T* dst = gp.data() + off;
                for (std::int64_t i = 0; i < HW; ++i) dst[i] += g * (num_over_den2 - two_over_den * tg[i]);
            }
        }
    });
    return y;
}

// Mean NLL of the true class under channel softmax; target is a [N,1,H,W]
// class-index map.
template <typename T>
Var<T> cross_entropy(Tape<T>& tp, Var<T> logits, const Tensor<T>& target) {
    const Tensor<T>& zv = tp.value(logits);
    if (zv.ndim() != 4) throw DimensionError("cross_entropy: expects [N,K,H,W]");
    const int N = zv.dim(0), K = zv.dim(1);
    const std::int64_t HW = static_cast<std::int64_t>(zv.dim(2)) * zv.dim(3);
    if (target.ndim() != 4 || target.dim(0) != N || target.dim(1) != 1 || target.dim(2) != zv.dim(2) ||
        target.dim(3) != zv.dim(3))
        throw DimensionError("cross_entropy: target must be [N,1,H,W] class indices");
    const std::int64_t M = static_cast<std::int64_t>(N) * HW;
    T loss = T(0);
    for (int n = 0; n < N; ++n)
        for (std::int64_t p = 0; p < HW; ++p) {
            const int cls = static_cast<int>(target[static_cast<std::int64_t>(n) * HW + p]);
            if (cls < 0 || cls >= K)
                throw ValidationError("cross_entropy: class index " + std::to_string(cls) + " outside [0," +
                                      std::to_string(K) + ")");
            T mx = zv[(static_cast<std::int64_t>(n) * K) * HW + p];
            for (int k = 1; k < K; ++k)
                mx = std::max(mx, zv[(static_cast<std::int64_t>(n) * K + k) * HW + p]);
            T lse = T(0);
            for (int k = 0; k < K; ++k)
                lse += std::exp(zv[(static_cast<std::int64_t>(n) * K + k) * HW + p] - mx);
            lse = mx + std::log(lse);
            loss += lse - zv[(static_cast<std::int64_t>(n) * K + cls) * HW + p];
        }
    loss /= static_cast<T>(M);
    Var<T> y = tp.make(Tensor<T>::from({1}, {loss}), "cross_entropy", nullptr);
    tp.set_backward(y, [logits, y, target, N, K, HW, M](Tape<T>& t) {
        const T g = t.grad(y)[0] / static_cast<T>(M);
        const Tensor<T>& zv = t.value(logits);
        Tensor<T>& gz = t.grad(logits);
        for (int n = 0; n < N; ++n)
            for (std::int64_t p = 0; p < HW; ++p) {
                const int cls = static_cast<int>(target[static_cast<std::int64_t>(n) * HW + p]);
                T mx = zv[(static_cast<std::int64_t>(n) * K) * HW + p];
                for (int k = 1; k < K; ++k)
                    mx = std::max(mx, zv[(static_cast<std::int64_t>(n) * K + k) * HW + p]);
                T z = T(0);
                for (int k = 0; k < K; ++k)
                    z += std::exp(zv[(static_cast<std::int64_t>(n) * K + k) * HW + p] - mx);
                for (int k = 0; k < K; ++k) {
                    const std::int64_t idx = (static_cast<std::int64_t>(n) * K + k) * HW + p;
                    const T soft = std::exp(zv[idx] - mx) / z;
                    gz[idx] += g * (soft - (k == cls ? T(1) : T(0)));
                }
            }
    });
    return y;
}

template <typename T>
struct TotalLoss {
    Var<T> total;
    Var<T> seg;
    Var<T> tri;
};

// Builds a [N,K,H,W] one-hot tensor from a class-index map.
template <typename T>
Tensor<T> one_hot(const Tensor<T>& class_map, int num_classes) {
    const int N = class_map.dim(0);
    const int H = class_map.dim(2), W = class_map.dim(3);
    const std::int64_t HW = static_cast<std::int64_t>(H) * W;
    Tensor<T> out({N, num_classes, H, W});
    for (int n = 0; n < N; ++n)
        for (std::int64_t p = 0; p < HW; ++p) {
            const int cls = static_cast<int>(class_map[static_cast<std::int64_t>(n) * HW + p]);
            if (cls < 0 || cls >= num_classes)
                throw ValidationError("one_hot: class index " + std::to_string(cls) + " outside range");
            out[(static_cast<std::int64_t>(n) * num_classes + cls) * HW + p] = T(1);
        }
    return out;
}

// Segmentation objective: BCE + dice on sigmoid in binary mode, CE + dice on
// softmax in multiclass mode. The two terms are summed unweighted.
template <typename T>
Var<T> seg_loss(Tape<T>& tp, Var<T> seg_logits, const Tensor<T>& mask, const LossConfig& cfg) {
    if (cfg.mode == SegMode::binary) {
        Var<T> bce = bce_with_logits(tp, seg_logits, mask);
        Var<T> probs = nn::ops::sigmoid(tp, seg_logits);
        Var<T> dice = dice_loss(tp, probs, mask, static_cast<T>(cfg.dice_smooth));
        return nn::ops::add(tp, bce, dice);
    }
    const int K = tp.value(seg_logits).dim(1);
    Var<T> ce = cross_entropy(tp, seg_logits, mask);
    Var<T> probs = nn::ops::softmax_channels(tp, seg_logits);
    Var<T> dice = dice_loss(tp, probs, one_hot<T>(mask, K), static_cast<T>(cfg.dice_smooth));
    return nn::ops::add(tp, ce, dice);
}

// total = seg + lambda * tri; the three scalars are all returned for logging.
template <typename T>
TotalLoss<T> total_loss(Tape<T>& tp, Var<T> seg_logits, const Tensor<T>& mask, Var<T> e_a, Var<T> e_p, Var<T> e_n,
                        const LossConfig& cfg) {
    Var<T> seg = seg_loss(tp, seg_logits, mask, cfg);
    Var<T> tri = triplet_loss(tp, e_a, e_p, e_n, static_cast<T>(cfg.margin));
    Var<T> total = nn::ops::add(tp, seg, nn::ops::scale(tp, tri, static_cast<T>(cfg.lambda)));
    return {total, seg, tri};
}

}  // namespace iaunet::losses
