#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "iaunet/tape.hpp"

namespace iaunet::nn::ops {

namespace detail {

template <typename T>
void require_4d(const Tensor<T>& t, const char* op) {
    if (t.ndim() != 4) throw DimensionError(std::string(op) + ": expected 4-D tensor, got " + t.shape_str());
}

// im2col for square kernels; rows indexed (c*kh + ki)*kw + kj to line up
// with the [Cout, Cin, kh, kw] weight layout.
template <typename T>
void im2col(const T* x, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, T* cols) {
    const std::int64_t P = static_cast<std::int64_t>(Ho) * Wo;
    for (int c = 0; c < C; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                T* row = cols + ((static_cast<std::int64_t>(c) * k + ki) * k + kj) * P;
                const T* xc = x + static_cast<std::int64_t>(c) * H * W;
                std::int64_t p = 0;
                for (int oh = 0; oh < Ho; ++oh) {
                    const int ih = oh * stride - pad + ki;
                    if (ih < 0 || ih >= H) {
                        for (int ow = 0; ow < Wo; ++ow) row[p++] = T(0);
                        continue;
                    }
                    const T* xr = xc + static_cast<std::int64_t>(ih) * W;
                    for (int ow = 0; ow < Wo; ++ow) {
                        const int iw = ow * stride - pad + kj;
                        row[p++] = (iw < 0 || iw >= W) ? T(0) : xr[iw];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* cols, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, T* gx) {
    const std::int64_t P = static_cast<std::int64_t>(Ho) * Wo;
    for (int c = 0; c < C; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const T* row = cols + ((static_cast<std::int64_t>(c) * k + ki) * k + kj) * P;
                T* gc = gx + static_cast<std::int64_t>(c) * H * W;
                std::int64_t p = 0;
                for (int oh = 0; oh < Ho; ++oh) {
                    const int ih = oh * stride - pad + ki;
                    if (ih < 0 || ih >= H) {
                        p += Wo;
                        continue;
                    }
                    T* gr = gc + static_cast<std::int64_t>(ih) * W;
                    for (int ow = 0; ow < Wo; ++ow) {
                        const int iw = ow * stride - pad + kj;
                        if (iw >= 0 && iw < W) gr[iw] += row[p];
                        ++p;
                    }
                }
            }
        }
    }
}

}  // namespace detail

// Cross-correlation with broadcast bias. Supported envelope: square kernel,
// 3x3/pad 1 or 1x1/pad 0 (what the model uses), any stride that divides
// evenly.
template <typename T>
Var<T> conv2d(Tape<T>& tp, Var<T> x, Var<T> w, Var<T> b, int stride = 1, int padding = 1) {
    const Tensor<T>& xv = tp.value(x);
    const Tensor<T>& wv = tp.value(w);
    const Tensor<T>& bv = tp.value(b);
    detail::require_4d(xv, "conv2d");
    detail::require_4d(wv, "conv2d weight");
    const int N = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int Cout = wv.dim(0), k = wv.dim(2);
    if (wv.dim(2) != wv.dim(3)) throw DimensionError("conv2d: kernel must be square, got " + wv.shape_str());
    if (!((k == 3 && padding == 1) || (k == 1 && padding == 0)))
        throw DimensionError("conv2d: supported configurations are 3x3/pad1 and 1x1/pad0");
    if (wv.dim(1) != Cin)
        throw DimensionError("conv2d: input channels " + std::to_string(Cin) + " do not match weight " +
                             wv.shape_str());
    if (bv.ndim() != 1 || bv.dim(0) != Cout) throw DimensionError("conv2d: bias must be [Cout]");
    if (stride < 1 || (H + 2 * padding - k) % stride != 0 || (W + 2 * padding - k) % stride != 0)
        throw DimensionError("conv2d: stride does not divide the padded extent");
    const int Ho = (H + 2 * padding - k) / stride + 1;
    const int Wo = (W + 2 * padding - k) / stride + 1;
    const int K = Cin * k * k;
    const std::int64_t P = static_cast<std::int64_t>(Ho) * Wo;

    Tensor<T> out({N, Cout, Ho, Wo});
    std::vector<T> cols(static_cast<std::size_t>(K) * P);
    for (int n = 0; n < N; ++n) {
        detail::im2col(xv.data() + static_cast<std::int64_t>(n) * Cin * H * W, Cin, H, W, k, stride, padding, Ho, Wo,
                       cols.data());
        T* on = out.data() + static_cast<std::int64_t>(n) * Cout * P;
        kernels::gemm_nn(Cout, static_cast<int>(P), K, wv.data(), K, cols.data(), static_cast<int>(P), on,
                         static_cast<int>(P), false);
        for (int c = 0; c < Cout; ++c) {
            const T bias = bv[c];
            T* row = on + static_cast<std::int64_t>(c) * P;
            for (std::int64_t p = 0; p < P; ++p) row[p] += bias;
        }
    }

    Var<T> y = tp.make(std::move(out), "conv2d", nullptr);
    auto bwd = [x, w, b, y, N, Cin, H, W, Cout, k, stride, padding, Ho, Wo, K, P](Tape<T>& t) {
        const Tensor<T>& gy = t.grad(y);
        const Tensor<T>& xval = t.value(x);
        const Tensor<T>& wval = t.value(w);
        Tensor<T>& gw = t.grad(w);
        Tensor<T>& gb = t.grad(b);
        Tensor<T>& gx = t.grad(x);
        std::vector<T> cols(static_cast<std::size_t>(K) * P);
        std::vector<T> gcols(static_cast<std::size_t>(K) * P);
        const auto& kt = kernels::table<T>();
        for (int n = 0; n < N; ++n) {
            const T* gyn = gy.data() + static_cast<std::int64_t>(n) * Cout * P;
            detail::im2col(xval.data() + static_cast<std::int64_t>(n) * Cin * H * W, Cin, H, W, k, stride, padding, Ho,
                           Wo, cols.data());
            kernels::gemm_nt(Cout, K, static_cast<int>(P), gyn, static_cast<int>(P), cols.data(), static_cast<int>(P),
                             gw.data(), K, true);
            kernels::gemm_tn(K, static_cast<int>(P), Cout, wval.data(), K, gyn, static_cast<int>(P), gcols.data(),
                             static_cast<int>(P), false);
            detail::col2im_add(gcols.data(), Cin, H, W, k, stride, padding, Ho, Wo,
                               gx.data() + static_cast<std::int64_t>(n) * Cin * H * W);
            for (int c = 0; c < Cout; ++c) gb[c] += kt.sum(gyn + static_cast<std::int64_t>(c) * P, P);
        }
    };
    tp.set_backward(y, std::move(bwd));
    return y;
}

template <typename T>
struct BatchNormState {
    Tensor<T> running_mean;
    Tensor<T> running_var;

    BatchNormState() = default;
    explicit BatchNormState(int channels) : running_mean({channels}), running_var({channels}, T(1)) {}
};

// Train mode normalizes with biased batch statistics and refreshes the
// running estimates via EMA; eval mode uses the running estimates.
template <typename T>
Var<T> batch_norm2d(Tape<T>& tp, Var<T> x, Var<T> gamma, Var<T> beta, BatchNormState<T>& state, bool training,
                    T momentum, T eps) {
    const Tensor<T>& xv = tp.value(x);
    detail::require_4d(xv, "batch_norm2d");
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    if (tp.value(gamma).numel() != C || tp.value(beta).numel() != C || state.running_mean.numel() != C)
        throw DimensionError("batch_norm2d: gamma/beta/running stats must be [C]");
    const std::int64_t HW = static_cast<std::int64_t>(H) * W;
    const std::int64_t M = static_cast<std::int64_t>(N) * HW;
    if (training && M < 2) throw DimensionError("batch_norm2d: train mode needs at least 2 samples per channel");

    std::vector<T> mean(static_cast<std::size_t>(C)), invstd(static_cast<std::size_t>(C));
    const auto& kt = kernels::table<T>();
    if (training) {
        for (int c = 0; c < C; ++c) {
            T s = T(0);
            for (int n = 0; n < N; ++n)
                s += kt.sum(xv.data() + (static_cast<std::int64_t>(n) * C + c) * HW, HW);
            const T mu = s / static_cast<T>(M);
            T sq = T(0);
            for (int n = 0; n < N; ++n) {
                const T* p = xv.data() + (static_cast<std::int64_t>(n) * C + c) * HW;
                for (std::int64_t i = 0; i < HW; ++i) {
                    const T d = p[i] - mu;
                    sq += d * d;
                }
            }
            const T var = sq / static_cast<T>(M);
            mean[static_cast<std::size_t>(c)] = mu;
            invstd[static_cast<std::size_t>(c)] = T(1) / std::sqrt(var + eps);
            state.running_mean[c] = (T(1) - momentum) * state.running_mean[c] + momentum * mu;
            state.running_var[c] = (T(1) - momentum) * state.running_var[c] + momentum * var;
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean[static_cast<std::size_t>(c)] = state.running_mean[c];
            invstd[static_cast<std::size_t>(c)] = T(1) / std::sqrt(state.running_var[c] + eps);
        }
    }

    const Tensor<T>& gv = tp.value(gamma);
    const Tensor<T>& bv = tp.value(beta);
    Tensor<T> out(xv.shape());
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const T s = gv[c] * invstd[static_cast<std::size_t>(c)];
            const T t = bv[c] - mean[static_cast<std::size_t>(c)] * s;
            const T* src = xv.data() + (static_cast<std::int64_t>(n) * C + c) * HW;
            T* dst = out.data() + (static_cast<std::int64_t>(n) * C + c) * HW;
            for (std::int64_t i = 0; i < HW; ++i) dst[i] = src[i] * s + t;
        }
    }

    Var<T> y = tp.make(std::move(out), "batch_norm2d", nullptr);
    auto bwd = [x, gamma, beta, y, N, C, HW, M, training, mean, invstd](Tape<T>& t) {
        const Tensor<T>& gy = t.grad(y);
        const Tensor<T>& xval = t.value(x);
        const Tensor<T>& gval = t.value(gamma);
        Tensor<T>& gx = t.grad(x);
        Tensor<T>& gg = t.grad(gamma);
        Tensor<T>& gb = t.grad(beta);
        for (int c = 0; c < C; ++c) {
            const T mu = mean[static_cast<std::size_t>(c)];
            const T is = invstd[static_cast<std::size_t>(c)];
            const T g = gval[c];
            T sum_dy = T(0), sum_dy_xhat = T(0), sum_xmu = T(0);
            for (int n = 0; n < N; ++n) {
                const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * HW;
                const T* dy = gy.data() + off;
                const T* xp = xval.data() + off;
                for (std::int64_t i = 0; i < HW; ++i) {
                    const T xmu = xp[i] - mu;
                    sum_dy += dy[i];
                    sum_dy_xhat += dy[i] * xmu * is;
                    sum_xmu += xmu;
                }
            }
            gg[c] += sum_dy_xhat;
            gb[c] += sum_dy;
            if (training) {
                // Standard batch-norm backward; sum_dy_xhat already carries
                // one factor of invstd, so dvar = -0.5 * g * sum_dy_xhat * is^2.
                const T inv_m = T(1) / static_cast<T>(M);
                const T dvar = -T(0.5) * g * sum_dy_xhat * is * is;
                const T dmean = -is * g * sum_dy + dvar * (-T(2)) * sum_xmu * inv_m;
                for (int n = 0; n < N; ++n) {
                    const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * HW;
                    const T* dy = gy.data() + off;
                    const T* xp = xval.data() + off;
                    T* dx = gx.data() + off;
                    for (std::int64_t i = 0; i < HW; ++i) {
                        dx[i] += dy[i] * g * is + dvar * T(2) * (xp[i] - mu) * inv_m + dmean * inv_m;
                    }
                }
            } else {
                for (int n = 0; n < N; ++n) {
                    const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * HW;
                    const T* dy = gy.data() + off;
                    T* dx = gx.data() + off;
                    for (std::int64_t i = 0; i < HW; ++i) dx[i] += dy[i] * g * is;
                }
            }
        }
    };
    tp.set_backward(y, std::move(bwd));
    return y;
}

template <typename T>
Var<T> relu(Tape<T>& tp, Var<T> x) {
    const Tensor<T>& xv = tp.value(x);
    Tensor<T> out(xv.shape());
    kernels::table<T>().relu(xv.data(), out.data(), xv.numel());
    Var<T> y = tp.make(std::move(out), "relu", nullptr);
    tp.set_backward(y, [x, y](Tape<T>& t) {
        const Tensor<T>& gy = t.grad(y);
        const Tensor<T>& xval = t.value(x);
        Tensor<T>& gx = t.grad(x);
        kernels::table<T>().relu_grad(xval.data(), gy.data(), gx.data(), gx.numel());
    });
    return y;
}

// Non-overlapping 2x2 max; gradient routes to the first maximal element in
// scan order.
template <typename T>
Var<T> max_pool2d(Tape<T>& tp, Var<T> x) {
    const Tensor<T>& xv = tp.value(x);
    detail::require_4d(xv, "max_pool2d");
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    if (H % 2 != 0 || W % 2 != 0)
        throw DimensionError("max_pool2d: spatial size must be even, got " + xv.shape_str());
    const int Ho = H / 2, Wo = W / 2;
    Tensor<T> out({N, C, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int oh = 0; oh < Ho; ++oh)
                for (int ow = 0; ow < Wo; ++ow) {
                    T best = xv.at4(n, c, 2 * oh, 2 * ow);
                    T v = xv.at4(n, c, 2 * oh, 2 * ow + 1);
                    if (v > best) best = v;
                    v = xv.at4(n, c, 2 * oh + 1, 2 * ow);
                    if (v > best) best = v;
                    v = xv.at4(n, c, 2 * oh + 1, 2 * ow + 1);
                    if (v > best) best = v;
                    out.at4(n, c, oh, ow) = best;
                }
    Var<T> y = tp.make(std::move(out), "max_pool2d", nullptr);
    tp.set_backward(y, [x, y, N, C, Ho, Wo](Tape<T>& t) {
        const Tensor<T>& gy = t.grad(y);
        const Tensor<T>& xval = t.value(x);
        Tensor<T>& gx = t.grad(x);
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int oh = 0; oh < Ho; ++oh)
                    for (int ow = 0; ow < Wo; ++ow) {
                        int bh = 2 * oh, bw = 2 * ow;
                        T best = xval.at4(n, c, bh, bw);
                        const int hs[3] = {2 * oh, 2 * oh + 1, 2 * oh + 1};
                        const int ws[3] = {2 * ow + 1, 2 * ow, 2 * ow + 1};
                        for (int q = 0; q < 3; ++q) {
                            const T v = xval.at4(n, c, hs[q], ws[q]);
                            if (v > best) {
                                best = v;
                                bh = hs[q];
                                bw = ws[q];
                            }
                        }
                        gx.at4(n, c, bh, bw) += gy.at4(n, c, oh, ow);
                    }
    });
    return y;
}

namespace detail {

// align_corners=false sampling grid for exact 2x upscaling.
inline void bilinear_axis(int in, int out, std::vector<int>& i0, std::vector<int>& i1, std::vector<double>& f) {
    i0.resize(static_cast<std::size_t>(out));
    i1.resize(static_cast<std::size_t>(out));
    f.resize(static_cast<std::size_t>(out));
    for (int o = 0; o < out; ++o) {
        double s = (o + 0.5) / 2.0 - 0.5;
        if (s < 0.0) s = 0.0;
        int lo = static_cast<int>(s);
        if (lo > in - 1) lo = in - 1;
        int hi = lo + 1 < in ? lo + 1 : in - 1;
        i0[static_cast<std::size_t>(o)] = lo;
        i1[static_cast<std::size_t>(o)] = hi;
        f[static_cast<std::size_t>(o)] = s - lo;
    }
}

}  // namespace detail

template <typename T>
Var<T> upsample_bilinear2x(Tape<T>& tp, Var<T> x) {
    const Tensor<T>& xv = tp.value(x);
    detail::require_4d(xv, "upsample_bilinear2x");
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int Ho = 2 * H, Wo = 2 * W;
    std::vector<int> h0, h1, w0, w1;
    std::vector<double> fh, fw;
    detail::bilinear_axis(H, Ho, h0, h1, fh);
    detail::bilinear_axis(W, Wo, w0, w1, fw);
    Tensor<T> out({N, C, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int oh = 0; oh < Ho; ++oh) {
                const T a = static_cast<T>(1.0 - fh[static_cast<std::size_t>(oh)]);
                const T bq = static_cast<T>(fh[static_cast<std::size_t>(oh)]);
                for (int ow = 0; ow < Wo; ++ow) {
                    const T l = static_cast<T>(1.0 - fw[static_cast<std::size_t>(ow)]);
                    const T r = static_cast<T>(fw[static_cast<std::size_t>(ow)]);
                    out.at4(n, c, oh, ow) =
                        a * (l * xv.at4(n, c, h0[oh], w0[ow]) + r * xv.at4(n, c, h0[oh], w1[ow])) +
                        bq * (l * xv.at4(n, c, h1[oh], w0[ow]) + r * xv.at4(n, c, h1[oh], w1[ow]));
                }
            }
    Var<T> y = tp.make(std::move(out), "upsample_bilinear2x", nullptr);
    tp.set_backward(y, [x, y, N, C, H, W, Ho, Wo, h0, h1, w0, w1, fh, fw](Tape<T>& t) {
        const Tensor<T>& gy = t.grad(y);
        Tensor<T>& gx = t.grad(x);
        (void)H;
        (void)W;
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int oh = 0; oh < Ho; ++oh) {
                    const T a = static_cast<T>(1.0 - fh[static_cast<std::size_t>(oh)]);
                    const T bq = static_cast<T>(fh[static_cast<std::size_t>(oh)]);
                    for (int ow = 0; ow < Wo; ++ow) {
                        const T l = static_cast<T>(1.0 - fw[static_cast<std::size_t>(ow)]);
                        const T r = static_cast<T>(fw[static_cast<std::size_t>(ow)]);
                        const T g = gy.at4(n, c, oh, ow);
                        gx.at4(n, c, h0[oh], w0[ow]) += a * l * g;
                        gx.at4(n, c, h0[oh], w1[ow]) += a * r * g;
                        gx.at4(n, c, h1[oh], w0[ow]) += bq * l * g;
                        gx.at4(n, c, h1[oh], w1[ow]) += bq * r * g;
                    }
                }
    });
    return y;
}

// Stride-2, kernel-2 transposed convolution (exact 2x upsampling); weight
// layout [Cin, Cout, 2, 2]. With stride == kernel the output blocks do not
// overlap, so the op is a per-pixel linear map onto 2x2 blocks.
template <typename T>
Var<T> conv_transpose2d_2x(Tape<T>& tp, Var<T> x, Var<T> w, Var<T> b) {
    const Tensor<T>& xv = tp.value(x);
    const Tensor<T>& wv = tp.value(w);
    const Tensor<T>& bv = tp.value(b);
    detail::require_4d(xv, "conv_transpose2d_2x");
    detail::require_4d(wv, "conv_transpose2d_2x weight");
    const int N = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    if (wv.dim(0) != Cin || wv.dim(2) != 2 || wv.dim(3) != 2)
        throw DimensionError("conv_transpose2d_2x: weight must be [Cin,Cout,2,2], got " + wv.shape_str());
    const int Cout = wv.dim(1);
    if (bv.ndim() != 1 || bv.dim(0) != Cout) throw DimensionError("conv_transpose2d_2x: bias must be [Cout]");
    const int Ho = 2 * H, Wo = 2 * W;
    const std::int64_t P = static_cast<std::int64_t>(H) * W;
    const int Cout4 = Cout * 4;

    // cols[(co*2+di)*2+dj, p] = sum_ci w[ci,co,di,dj] * x[ci,p]
    Tensor<T> out({N, Cout, Ho, Wo});
    std::vector<T> cols(static_cast<std::size_t>(Cout4) * P);
    for (int n = 0; n < N; ++n) {
        const T* xn = xv.data() + static_cast<std::int64_t>(n) * Cin * P;
        kernels::gemm_tn(Cout4, static_cast<int>(P), Cin, wv.data(), Cout4, xn, static_cast<int>(P), cols.data(),
                         static_cast<int>(P), false);
        for (int co = 0; co < Cout; ++co) {
            const T bias = bv[co];
            for (int di = 0; di < 2; ++di)
                for (int dj = 0; dj < 2; ++dj) {
                    const T* row = cols.data() + ((static_cast<std::int64_t>(co) * 2 + di) * 2 + dj) * P;
                    for (int i = 0; i < H; ++i)
                        for (int j = 0; j < W; ++j)
                            out.at4(n, co, 2 * i + di, 2 * j + dj) = row[static_cast<std::int64_t>(i) * W + j] + bias;
                }
        }
    }

    Var<T> y = tp.make(std::move(out), "conv_transpose2d_2x", nullptr);
    auto bwd = [x, w, b, y, N, Cin, H, W, Cout, Cout4, P](Tape<T>& t) {
        const Tensor<T>& gy = t.grad(y);
        const Tensor<T>& xval = t.value(x);
        const Tensor<T>& wval = t.value(w);
        Tensor<T>& gx = t.grad(x);
        Tensor<T>& gw = t.grad(w);
        Tensor<T>& gb = t.grad(b);
        std::vector<T> gcols(static_cast<std::size_t>(Cout4) * P);
        for (int n = 0; n < N; ++n) {
            for (int co = 0; co < Cout; ++co) {
                T bsum = T(0);
                for (int di = 0; di < 2; ++di)
                    for (int dj = 0; dj < 2; ++dj) {
                        T* row = gcols.data() + ((static_cast<std::int64_t>(co) * 2 + di) * 2 + dj) * P;
                        for (int i = 0; i < H; ++i)
                            for (int j = 0; j < W; ++j) {
                                const T g = gy.at4(n, co, 2 * i + di, 2 * j + dj);
                                row[static_cast<std::int64_t>(i) * W + j] = g;
                                bsum += g;
                            }
                    }
                gb[co] += bsum;
            }
            const T* xn = xval.data() + static_cast<std::int64_t>(n) * Cin * P;
            kernels::gemm_nn(Cin, static_cast<int>(P), Cout4, wval.data(), Cout4, gcols.data(), static_cast<int>(P),
                             gx.data() + static_cast<std::int64_t>(n) * Cin * P, static_cast<int>(P), true);
            kernels::gemm_nt(Cin, Cout4, static_cast<int>(P), xn, static_cast<int>(P), gcols.data(),
                             static_cast<int>(P), gw.data(), Cout4, true);
        }
    };
    tp.set_backward(y, std::move(bwd));
    return y;
}

// Plain scalar accumulation in scan order; masked_pool with an all-ones mask
// must match this bit for bit, so both share the same loop structure.
template <typename T>
Var<T> global_avg_pool(Tape<T>& tp, Var<T> x) {
    const Tensor<T>& xv = tp.value(x);
    detail::require_4d(xv, "global_avg_pool");
    const int N = xv.dim(0), C = xv.dim(1);
    const std::int64_t HW = static_cast<std::int64_t>(xv.dim(2)) * xv.dim(3);
    Tensor<T> out({N, C});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T* p = xv.data() + (static_cast<std::int64_t>(n) * C + c) * HW;
            T s = T(0);
            for (std::int64_t i = 0; i < HW; ++i) s += p[i];
            out.at2(n, c) = s / static_cast<T>(HW);
        }
    Var<T> y = tp.make(std::move(out), "global_avg_pool", nullptr);
    tp.set_backward(y, [x, y, N, C, HW](Tape<T>& t) {
        const Tensor<T>& gy = t.grad(y);
        Tensor<T>& gx = t.grad(x);
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const T g = gy.at2(n, c) / static_cast<T>(HW);
                T* p = gx.data() + (static_cast<std::int64_t>(n) * C + c) * HW;
                for (std::int64_t i = 0; i < HW; ++i) p[i] += g;
            }
    });
    return y;
}

// Mask-gated average over the spatial grid. The full-resolution mask is
// reduced to the feature resolution by nearest-neighbor sampling at cell
// centers with a 0.5 threshold; an empty mask is guarded by flooring the
// denominator at 1.
template <typename T>
Var<T> masked_pool(Tape<T>& tp, Var<T> features, const Tensor<T>& mask_full) {
    const Tensor<T>& fv = tp.value(features);
    detail::require_4d(fv, "masked_pool");
    detail::require_4d(mask_full, "masked_pool mask");
    const int N = fv.dim(0), C = fv.dim(1), h = fv.dim(2), w = fv.dim(3);
    const int H = mask_full.dim(2), W = mask_full.dim(3);
    if (mask_full.dim(0) != N || mask_full.dim(1) != 1)
        throw DimensionError("masked_pool: mask must be [N,1,H,W], got " + mask_full.shape_str());
    if (H % h != 0 || W % w != 0)
        throw DimensionError("masked_pool: mask extent must be an integer multiple of the feature extent");
    const int fh = H / h, fw = W / w;

    Tensor<T> mask_ds({N, 1, h, w});
    std::vector<T> denom(static_cast<std::size_t>(N));
    for (int n = 0; n < N; ++n) {
        T count = T(0);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                const T v = mask_full.at4(n, 0, i * fh + fh / 2, j * fw + fw / 2) >= T(0.5) ? T(1) : T(0);
                mask_ds.at4(n, 0, i, j) = v;
                count += v;
            }
        denom[static_cast<std::size_t>(n)] = count > T(1) ? count : T(1);
    }

    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    Tensor<T> out({N, C});
    for (int n = 0; n < N; ++n) {
        const T* md = mask_ds.data() + static_cast<std::int64_t>(n) * hw;
        for (int c = 0; c < C; ++c) {
            const T* p = fv.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
            T s = T(0);
            for (std::int64_t i = 0; i < hw; ++i) s += p[i] * md[i];
            out.at2(n, c) = s / denom[static_cast<std::size_t>(n)];
        }
    }
    Var<T> y = tp.make(std::move(out), "masked_pool", nullptr);
    tp.set_backward(y, [features, y, N, C, hw, mask_ds, denom](Tape<T>& t) {
        const Tensor<T>& gy = t.grad(y);
        Tensor<T>& gf = t.grad(features);
        for (int n = 0; n < N; ++n) {
            const T* md = mask_ds.data() + static_cast<std::int64_t>(n) * hw;
            const T inv = T(1) / denom[static_cast<std::size_t>(n)];
            for (int c = 0; c < C; ++c) {
                const T g = gy.at2(n, c) * inv;
                T* p = gf.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
                for (std::int64_t i = 0; i < hw; ++i) p[i] += g * md[i];
            }
        }
    });
    return y;
}

template <typename T>
Var<T> linear(Tape<T>& tp, Var<T> x, Var<T> w, Var<T> b) {
    const Tensor<T>& xv = tp.value(x);
    const Tensor<T>& wv = tp.value(w);
    const Tensor<T>& bv = tp.value(b);
    if (xv.ndim() != 2 || wv.ndim() != 2) throw DimensionError("linear: expects 2-D input and weight");
    const int N = xv.dim(0), Din = xv.dim(1), Dout = wv.dim(0);
    if (wv.dim(1) != Din)
        throw DimensionError("linear: input dim " + std::to_string(Din) + " does not match weight " + wv.shape_str());
    if (bv.ndim() != 1 || bv.dim(0) != Dout) throw DimensionError("linear: bias must be [Dout]");
    Tensor<T> out({N, Dout});
    kernels::gemm_nt(N, Dout, Din, xv.data(), Din, wv.data(), Din, out.data(), Dout, false);
    for (int n = 0; n < N; ++n)
        for (int j = 0; j < Dout; ++j) out.at2(n, j) += bv[j];
    Var<T> y = tp.make(std::move(out), "linear", nullptr);
    tp.set_backward(y, [x, w, b, y, N, Din, Dout](Tape<T>& t) {
        const Tensor<T>& gy = t.grad(y);
        const Tensor<T>& xval = t.value(x);
        const Tensor<T>& wval = t.value(w);
        kernels::gemm_nn(N, Din, Dout, gy.data(), Dout, wval.data(), Din, t.grad(x).data(), Din, true);
        kernels::gemm_tn(Dout, Din, N, gy.data(), Dout, xval.data(), Din, t.grad(w).data(), Din, true);
        Tensor<T>& gb = t.grad(b);
        for (int n = 0; n < N; ++n)
            for (int j = 0; j < Dout; ++j) gb[j] += gy.at2(n, j);
    });
    return y;
}

inline constexpr double kL2NormEps = 1e-12;

// Row-wise x / max(||x||, eps); a near-zero row maps to x / eps instead of
// dividing by zero.
template <typename T>
Var<T> l2_normalize(Tape<T>& tp, Var<T> x) {
    const Tensor<T>& xv = tp.value(x);
    if (xv.ndim() != 2) throw DimensionError("l2_normalize: expects [N,D]");
    const int N = xv.dim(0), D = xv.dim(1);
    std::vector<T> norms(static_cast<std::size_t>(N));
    Tensor<T> out(xv.shape());
    const T eps = static_cast<T>(kL2NormEps);
    for (int n = 0; n < N; ++n) {
        const T* p = xv.data() + static_cast<std::int64_t>(n) * D;
        T sq = T(0);
        for (int j = 0; j < D; ++j) sq += p[j] * p[j];
        const T nrm = std::sqrt(sq);
        norms[static_cast<std::size_t>(n)] = nrm;
        const T inv = T(1) / (nrm > eps ? nrm : eps);
        T* q = out.data() + static_cast<std::int64_t>(n) * D;
        for (int j = 0; j < D; ++j) q[j] = p[j] * inv;
    }
    Var<T> y = tp.make(std::move(out), "l2_normalize", nullptr);
    tp.set_backward(y, [x, y, N, D, norms, eps](Tape<T>& t) {
        const Tensor<T>& gy = t.grad(y);
        const Tensor<T>& yval = t.value(y);
        Tensor<T>& gx = t.grad(x);
        for (int n = 0; n < N; ++n) {
            const T nrm = norms[static_cast<std::size_t>(n)];
            const T* g = gy.data() + static_cast<std::int64_t>(n) * D;
            T* dst = gx.data() + static_cast<std::int64_t>(n) * D;
            if (nrm > eps) {
                const T* yr = yval.data() + static_cast<std::int64_t>(n) * D;
                T dot = T(0);
                for (int j = 0; j < D; ++j) dot += g[j] * yr[j];
                const T inv = T(1) / nrm;
                for (int j = 0; j < D; ++j) dst[j] += (g[j] - yr[j] * dot) * inv;
            } else {
                const T inv = T(1) / eps;
                for (int j = 0; j < D; ++j) dst[j] += g[j] * inv;
            }
        }
    });
    return y;
}

template <typename T>
Var<T> concat_channels(Tape<T>& tp, Var<T> a, Var<T> b) {
    const Tensor<T>& av = tp.value(a);
    const Tensor<T>& bv = tp.value(b);
    detail::require_4d(av, "concat_channels");
    detail::require_4d(bv, "concat_channels");
    if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3))
        throw DimensionError("concat_channels: mismatched shapes " + av.shape_str() + " vs " + bv.shape_str());
    const int N = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1);
    const std::int64_t HW = static_cast<std::int64_t>(av.dim(2)) * av.dim(3);
    Tensor<T> out({N, Ca + Cb, av.dim(2), av.dim(3)});
    for (int n = 0; n < N; ++n) {
        std::copy_n(av.data() + static_cast<std::int64_t>(n) * Ca * HW, Ca * HW,
                    out.data() + static_cast<std::int64_t>(n) * (Ca + Cb) * HW);
        std::copy_n(bv.data() + static_cast<std::int64_t>(n) * Cb * HW, Cb * HW,
                    out.data() + (static_cast<std::int64_t>(n) * (Ca + Cb) + Ca) * HW);
    }
    Var<T> y = tp.make(std::move(out), "concat_channels", nullptr);
    tp.set_backward(y, [a, b, y, N, Ca, Cb, HW](Tape<T>& t) {
        const Tensor<T>& gy = t.grad(y);
        Tensor<T>& ga = t.grad(a);
        Tensor<T>& gb = t.grad(b);
        const auto& kt = kernels::table<T>();
        for (int n = 0; n < N; ++n) {
            kt.axpy(T(1), gy.data() + static_cast<std::int64_t>(n) * (Ca + Cb) * HW,
                    ga.data() + static_cast<std::int64_t>(n) * Ca * HW, Ca * HW);
            kt.axpy(T(1), gy.data() + (static_cast<std::int64_t>(n) * (Ca + Cb) + Ca) * HW,
                    gb.data() + static_cast<std::int64_t>(n) * Cb * HW, Cb * HW);
        }
    });
    return y;
}

template <typename T>
Var<T> sigmoid(Tape<T>& tp, Var<T> x) {
    const Tensor<T>& xv = tp.value(x);
    Tensor<T> out(xv.shape());
    for (std::int64_t i = 0; i < xv.numel(); ++i) {
        const T v = xv[i];
        if (v >= T(0)) {
            out[i] = T(1) / (T(1) + std::exp(-v));
        } else {
            const T e = std::exp(v);
            out[i] = e / (T(1) + e);
        }
    }
    Var<T> y = tp.make(std::move(out), "sigmoid", nullptr);
    tp.set_backward(y, [x, y](Tape<T>& t) {
        const Tensor<T>& gy = t.grad(y);
        const Tensor<T>& yv = t.value(y);
        Tensor<T>& gx = t.grad(x);
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += gy[i] * yv[i] * (T(1) - yv[i]);
    });
    return y;
}

// Channel-dim softmax for [N,K,H,W].
template <typename T>
Var<T> softmax_channels(Tape<T>& tp, Var<T> x) {
    const Tensor<T>& xv = tp.value(x);
    detail::require_4d(xv, "softmax_channels");
    const int N = xv.dim(0), K = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const std::int64_t HW = static_cast<std::int64_t>(H) * W;
    Tensor<T> out(xv.shape());
    for (int n = 0; n < N; ++n)
        for (std::int64_t p = 0; p < HW; ++p) {
            T mx = xv[static_cast<std::int64_t>(n) * K * HW + p];
            for (int k = 1; k < K; ++k)
                mx = std::max(mx, xv[(static_cast<std::int64_t>(n) * K + k) * HW + p]);
            T z = T(0);
            for (int k = 0; k < K; ++k) {
                const T e = std::exp(xv[(static_cast<std::int64_t>(n) * K + k) * HW + p] - mx);
                out[(static_cast<std::int64_t>(n) * K + k) * HW + p] = e;
                z += e;
            }
            const T inv = T(1) / z;
            for (int k = 0; k < K; ++k) out[(static_cast<std::int64_t>(n) * K + k) * HW + p] *= inv;
        }
    Var<T> y = tp.make(std::move(out), "softmax_channels", nullptr);
    tp.set_backward(y, [x, y, N, K, HW](Tape<T>& t) {
        const Tensor<T>& gy = t.grad(y);
        const Tensor<T>& yv = t.value(y);
        Tensor<T>& gx = t.grad(x);
        for (int n = 0; n < N; ++n)
            for (std::int64_t p = 0; p < HW; ++p) {
                T dot = T(0);
                for (int k = 0; k < K; ++k) {
                    const std::int64_t idx = (static_cast<std::int64_t>(n) * K + k) * HW + p;
                    dot += gy[idx] * yv[idx];
                }
                for (int k = 0; k < K; ++k) {
                    const std::int64_t idx = (static_cast<std::int64_t>(n) * K + k) * HW + p;
                    gx[idx] += yv[idx] * (gy[idx] - dot);
                }
            }
    });
    return y;
}

template <typename T>
Var<T> add(Tape<T>& tp, Var<T> a, Var<T> b) {
    const Tensor<T>& av = tp.value(a);
    const Tensor<T>& bv = tp.value(b);
    if (!av.same_shape(bv))
        throw DimensionError("add: mismatched shapes " + av.shape_str() + " vs " + bv.shape_str());
    Tensor<T> out(av.shape());
    kernels::table<T>().add(av.data(), bv.data(), out.data(), out.numel());
    Var<T> y = tp.make(std::move(out), "add", nullptr);
    tp.set_backward(y, [a, b, y](Tape<T>& t) {
        const Tensor<T>& gy = t.grad(y);
        t.accumulate_grad(a, gy);
        t.accumulate_grad(b, gy);
    });
    return y;
}

template <typename T>
Var<T> mul(Tape<T>& tp, Var<T> a, Var<T> b) {
    const Tensor<T>& av = tp.value(a);
    const Tensor<T>& bv = tp.value(b);
    if (!av.same_shape(bv))
        throw DimensionError("mul: mismatched shapes " + av.shape_str() + " vs " + bv.shape_str());
    Tensor<T> out(av.shape());
    kernels::table<T>().mul(av.data(), bv.data(), out.data(), out.numel());
    Var<T> y = tp.make(std::move(out), "mul", nullptr);
    tp.set_backward(y, [a, b, y](Tape<T>& t) {
        const Tensor<T>& gy = t.grad(y);
        const Tensor<T>& av = t.value(a);
        const Tensor<T>& bv = t.value(b);
        Tensor<T>& ga = t.grad(a);
        Tensor<T>& gb = t.grad(b);
        for (std::int64_t i = 0; i < gy.numel(); ++i) {
            ga[i] += gy[i] * bv[i];
            gb[i] += gy[i] * av[i];
        }
    });
    return y;
}

template <typename T>
Var<T> scale(Tape<T>& tp, Var<T> x, T c) {
    const Tensor<T>& xv = tp.value(x);
    Tensor<T> out(xv.shape());
    kernels::table<T>().scale(c, xv.data(), out.data(), out.numel());
    Var<T> y = tp.make(std::move(out), "scale", nullptr);
    tp.set_backward(y, [x, y, c](Tape<T>& t) {
        const Tensor<T>& gy = t.grad(y);
        kernels::table<T>().axpy(c, gy.data(), t.grad(x).data(), gy.numel());
    });
    return y;
}

template <typename T>
Var<T> sum_all(Tape<T>& tp, Var<T> x) {
    const Tensor<T>& xv = tp.value(x);
    T s = T(0);
    for (std::int64_t i = 0; i < xv.numel(); ++i) s += xv[i];
    Var<T> y = tp.make(Tensor<T>::from({1}, {s}), "sum_all", nullptr);
    tp.set_backward(y, [x, y](Tape<T>& t) {
        const T g = t.grad(y)[0];
        Tensor<T>& gx = t.grad(x);
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
    return y;
}

// Fixed-weight contraction to a scalar; the finite-difference harness uses it
// to build scalar objectives over arbitrary op outputs.
template <typename T>
Var<T> weighted_sum(Tape<T>& tp, Var<T> x, const Tensor<T>& weights) {
    const Tensor<T>& xv = tp.value(x);
    if (!xv.same_shape(weights)) throw DimensionError("weighted_sum: weight shape mismatch");
    T s = T(0);
    for (std::int64_t i = 0; i < xv.numel(); ++i) s += xv[i] * weights[i];
    Var<T> y = tp.make(Tensor<T>::from({1}, {s}), "weighted_sum", nullptr);
    tp.set_backward(y, [x, y, weights](Tape<T>& t) {
        const T g = t.grad(y)[0];
        Tensor<T>& gx = t.grad(x);
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g * weights[i];
    });
    return y;
}

}  // namespace iaunet::nn::ops
