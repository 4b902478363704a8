// AVX2/FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma on x86-64; the dispatcher never hands these pointers out
// unless the CPU reports both features.

#include "iaunet/kernels.hpp"

#include <cstdlib>

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

namespace iaunet::nn::kernels {
namespace {

// ---------------------------------------------------------------- float ---

// 6x16 register tile, full-K accumulation (k ascending per element).
inline void mk_f32_6x16(int K, const float* a_base, std::int64_t a_stride_row, std::int64_t a_stride_k, const float* B,
                        int ldb, float* C, int ldc, bool acc) {
    __m256 c0a, c0b, c1a, c1b, c2a, c2b, c3a, c3b, c4a, c4b, c5a, c5b;
    if (acc) {
        c0a = _mm256_loadu_ps(C + 0 * ldc), c0b = _mm256_loadu_ps(C + 0 * ldc + 8);
        c1a = _mm256_loadu_ps(C + 1 * ldc), c1b = _mm256_loadu_ps(C + 1 * ldc + 8);
        c2a = _mm256_loadu_ps(C + 2 * ldc), c2b = _mm256_loadu_ps(C + 2 * ldc + 8);
        c3a = _mm256_loadu_ps(C + 3 * ldc), c3b = _mm256_loadu_ps(C + 3 * ldc + 8);
        c4a = _mm256_loadu_ps(C + 4 * ldc), c4b = _mm256_loadu_ps(C + 4 * ldc + 8);
        c5a = _mm256_loadu_ps(C + 5 * ldc), c5b = _mm256_loadu_ps(C + 5 * ldc + 8);
    } else {
        c0a = c0b = c1a = c1b = c2a = c2b = c3a = c3b = c4a = c4b = c5a = c5b = _mm256_setzero_ps();
    }
    for (int k = 0; k < K; ++k) {
        const __m256 b0 = _mm256_loadu_ps(B + static_cast<std::int64_t>(k) * ldb);
        const __m256 b1 = _mm256_loadu_ps(B + static_cast<std::int64_t>(k) * ldb + 8);
        const float* ak = a_base + k * a_stride_k;
        __m256 av;
        av = _mm256_broadcast_ss(ak + 0 * a_stride_row);
        c0a = _mm256_fmadd_ps(av, b0, c0a), c0b = _mm256_fmadd_ps(av, b1, c0b);
        av = _mm256_broadcast_ss(ak + 1 * a_stride_row);
        c1a = _mm256_fmadd_ps(av, b0, c1a), c1b = _mm256_fmadd_ps(av, b1, c1b);
        av = _mm256_broadcast_ss(ak + 2 * a_stride_row);
        c2a = _mm256_fmadd_ps(av, b0, c2a), c2b = _mm256_fmadd_ps(av, b1, c2b);
        av = _mm256_broadcast_ss(ak + 3 * a_stride_row);
        c3a = _mm256_fmadd_ps(av, b0, c3a), c3b = _mm256_fmadd_ps(av, b1, c3b);
        av = _mm256_broadcast_ss(ak + 4 * a_stride_row);
        c4a = _mm256_fmadd_ps(av, b0, c4a), c4b = _mm256_fmadd_ps(av, b1, c4b);
        av = _mm256_broadcast_ss(ak + 5 * a_stride_row);
        c5a = _mm256_fmadd_ps(av, b0, c5a), c5b = _mm256_fmadd_ps(av, b1, c5b);
    }
    _mm256_storeu_ps(C + 0 * ldc, c0a), _mm256_storeu_ps(C + 0 * ldc + 8, c0b);
    _mm256_storeu_ps(C + 1 * ldc, c1a), _mm256_storeu_ps(C + 1 * ldc + 8, c1b);
    _mm256_storeu_ps(C + 2 * ldc, c2a), _mm256_storeu_ps(C + 2 * ldc + 8, c2b);
    _mm256_storeu_ps(C + 3 * ldc, c3a), _mm256_storeu_ps(C + 3 * ldc + 8, c3b);
    _mm256_storeu_ps(C + 4 * ldc, c4a), _mm256_storeu_ps(C + 4 * ldc + 8, c4b);
    _mm256_storeu_ps(C + 5 * ldc, c5a), _mm256_storeu_ps(C + 5 * ldc + 8, c5b);
}

// Partial tiles fall back to plain loops with the same k-ascending order.
inline void edge_f32(int mrem, int nrem, int K, const float* a_base, std::int64_t a_stride_row,
                     std::int64_t a_stride_k, const float* B, int ldb, float* C, int ldc, bool acc) {
    for (int r = 0; r < mrem; ++r) {
        float* c = C + static_cast<std::int64_t>(r) * ldc;
        if (!acc) {
            for (int j = 0; j < nrem; ++j) c[j] = 0.0f;
        }
        for (int k = 0; k < K; ++k) {
            const float av = a_base[r * a_stride_row + k * a_stride_k];
            const float* b = B + static_cast<std::int64_t>(k) * ldb;
            for (int j = 0; j < nrem; ++j) c[j] += av * b[j];
        }
    }
}

void gemm_bcast_f32(int M, int N, int K, const float* A, std::int64_t a_stride_row, std::int64_t a_stride_k,
                    const float* B, int ldb, float* C, int ldc, bool acc) {
    constexpr int MR = 6, NR = 16;
    for (int i0 = 0; i0 < M; i0 += MR) {
        const int mrem = M - i0 < MR ? M - i0 : MR;
        const float* a_blk = A + i0 * a_stride_row;
        for (int j0 = 0; j0 < N; j0 += NR) {
            const int nrem = N - j0 < NR ? N - j0 : NR;
            float* c_blk = C + static_cast<std::int64_t>(i0) * ldc + j0;
            if (mrem == MR && nrem == NR) {
                mk_f32_6x16(K, a_blk, a_stride_row, a_stride_k, B + j0, ldb, c_blk, ldc, acc);
            } else {
                edge_f32(mrem, nrem, K, a_blk, a_stride_row, a_stride_k, B + j0, ldb, c_blk, ldc, acc);
            }
        }
    }
}

void avx2_gemm_nn_f32(int M, int N, int K, const float* A, int lda, const float* B, int ldb, float* C, int ldc,
                      bool acc) {
    gemm_bcast_f32(M, N, K, A, lda, 1, B, ldb, C, ldc, acc);
}

void avx2_gemm_tn_f32(int M, int N, int K, const float* A, int lda, const float* B, int ldb, float* C, int ldc,
                      bool acc) {
    gemm_bcast_f32(M, N, K, A, 1, lda, B, ldb, C, ldc, acc);
}

inline float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 1));
    return _mm_cvtss_f32(lo);
}

void avx2_gemm_nt_f32(int M, int N, int K, const float* A, int lda, const float* B, int ldb, float* C, int ldc,
                      bool acc) {
    const int K8 = K & ~7;
    for (int i = 0; i < M; ++i) {
        const float* a = A + static_cast<std::int64_t>(i) * lda;
        float* c = C + static_cast<std::int64_t>(i) * ldc;
        int j = 0;
        for (; j + 4 <= N; j += 4) {
            const float* b0 = B + static_cast<std::int64_t>(j + 0) * ldb;
            const float* b1 = B + static_cast<std::int64_t>(j + 1) * ldb;
            const float* b2 = B + static_cast<std::int64_t>(j + 2) * ldb;
            const float* b3 = B + static_cast<std::int64_t>(j + 3) * ldb;
            __m256 s0 = _mm256_setzero_ps(), s1 = _mm256_setzero_ps();
            __m256 s2 = _mm256_setzero_ps(), s3 = _mm256_setzero_ps();
            for (int k = 0; k < K8; k += 8) {
                const __m256 av = _mm256_loadu_ps(a + k);
                s0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + k), s0);
                s1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + k), s1);
                s2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + k), s2);
                s3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + k), s3);
            }
            float d0 = hsum(s0), d1 = hsum(s1), d2 = hsum(s2), d3 = hsum(s3);
            for (int k = K8; k < K; ++k) {
                d0 += a[k] * b0[k];
                d1 += a[k] * b1[k];
                d2 += a[k] * b2[k];
                d3 += a[k] * b3[k];
            }
            if (acc) {
                c[j] += d0, c[j + 1] += d1, c[j + 2] += d2, c[j + 3] += d3;
            } else {
                c[j] = d0, c[j + 1] = d1, c[j + 2] = d2, c[j + 3] = d3;
            }
        }
        for (; j < N; ++j) {
            const float* b = B + static_cast<std::int64_t>(j) * ldb;
            __m256 s0 = _mm256_setzero_ps();
            for (int k = 0; k < K8; k += 8) s0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), s0);
            float d = hsum(s0);
            for (int k = K8; k < K; ++k) d += a[k] * b[k];
            c[j] = acc ? c[j] + d : d;
        }
    }
}

void avx2_relu_f32(const float* x, float* y, std::int64_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void avx2_relu_grad_f32(const float* x, const float* dy, float* dx, std::int64_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
        const __m256 g = _mm256_and_ps(mask, _mm256_loadu_ps(dy + i));
        _mm256_storeu_ps(dx + i, _mm256_add_ps(_mm256_loadu_ps(dx + i), g));
    }
    for (; i < n; ++i) {
        if (x[i] > 0.0f) dx[i] += dy[i];
    }
}

void avx2_axpy_f32(float a, const float* x, float* y, std::int64_t n) {
    const __m256 av = _mm256_set1_ps(a);
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] += a * x[i];
}

void avx2_add_f32(const float* a, const float* b, float* y, std::int64_t n) {
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) y[i] = a[i] + b[i];
}

void avx2_mul_f32(const float* a, const float* b, float* y, std::int64_t n) {
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) y[i] = a[i] * b[i];
}

void avx2_scale_f32(float a, const float* x, float* y, std::int64_t n) {
    const __m256 av = _mm256_set1_ps(a);
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) y[i] = a * x[i];
}

float avx2_sum_f32(const float* x, std::int64_t n) {
    __m256 s0 = _mm256_setzero_ps(), s1 = _mm256_setzero_ps();
    std::int64_t i = 0;
    for (; i + 16 <= n; i += 16) {
        s0 = _mm256_add_ps(s0, _mm256_loadu_ps(x + i));
        s1 = _mm256_add_ps(s1, _mm256_loadu_ps(x + i + 8));
    }
    float r = hsum(_mm256_add_ps(s0, s1));
    for (; i < n; ++i) r += x[i];
    return r;
}

float avx2_sumsq_f32(const float* x, std::int64_t n) {
    __m256 s0 = _mm256_setzero_ps(), s1 = _mm256_setzero_ps();
    std::int64_t i = 0;
    for (; i + 16 <= n; i += 16) {
        const __m256 a = _mm256_loadu_ps(x + i);
        const __m256 b = _mm256_loadu_ps(x + i + 8);
        s0 = _mm256_fmadd_ps(a, a, s0);
        s1 = _mm256_fmadd_ps(b, b, s1);
    }
    float r = hsum(_mm256_add_ps(s0, s1));
    for (; i < n; ++i) r += x[i] * x[i];
    return r;
}

// --------------------------------------------------------------- double ---

inline void mk_f64_6x8(int K, const double* a_base, std::int64_t a_stride_row, std::int64_t a_stride_k,
                       const double* B, int ldb, double* C, int ldc, bool acc) {
    __m256d c0a, c0b, c1a, c1b, c2a, c2b, c3a, c3b, c4a, c4b, c5a, c5b;
    if (acc) {
        c0a = _mm256_loadu_pd(C + 0 * ldc), c0b = _mm256_loadu_pd(C + 0 * ldc + 4);
        c1a = _mm256_loadu_pd(C + 1 * ldc), c1b = _mm256_loadu_pd(C + 1 * ldc + 4);
        c2a = _mm256_loadu_pd(C + 2 * ldc), c2b = _mm256_loadu_pd(C + 2 * ldc + 4);
        c3a = _mm256_loadu_pd(C + 3 * ldc), c3b = _mm256_loadu_pd(C + 3 * ldc + 4);
        c4a = _mm256_loadu_pd(C + 4 * ldc), c4b = _mm256_loadu_pd(C + 4 * ldc + 4);
        c5a = _mm256_loadu_pd(C + 5 * ldc), c5b = _mm256_loadu_pd(C + 5 * ldc + 4);
    } else {
        c0a = c0b = c1a = c1b = c2a = c2b = c3a = c3b = c4a = c4b = c5a = c5b = _mm256_setzero_pd();
    }
    for (int k = 0; k < K; ++k) {
        const __m256d b0 = _mm256_loadu_pd(B + static_cast<std::int64_t>(k) * ldb);
        const __m256d b1 = _mm256_loadu_pd(B + static_cast<std::int64_t>(k) * ldb + 4);
        const double* ak = a_base + k * a_stride_k;
        __m256d av;
        av = _mm256_broadcast_sd(ak + 0 * a_stride_row);
        c0a = _mm256_fmadd_pd(av, b0, c0a), c0b = _mm256_fmadd_pd(av, b1, c0b);
        av = _mm256_broadcast_sd(ak + 1 * a_stride_row);
        c1a = _mm256_fmadd_pd(av, b0, c1a), c1b = _mm256_fmadd_pd(av, b1, c1b);
        av = _mm256_broadcast_sd(ak + 2 * a_stride_row);
        c2a = _mm256_fmadd_pd(av, b0, c2a), c2b = _mm256_fmadd_pd(av, b1, c2b);
        av = _mm256_broadcast_sd(ak + 3 * a_stride_row);
        c3a = _mm256_fmadd_pd(av, b0, c3a), c3b = _mm256_fmadd_pd(av, b1, c3b);
        av = _mm256_broadcast_sd(ak + 4 * a_stride_row);
        c4a = _mm256_fmadd_pd(av, b0, c4a), c4b = _mm256_fmadd_pd(av, b1, c4b);
        av = _mm256_broadcast_sd(ak + 5 * a_stride_row);
        c5a = _mm256_fmadd_pd(av, b0, c5a), c5b = _mm256_fmadd_pd(av, b1, c5b);
    }
    _mm256_storeu_pd(C + 0 * ldc, c0a), _mm256_storeu_pd(C + 0 * ldc + 4, c0b);
    _mm256_storeu_pd(C + 1 * ldc, c1a), _mm256_storeu_pd(C + 1 * ldc + 4, c1b);
    _mm256_storeu_pd(C + 2 * ldc, c2a), _mm256_storeu_pd(C + 2 * ldc + 4, c2b);
    _mm256_storeu_pd(C + 3 * ldc, c3a), _mm256_storeu_pd(C + 3 * ldc + 4, c3b);
    _mm256_storeu_pd(C + 4 * ldc, c4a), _mm256_storeu_pd(C + 4 * ldc + 4, c4b);
    _mm256_storeu_pd(C + 5 * ldc, c5a), _mm256_storeu_pd(C + 5 * ldc + 4, c5b);
}

inline void edge_f64(int mrem, int nrem, int K, const double* a_base, std::int64_t a_stride_row,
                     std::int64_t a_stride_k, const double* B, int ldb, double* C, int ldc, bool acc) {
    for (int r = 0; r < mrem; ++r) {
        double* c = C + static_cast<std::int64_t>(r) * ldc;
        if (!acc) {
            for (int j = 0; j < nrem; ++j) c[j] = 0.0;
        }
        for (int k = 0; k < K; ++k) {
            const double av = a_base[r * a_stride_row + k * a_stride_k];
            const double* b = B + static_cast<std::int64_t>(k) * ldb;
            for (int j = 0; j < nrem; ++j) c[j] += av * b[j];
        }
    }
}

void gemm_bcast_f64(int M, int N, int K, const double* A, std::int64_t a_stride_row, std::int64_t a_stride_k,
                    const double* B, int ldb, double* C, int ldc, bool acc) {
    constexpr int MR = 6, NR = 8;
    for (int i0 = 0; i0 < M; i0 += MR) {
        const int mrem = M - i0 < MR ? M - i0 : MR;
        const double* a_blk = A + i0 * a_stride_row;
        for (int j0 = 0; j0 < N; j0 += NR) {
            const int nrem = N - j0 < NR ? N - j0 : NR;
            double* c_blk = C + static_cast<std::int64_t>(i0) * ldc + j0;
            if (mrem == MR && nrem == NR) {
                mk_f64_6x8(K, a_blk, a_stride_row, a_stride_k, B + j0, ldb, c_blk, ldc, acc);
            } else {
                edge_f64(mrem, nrem, K, a_blk, a_stride_row, a_stride_k, B + j0, ldb, c_blk, ldc, acc);
            }
        }
    }
}

void avx2_gemm_nn_f64(int M, int N, int K, const double* A, int lda, const double* B, int ldb, double* C, int ldc,
                      bool acc) {
    gemm_bcast_f64(M, N, K, A, lda, 1, B, ldb, C, ldc, acc);
}

void avx2_gemm_tn_f64(int M, int N, int K, const double* A, int lda, const double* B, int ldb, double* C, int ldc,
                      bool acc) {
    gemm_bcast_f64(M, N, K, A, 1, lda, B, ldb, C, ldc, acc);
}

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    lo = _mm_add_sd(lo, _mm_unpackhi_pd(lo, lo));
    return _mm_cvtsd_f64(lo);
}

void avx2_gemm_nt_f64(int M, int N, int K, const double* A, int lda, const double* B, int ldb, double* C, int ldc,
                      bool acc) {
    const int K4 = K & ~3;
    for (int i = 0; i < M; ++i) {
        const double* a = A + static_cast<std::int64_t>(i) * lda;
        double* c = C + static_cast<std::int64_t>(i) * ldc;
        for (int j = 0; j < N; ++j) {
            const double* b = B + static_cast<std::int64_t>(j) * ldb;
            __m256d s0 = _mm256_setzero_pd();
            for (int k = 0; k < K4; k += 4) s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + k), _mm256_loadu_pd(b + k), s0);
            double d = hsum(s0);
            for (int k = K4; k < K; ++k) d += a[k] * b[k];
            c[j] = acc ? c[j] + d : d;
        }
    }
}

void avx2_relu_f64(const double* x, double* y, std::int64_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::int64_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void avx2_relu_grad_f64(const double* x, const double* dy, double* dx, std::int64_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
        const __m256d g = _mm256_and_pd(mask, _mm256_loadu_pd(dy + i));
        _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), g));
    }
    for (; i < n; ++i) {
        if (x[i] > 0.0) dx[i] += dy[i];
    }
}

void avx2_axpy_f64(double a, const double* x, double* y, std::int64_t n) {
    const __m256d av = _mm256_set1_pd(a);
    std::int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] += a * x[i];
}

void avx2_add_f64(const double* a, const double* b, double* y, std::int64_t n) {
    std::int64_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) y[i] = a[i] + b[i];
}

void avx2_mul_f64(const double* a, const double* b, double* y, std::int64_t n) {
    std::int64_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) y[i] = a[i] * b[i];
}

void avx2_scale_f64(double a, const double* x, double* y, std::int64_t n) {
    const __m256d av = _mm256_set1_pd(a);
    std::int64_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) y[i] = a * x[i];
}

double avx2_sum_f64(const double* x, std::int64_t n) {
    __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        s0 = _mm256_add_pd(s0, _mm256_loadu_pd(x + i));
        s1 = _mm256_add_pd(s1, _mm256_loadu_pd(x + i + 4));
    }
    double r = hsum(_mm256_add_pd(s0, s1));
    for (; i < n; ++i) r += x[i];
    return r;
}

double avx2_sumsq_f64(const double* x, std::int64_t n) {
    __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256d a = _mm256_loadu_pd(x + i);
        const __m256d b = _mm256_loadu_pd(x + i + 4);
        s0 = _mm256_fmadd_pd(a, a, s0);
        s1 = _mm256_fmadd_pd(b, b, s1);
    }
    double r = hsum(_mm256_add_pd(s0, s1));
    for (; i < n; ++i) r += x[i] * x[i];
    return r;
}

}  // namespace

const Table<float>& avx2_table_f32() {
    static const Table<float> t = {
        &avx2_gemm_nn_f32, &avx2_gemm_tn_f32, &avx2_gemm_nt_f32, &avx2_relu_f32, &avx2_relu_grad_f32,
        &avx2_axpy_f32,    &avx2_add_f32,     &avx2_mul_f32,     &avx2_scale_f32, &avx2_sum_f32,
        &avx2_sumsq_f32,
    };
    return t;
}

const Table<double>& avx2_table_f64() {
    static const Table<double> t = {
        &avx2_gemm_nn_f64, &avx2_gemm_tn_f64, &avx2_gemm_nt_f64, &avx2_relu_f64, &avx2_relu_grad_f64,
        &avx2_axpy_f64,    &avx2_add_f64,     &avx2_mul_f64,     &avx2_scale_f64, &avx2_sum_f64,
        &avx2_sumsq_f64,
    };
    return t;
}

}  // namespace iaunet::nn::kernels

#else  // non-AVX2 build: the dispatcher never selects these tables.

namespace iaunet::nn::kernels {

const Table<float>& avx2_table_f32() {
    std::abort();
}
const Table<double>& avx2_table_f64() {
    std::abort();
}

}  // namespace iaunet::nn::kernels

#endif
