#include "iaunet/kernels.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>

#include "iaunet/threadpool.hpp"

namespace iaunet::nn::kernels {

bool avx2_available() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

namespace {

Isa select_isa() {
    const char* env = std::getenv("IAUNET_SIMD");
    if (env) {
        if (std::strcmp(env, "scalar") == 0) return Isa::scalar;
        if (std::strcmp(env, "avx2") == 0) return avx2_available() ? Isa::avx2 : Isa::scalar;
    }
    return avx2_available() ? Isa::avx2 : Isa::scalar;
}

}  // namespace

Isa active_isa() {
    static const Isa isa = select_isa();
    return isa;
}

const char* isa_name(Isa isa) {
    return isa == Isa::avx2 ? "avx2" : "scalar";
}

template <>
const Table<float>& table<float>() {
    return active_isa() == Isa::avx2 ? avx2_table_f32() : scalar_table_f32();
}

template <>
const Table<double>& table<double>() {
    return active_isa() == Isa::avx2 ? avx2_table_f64() : scalar_table_f64();
}

namespace {

// Row-sliced threading. For tn the row index i addresses columns of the
// stored A, so the slice offsets A by i0 elements instead of i0*lda rows.
template <typename T, int kVariant>
void gemm_threaded(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc, bool acc) {
    const auto& t = table<T>();
    auto run = [&](std::int64_t i0, std::int64_t i1) {
        const int m = static_cast<int>(i1 - i0);
        T* c = C + i0 * ldc;
        if constexpr (kVariant == 0) {
            t.gemm_nn(m, N, K, A + i0 * lda, lda, B, ldb, c, ldc, acc);
        } else if constexpr (kVariant == 1) {
            t.gemm_tn(m, N, K, A + i0, lda, B, ldb, c, ldc, acc);
        } else {
            t.gemm_nt(m, N, K, A + i0 * lda, lda, B, ldb, c, ldc, acc);
        }
    };
    // Only split when there is enough arithmetic to amortize the handoff.
    const std::int64_t flops = 2LL * M * N * K;
    if (flops < (1 << 16)) {
        run(0, M);
        return;
    }
    ThreadPool::instance().parallel_for(M, std::max<std::int64_t>(6, M / (2 * ThreadPool::instance().workers())), run);
}

}  // namespace

template <typename T>
void gemm_nn(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc, bool acc) {
    gemm_threaded<T, 0>(M, N, K, A, lda, B, ldb, C, ldc, acc);
}

template <typename T>
void gemm_tn(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc, bool acc) {
    gemm_threaded<T, 1>(M, N, K, A, lda, B, ldb, C, ldc, acc);
}

template <typename T>
void gemm_nt(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc, bool acc) {
    gemm_threaded<T, 2>(M, N, K, A, lda, B, ldb, C, ldc, acc);
}

template void gemm_nn<float>(int, int, int, const float*, int, const float*, int, float*, int, bool);
template void gemm_nn<double>(int, int, int, const double*, int, const double*, int, double*, int, bool);
template void gemm_tn<float>(int, int, int, const float*, int, const float*, int, float*, int, bool);
template void gemm_tn<double>(int, int, int, const double*, int, const double*, int, double*, int, bool);
template void gemm_nt<float>(int, int, int, const float*, int, const float*, int, float*, int, bool);
template void gemm_nt<double>(int, int, int, const double*, int, const double*, int, double*, int, bool);

}  // namespace iaunet::nn::kernels
