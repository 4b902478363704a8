#pragma once

#include <cstdint>

namespace iaunet::nn::kernels {

// Arithmetic inner loops come in a scalar reference flavor and an AVX2/FMA
// flavor selected once at runtime (cpuid, overridable via IAUNET_SIMD=
// scalar|avx2|auto). Per output element the reduction order is fixed
// (k ascending), so a given build produces identical results on every run
// regardless of thread count.
enum class Isa { scalar, avx2 };

Isa active_isa();
const char* isa_name(Isa isa);
bool avx2_available();

// GEMM conventions (row-major, ld = leading stride of the named matrix):
//   nn: C[i,j] = sum_k A[i*lda+k] * B[k*ldb+j]     A is MxK, B is KxN
//   tn: C[i,j] = sum_k A[k*lda+i] * B[k*ldb+j]     A is KxM (logical A^T * B)
//   nt: C[i,j] = sum_k A[i*lda+k] * B[j*ldb+k]     A is MxK, B is NxK
// acc=true accumulates into C instead of overwriting it.
template <typename T>
struct Table {
    void (*gemm_nn)(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc, bool acc);
    void (*gemm_tn)(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc, bool acc);
    void (*gemm_nt)(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc, bool acc);
    void (*relu)(const T* x, T* y, std::int64_t n);
    void (*relu_grad)(const T* x, const T* dy, T* dx, std::int64_t n);  // dx += dy * (x > 0)
    void (*axpy)(T a, const T* x, T* y, std::int64_t n);                // y += a * x
    void (*add)(const T* a, const T* b, T* y, std::int64_t n);
    void (*mul)(const T* a, const T* b, T* y, std::int64_t n);
    void (*scale)(T a, const T* x, T* y, std::int64_t n);
    T (*sum)(const T* x, std::int64_t n);
    T (*sumsq)(const T* x, std::int64_t n);
};

template <typename T>
const Table<T>& table();

const Table<float>& scalar_table_f32();
const Table<double>& scalar_table_f64();
const Table<float>& avx2_table_f32();  // valid only when avx2_available()
const Table<double>& avx2_table_f64();

template <>
const Table<float>& table<float>();
template <>
const Table<double>& table<double>();

// Threaded front ends: split rows of C across the worker pool. The split
// never changes element-level reduction order.
template <typename T>
void gemm_nn(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc, bool acc = false);
template <typename T>
void gemm_tn(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc, bool acc = false);
template <typename T>
void gemm_nt(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc, bool acc = false);

}  // namespace iaunet::nn::kernels
