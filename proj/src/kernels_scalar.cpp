#include "iaunet/kernels.hpp"

namespace iaunet::nn::kernels {
namespace {

template <typename T>
void sc_gemm_nn(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc, bool acc) {
    for (int i = 0; i < M; ++i) {
        T* c = C + static_cast<std::int64_t>(i) * ldc;
        if (!acc) {
            for (int j = 0; j < N; ++j) c[j] = T(0);
        }
        const T* a = A + static_cast<std::int64_t>(i) * lda;
        for (int k = 0; k < K; ++k) {
            const T av = a[k];
            const T* b = B + static_cast<std::int64_t>(k) * ldb;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

template <typename T>
void sc_gemm_tn(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc, bool acc) {
    for (int i = 0; i < M; ++i) {
        T* c = C + static_cast<std::int64_t>(i) * ldc;
        if (!acc) {
            for (int j = 0; j < N; ++j) c[j] = T(0);
        }
        for (int k = 0; k < K; ++k) {
            const T av = A[static_cast<std::int64_t>(k) * lda + i];
            const T* b = B + static_cast<std::int64_t>(k) * ldb;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

template <typename T>
void sc_gemm_nt(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc, bool acc) {
    for (int i = 0; i < M; ++i) {
        const T* a = A + static_cast<std::int64_t>(i) * lda;
        T* c = C + static_cast<std::int64_t>(i) * ldc;
        for (int j = 0; j < N; ++j) {
            const T* b = B + static_cast<std::int64_t>(j) * ldb;
            T s = T(0);
            for (int k = 0; k < K; ++k) s += a[k] * b[k];
            c[j] = acc ? c[j] + s : s;
        }
    }
}

template <typename T>
void sc_relu(const T* x, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void sc_relu_grad(const T* x, const T* dy, T* dx, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) {
        if (x[i] > T(0)) dx[i] += dy[i];
    }
}

template <typename T>
void sc_axpy(T a, const T* x, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
void sc_add(const T* a, const T* b, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <typename T>
void sc_mul(const T* a, const T* b, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

template <typename T>
void sc_scale(T a, const T* x, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = a * x[i];
}

template <typename T>
T sc_sum(const T* x, std::int64_t n) {
    T s = T(0);
    for (std::int64_t i = 0; i < n; ++i) s += x[i];
    return s;
}

template <typename T>
T sc_sumsq(const T* x, std::int64_t n) {
    T s = T(0);
    for (std::int64_t i = 0; i < n; ++i) s += x[i] * x[i];
    return s;
}

template <typename T>
Table<T> make_scalar_table() {
    Table<T> t;
    t.gemm_nn = &sc_gemm_nn<T>;
    t.gemm_tn = &sc_gemm_tn<T>;
    t.gemm_nt = &sc_gemm_nt<T>;
    t.relu = &sc_relu<T>;
    t.relu_grad = &sc_relu_grad<T>;
    t.axpy = &sc_axpy<T>;
    t.add = &sc_add<T>;
    t.mul = &sc_mul<T>;
    t.scale = &sc_scale<T>;
    t.sum = &sc_sum<T>;
    t.sumsq = &sc_sumsq<T>;
    return t;
}

}  // namespace

const Table<float>& scalar_table_f32() {
    static const Table<float> t = make_scalar_table<float>();
    return t;
}

const Table<double>& scalar_table_f64() {
    static const Table<double> t = make_scalar_table<double>();
    return t;
}

}  // namespace iaunet::nn::kernels
