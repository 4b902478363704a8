#include <cmath>
#include <vector>

#include "doctest.h"
#include "iaunet/common.hpp"
#include "iaunet/kernels.hpp"

using namespace iaunet;
using namespace iaunet::nn;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

// Naive reference used as the independent oracle for all gemm variants.
void naive_gemm(char variant, int M, int N, int K, const double* A, int lda, const double* B, int ldb, double* C,
                int ldc) {
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j) {
            double s = 0.0;
            for (int k = 0; k < K; ++k) {
                double a = variant == 't' ? A[k * lda + i] : A[i * lda + k];
                double b = variant == 'n' ? B[j * ldb + k] : B[k * ldb + j];
                // variant: 'f' = nn, 't' = tn, 'n' = nt
                s += a * b;
            }
            C[i * ldc + j] = s;
        }
}

template <typename T>
void check_gemm_variant(const kernels::Table<T>& tab, char variant, int M, int N, int K, double tol) {
    Rng rng(derive_seed(99, {static_cast<std::uint64_t>(variant), static_cast<std::uint64_t>(M * 131 + N * 7 + K)}));
    const int lda = variant == 't' ? M : K;
    const int ldb = variant == 'n' ? K : N;
    const std::size_t an = static_cast<std::size_t>(variant == 't' ? K * M : M * K);
    const std::size_t bn = static_cast<std::size_t>(variant == 'n' ? N * K : K * N);
    auto a64 = random_vec(an, rng);
    auto b64 = random_vec(bn, rng);
    std::vector<double> ref(static_cast<std::size_t>(M) * N);
    naive_gemm(variant, M, N, K, a64.data(), lda, b64.data(), ldb, ref.data(), N);

    std::vector<T> a(a64.begin(), a64.end()), b(b64.begin(), b64.end());
    std::vector<T> c(static_cast<std::size_t>(M) * N, T(0));
    auto fn = variant == 'f' ? tab.gemm_nn : (variant == 't' ? tab.gemm_tn : tab.gemm_nt);
    fn(M, N, K, a.data(), lda, b.data(), ldb, c.data(), N, false);
    for (std::size_t i = 0; i < c.size(); ++i) {
        REQUIRE(std::abs(static_cast<double>(c[i]) - ref[i]) < tol * (1.0 + std::abs(ref[i])));
    }
    // accumulate flag adds on top of existing values
    fn(M, N, K, a.data(), lda, b.data(), ldb, c.data(), N, true);
    for (std::size_t i = 0; i < c.size(); ++i) {
        REQUIRE(std::abs(static_cast<double>(c[i]) - 2.0 * ref[i]) < 2.0 * tol * (1.0 + std::abs(ref[i])));
    }
}

}  // namespace

TEST_CASE("gemm variants match the naive oracle (scalar and active tables)") {
    const int sizes[][3] = {{1, 1, 1}, {3, 5, 7}, {6, 16, 32}, {7, 17, 9}, {13, 33, 20}, {24, 64, 48}};
    for (auto& s : sizes) {
        for (char v : {'f', 't', 'n'}) {
            check_gemm_variant<double>(kernels::scalar_table_f64(), v, s[0], s[1], s[2], 1e-12);
            check_gemm_variant<float>(kernels::scalar_table_f32(), v, s[0], s[1], s[2], 1e-4);
            check_gemm_variant<double>(kernels::table<double>(), v, s[0], s[1], s[2], 1e-12);
            check_gemm_variant<float>(kernels::table<float>(), v, s[0], s[1], s[2], 1e-4);
        }
    }
}

TEST_CASE("avx2 tables agree with scalar reference" * doctest::skip(!kernels::avx2_available())) {
    // Reduction-order differences bound the disagreement; elementwise ops
    // must agree bit for bit.
    const auto& sf = kernels::scalar_table_f32();
    const auto& af = kernels::avx2_table_f32();
    const auto& sd = kernels::scalar_table_f64();
    const auto& ad = kernels::avx2_table_f64();

    Rng rng(123);
    for (int trial = 0; trial < 8; ++trial) {
        const int M = 1 + static_cast<int>(rng.uniform_int(40));
        const int N = 1 + static_cast<int>(rng.uniform_int(64));
        const int K = 1 + static_cast<int>(rng.uniform_int(96));
        for (char v : {'f', 't', 'n'}) {
            check_gemm_variant<float>(af, v, M, N, K, 1e-4);
            check_gemm_variant<double>(ad, v, M, N, K, 1e-12);
        }
    }

    const std::size_t n = 1037;  // deliberately not a lane multiple
    auto x64 = random_vec(n, rng);
    auto y64 = random_vec(n, rng);
    std::vector<float> xf(x64.begin(), x64.end()), yf(y64.begin(), y64.end());

    std::vector<float> r1(n), r2(n);
    sf.relu(xf.data(), r1.data(), static_cast<std::int64_t>(n));
    af.relu(xf.data(), r2.data(), static_cast<std::int64_t>(n));
    CHECK(r1 == r2);
    sf.add(xf.data(), yf.data(), r1.data(), static_cast<std::int64_t>(n));
    af.add(xf.data(), yf.data(), r2.data(), static_cast<std::int64_t>(n));
    CHECK(r1 == r2);
    sf.mul(xf.data(), yf.data(), r1.data(), static_cast<std::int64_t>(n));
    af.mul(xf.data(), yf.data(), r2.data(), static_cast<std::int64_t>(n));
    CHECK(r1 == r2);
    sf.scale(0.37f, xf.data(), r1.data(), static_cast<std::int64_t>(n));
    af.scale(0.37f, xf.data(), r2.data(), static_cast<std::int64_t>(n));
    CHECK(r1 == r2);

    std::vector<double> d1(n), d2(n);
    sd.relu(x64.data(), d1.data(), static_cast<std::int64_t>(n));
    ad.relu(x64.data(), d2.data(), static_cast<std::int64_t>(n));
    CHECK(d1 == d2);

    // relu_grad accumulates identically up to the sign of zero
    std::vector<float> g1(n, 0.5f), g2(n, 0.5f);
    sf.relu_grad(xf.data(), yf.data(), g1.data(), static_cast<std::int64_t>(n));
    af.relu_grad(xf.data(), yf.data(), g2.data(), static_cast<std::int64_t>(n));
    for (std::size_t i = 0; i < n; ++i) CHECK(g1[i] == g2[i]);

    // reductions and fused ops within tolerance
    const double s1 = sd.sum(x64.data(), static_cast<std::int64_t>(n));
    const double s2 = ad.sum(x64.data(), static_cast<std::int64_t>(n));
    CHECK(std::abs(s1 - s2) < 1e-10 * (1.0 + std::abs(s1)));
    const double q1 = sd.sumsq(x64.data(), static_cast<std::int64_t>(n));
    const double q2 = ad.sumsq(x64.data(), static_cast<std::int64_t>(n));
    CHECK(std::abs(q1 - q2) < 1e-10 * (1.0 + q1));

    auto ax1 = y64, ax2 = y64;
    sd.axpy(0.21, x64.data(), ax1.data(), static_cast<std::int64_t>(n));
    ad.axpy(0.21, x64.data(), ax2.data(), static_cast<std::int64_t>(n));
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(ax1[i] - ax2[i]) < 1e-14);
}

TEST_CASE("kernel results are identical across repeated runs") {
    Rng rng(5);
    const int M = 23, N = 37, K = 41;
    auto a = random_vec(static_cast<std::size_t>(M) * K, rng);
    auto b = random_vec(static_cast<std::size_t>(K) * N, rng);
    std::vector<double> c1(static_cast<std::size_t>(M) * N), c2(c1.size());
    kernels::gemm_nn(M, N, K, a.data(), K, b.data(), N, c1.data(), N, false);
    kernels::gemm_nn(M, N, K, a.data(), K, b.data(), N, c2.data(), N, false);
    CHECK(c1 == c2);
}
