#include <cmath>

#include "doctest.h"
#include "iaunet/losses.hpp"
#include "iaunet/ops.hpp"
#include "iaunet/verify.hpp"

using namespace iaunet;
using namespace iaunet::nn;
namespace ops = iaunet::nn::ops;

namespace {

template <typename T>
Tensor<T> rand_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<T> t(std::move(shape));
    fill_uniform(t, rng, lo, hi);
    return t;
}

// Random values bounded away from relu/pool kinks so finite differences stay
// on one linear piece.
template <typename T>
Tensor<T> rand_tensor_nokink(std::vector<int> shape, Rng& rng) {
    Tensor<T> t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        double v = rng.uniform(-1.0, 1.0);
        if (std::abs(v) < 0.05) v += v >= 0 ? 0.1 : -0.1;
        t[i] = static_cast<T>(v + 1e-4 * static_cast<double>(i % 97));
    }
    return t;
}

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-9});
}

}  // namespace

TEST_CASE("conv2d forward matches hand-counted oracles") {
    Tape<double> tp;
    // all-ones 4x4 input, all-ones 3x3 kernel, pad 1
    auto x = tp.input(Tensor<double>({1, 1, 4, 4}, 1.0));
    auto w = tp.input(Tensor<double>({1, 1, 3, 3}, 1.0));
    auto b = tp.input(Tensor<double>({1}));
    auto y = ops::conv2d(tp, x, w, b, 1, 1);
    const Tensor<double>& out = tp.value(y);
    // corner 4, edge 6, center 9 by direct window counting
    CHECK(out.at4(0, 0, 0, 0) == 4.0);
    CHECK(out.at4(0, 0, 0, 1) == 6.0);
    CHECK(out.at4(0, 0, 1, 1) == 9.0);
    CHECK(out.at4(0, 0, 3, 3) == 4.0);
    CHECK(out.at4(0, 0, 2, 1) == 9.0);

    // 1x1 identity kernel passes input through
    Rng rng(3);
    auto xv = rand_tensor<double>({2, 1, 3, 3}, rng);
    Tape<double> tp2;
    auto x2 = tp2.input(xv);
    auto w2 = tp2.input(Tensor<double>({1, 1, 1, 1}, 1.0));
    auto b2 = tp2.input(Tensor<double>({1}));
    auto y2 = ops::conv2d(tp2, x2, w2, b2, 1, 0);
    for (std::int64_t i = 0; i < xv.numel(); ++i) CHECK(tp2.value(y2)[i] == xv[i]);

    // scalar affine: [[1,2],[3,4]] * 2 + 1
    Tape<double> tp3;
    auto x3 = tp3.input(Tensor<double>::from({1, 1, 2, 2}, {1, 2, 3, 4}));
    auto w3 = tp3.input(Tensor<double>::from({1, 1, 1, 1}, {2.0}));
    auto b3 = tp3.input(Tensor<double>::from({1}, {1.0}));
    auto y3 = ops::conv2d(tp3, x3, w3, b3, 1, 0);
    const Tensor<double>& o3 = tp3.value(y3);
    CHECK(o3[0] == 3.0);
    CHECK(o3[1] == 5.0);
    CHECK(o3[2] == 7.0);
    CHECK(o3[3] == 9.0);
}

TEST_CASE("conv2d rejects bad shapes") {
    Tape<double> tp;
    auto x = tp.input(Tensor<double>({1, 2, 4, 4}, 1.0));
    auto w = tp.input(Tensor<double>({1, 3, 3, 3}, 1.0));  // channel mismatch
    auto b = tp.input(Tensor<double>({1}));
    CHECK_THROWS_AS(ops::conv2d(tp, x, w, b, 1, 1), DimensionError);
}

TEST_CASE("relu examples") {
    Tape<double> tp;
    auto x = tp.input(Tensor<double>::from({3}, {-1.0, 0.0, 2.0}));
    auto y = ops::relu(tp, x);
    CHECK(tp.value(y)[0] == 0.0);
    CHECK(tp.value(y)[1] == 0.0);
    CHECK(tp.value(y)[2] == 2.0);
}

TEST_CASE("max_pool2d window oracle and odd-size rejection") {
    Tape<double> tp;
    auto x = tp.input(Tensor<double>::from({1, 1, 2, 2}, {1, 2, 3, 4}));
    CHECK(tp.value(ops::max_pool2d(tp, x))[0] == 4.0);

    Tape<double> tp2;
    auto x2 = tp2.input(Tensor<double>::from({1, 1, 4, 4}, {5, 1, 0, 0, 2, 3, 0, 7, 0, 0, 9, 8, 0, 0, 6, 4}));
    auto y2 = ops::max_pool2d(tp2, x2);
    CHECK(tp2.value(y2).at4(0, 0, 0, 0) == 5.0);
    CHECK(tp2.value(y2).at4(0, 0, 0, 1) == 7.0);
    CHECK(tp2.value(y2).at4(0, 0, 1, 0) == 0.0);
    CHECK(tp2.value(y2).at4(0, 0, 1, 1) == 9.0);

    Tape<double> tp3;
    auto x3 = tp3.input(Tensor<double>({1, 1, 3, 4}, 1.0));
    CHECK_THROWS_AS(ops::max_pool2d(tp3, x3), DimensionError);
}

TEST_CASE("upsample_bilinear2x preserves constants and linear ramps") {
    Tape<double> tp;
    auto c = tp.input(Tensor<double>({1, 2, 3, 3}, 0.7));
    const Tensor<double>& oc = tp.value(ops::upsample_bilinear2x(tp, c));
    CHECK(oc.shape() == std::vector<int>{1, 2, 6, 6});
    for (std::int64_t i = 0; i < oc.numel(); ++i) CHECK(oc[i] == doctest::Approx(0.7).epsilon(1e-12));

    Tape<double> tp1;
    auto one = tp1.input(Tensor<double>({1, 1, 1, 1}, 3.5));
    const Tensor<double>& o1 = tp1.value(ops::upsample_bilinear2x(tp1, one));
    for (std::int64_t i = 0; i < 4; ++i) CHECK(o1[i] == 3.5);

    // ramp along W: closed-form bilinear output is a + b*((ow+0.5)/2 - 0.5)
    const int W = 8;
    Tensor<double> ramp({1, 1, 2, W});
    for (int h = 0; h < 2; ++h)
        for (int w = 0; w < W; ++w) ramp.at4(0, 0, h, w) = 0.25 + 0.5 * w;
    Tape<double> tp2;
    const Tensor<double>& o2 = tp2.value(ops::upsample_bilinear2x(tp2, tp2.input(ramp)));
    for (int ow = 1; ow < 2 * W - 1; ++ow) {
        const double s = (ow + 0.5) / 2.0 - 0.5;
        CHECK(rel_err(o2.at4(0, 0, 1, ow), 0.25 + 0.5 * s) < 1e-5);
    }
}

TEST_CASE("conv_transpose2d_2x oracles") {
    Tape<double> tp;
    auto x = tp.input(Tensor<double>({1, 1, 1, 1}, 1.0));
    auto w = tp.input(Tensor<double>({1, 1, 2, 2}, 1.0));
    auto b = tp.input(Tensor<double>({1}));
    const Tensor<double>& o = tp.value(ops::conv_transpose2d_2x(tp, x, w, b));
    CHECK(o.shape() == std::vector<int>{1, 1, 2, 2});
    for (int i = 0; i < 4; ++i) CHECK(o[i] == 1.0);

    // zero input -> bias everywhere
    Tape<double> tp1;
    auto x1 = tp1.input(Tensor<double>({1, 2, 2, 2}));
    Rng rng(4);
    auto w1 = tp1.input(rand_tensor<double>({2, 3, 2, 2}, rng));
    auto b1 = tp1.input(Tensor<double>::from({3}, {0.5, -1.0, 2.0}));
    const Tensor<double>& o1 = tp1.value(ops::conv_transpose2d_2x(tp1, x1, w1, b1));
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 16; ++i) CHECK(o1[c * 16 + i] == tp1.value(b1)[c]);

    // scatter pattern: input column [a;b], kernel of ones
    Tape<double> tp2;
    auto x2 = tp2.input(Tensor<double>::from({1, 1, 2, 1}, {3.0, 5.0}));
    auto w2 = tp2.input(Tensor<double>({1, 1, 2, 2}, 1.0));
    auto b2 = tp2.input(Tensor<double>({1}));
    const Tensor<double>& o2 = tp2.value(ops::conv_transpose2d_2x(tp2, x2, w2, b2));
    CHECK(o2.shape() == std::vector<int>{1, 1, 4, 2});
    CHECK(o2.at4(0, 0, 0, 0) == 3.0);
    CHECK(o2.at4(0, 0, 1, 1) == 3.0);
    CHECK(o2.at4(0, 0, 2, 0) == 5.0);
    CHECK(o2.at4(0, 0, 3, 1) == 5.0);
}

TEST_CASE("global_avg_pool and masked_pool oracles") {
    Tape<double> tp;
    auto x = tp.input(Tensor<double>::from({1, 1, 2, 2}, {1, 3, 5, 7}));
    CHECK(tp.value(ops::global_avg_pool(tp, x))[0] == 4.0);

    // all-ones mask reproduces global averaging bit for bit
    Rng rng(9);
    auto feat = rand_tensor<double>({2, 3, 4, 4}, rng);
    Tensor<double> ones_mask({2, 1, 16, 16}, 1.0);
    Tape<double> tp2;
    auto f2 = tp2.input(feat);
    const Tensor<double>& gap = tp2.value(ops::global_avg_pool(tp2, f2));
    const Tensor<double>& mp = tp2.value(ops::masked_pool(tp2, f2, ones_mask));
    for (std::int64_t i = 0; i < gap.numel(); ++i) CHECK(gap[i] == mp[i]);

    // single-cell mask picks out that cell's channel vector
    // downsample samples cell centers (4i+2, 4j+2)
    Tensor<double> one_cell({2, 1, 16, 16});
    one_cell.at4(0, 0, 10, 6) = 1.0;  // cell (2,1)
    one_cell.at4(1, 0, 2, 14) = 1.0;  // cell (0,3)
    Tape<double> tp3;
    auto f3 = tp3.input(feat);
    const Tensor<double>& sel = tp3.value(ops::masked_pool(tp3, f3, one_cell));
    for (int c = 0; c < 3; ++c) {
        CHECK(sel.at2(0, c) == feat.at4(0, c, 2, 1));
        CHECK(sel.at2(1, c) == feat.at4(1, c, 0, 3));
    }

    // random mask equals the brute-force masked mean
    Tensor<double> mask({2, 1, 16, 16});
    for (std::int64_t i = 0; i < mask.numel(); ++i) mask[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
    Tape<double> tp4;
    auto f4 = tp4.input(feat);
    const Tensor<double>& pooled = tp4.value(ops::masked_pool(tp4, f4, mask));
    for (int n = 0; n < 2; ++n) {
        double cnt = 0.0;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) cnt += mask.at4(n, 0, 4 * i + 2, 4 * j + 2) >= 0.5 ? 1.0 : 0.0;
        for (int c = 0; c < 3; ++c) {
            double s = 0.0;
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j)
                    if (mask.at4(n, 0, 4 * i + 2, 4 * j + 2) >= 0.5) s += feat.at4(n, c, i, j);
            CHECK(rel_err(pooled.at2(n, c), s / std::max(cnt, 1.0)) < 1e-12);
        }
    }

    // empty mask is guarded: zero vector, no NaN
    Tensor<double> empty({2, 1, 16, 16});
    Tape<double> tp5;
    const Tensor<double>& z = tp5.value(ops::masked_pool(tp5, tp5.input(feat), empty));
    for (std::int64_t i = 0; i < z.numel(); ++i) CHECK(z[i] == 0.0);
}

TEST_CASE("linear oracles") {
    Tape<double> tp;
    auto x = tp.input(Tensor<double>::from({1, 2}, {1.0, 2.0}));
    auto w = tp.input(Tensor<double>::from({1, 2}, {3.0, 4.0}));
    auto b = tp.input(Tensor<double>::from({1}, {1.0}));
    CHECK(tp.value(ops::linear(tp, x, w, b))[0] == 12.0);

    // zero weight -> bias rows
    Tape<double> tp2;
    Rng rng(6);
    auto x2 = tp2.input(rand_tensor<double>({3, 4}, rng));
    auto w2 = tp2.input(Tensor<double>({2, 4}));
    auto b2 = tp2.input(Tensor<double>::from({2}, {0.5, -2.5}));
    const Tensor<double>& o2 = tp2.value(ops::linear(tp2, x2, w2, b2));
    for (int n = 0; n < 3; ++n) {
        CHECK(o2.at2(n, 0) == 0.5);
        CHECK(o2.at2(n, 1) == -2.5);
    }
}

TEST_CASE("l2_normalize examples and unit-norm property") {
    Tape<double> tp;
    auto x = tp.input(Tensor<double>::from({1, 2}, {3.0, 4.0}));
    const Tensor<double>& y = tp.value(ops::l2_normalize(tp, x));
    CHECK(y[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(0.8).epsilon(1e-12));

    Tape<double> tpz;
    const Tensor<double>& z = tpz.value(ops::l2_normalize(tpz, tpz.input(Tensor<double>({2, 5}))));
    for (std::int64_t i = 0; i < z.numel(); ++i) CHECK(z[i] == 0.0);

    Rng rng(8);
    for (int t = 0; t < 50; ++t) {
        Tape<double> tpr;
        const Tensor<double>& out = tpr.value(ops::l2_normalize(tpr, tpr.input(rand_tensor<double>({4, 7}, rng))));
        for (int n = 0; n < 4; ++n) {
            double sq = 0.0;
            for (int j = 0; j < 7; ++j) sq += out.at2(n, j) * out.at2(n, j);
            CHECK(std::abs(std::sqrt(sq) - 1.0) < 1e-5);
        }
    }
}

TEST_CASE("batch_norm2d examples") {
    // constant input per channel -> zeros in train mode
    ops::BatchNormState<double> st(2);
    Tape<double> tp;
    Tensor<double> x({2, 2, 3, 3});
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 2; ++c)
            for (int i = 0; i < 9; ++i) x[(n * 2 + c) * 9 + i] = c == 0 ? 2.5 : -1.0;
    auto g = tp.input(Tensor<double>({2}, 1.0));
    auto b = tp.input(Tensor<double>({2}));
    const Tensor<double>& y = tp.value(ops::batch_norm2d(tp, tp.input(x), g, b, st, true, 0.1, 1e-5));
    for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == 0.0);

    // already-normalized input passes through within 1e-4
    Rng rng(12);
    Tensor<double> xn({1, 1, 4, 4});
    fill_normal(xn, rng);
    double mu = 0.0;
    for (int i = 0; i < 16; ++i) mu += xn[i] / 16.0;
    double var = 0.0;
    for (int i = 0; i < 16; ++i) var += (xn[i] - mu) * (xn[i] - mu) / 16.0;
    for (int i = 0; i < 16; ++i) xn[i] = (xn[i] - mu) / std::sqrt(var);
    ops::BatchNormState<double> st2(1);
    Tape<double> tp2;
    const Tensor<double>& y2 = tp2.value(ops::batch_norm2d(tp2, tp2.input(xn), tp2.input(Tensor<double>({1}, 1.0)),
                                                           tp2.input(Tensor<double>({1})), st2, true, 0.1, 1e-5));
    for (int i = 0; i < 16; ++i) CHECK(std::abs(y2[i] - xn[i]) < 1e-4);

    // gamma 0, beta 5 -> constant 5
    ops::BatchNormState<double> st3(1);
    Tape<double> tp3;
    const Tensor<double>& y3 =
        tp3.value(ops::batch_norm2d(tp3, tp3.input(rand_tensor<double>({2, 1, 2, 2}, rng)),
                                    tp3.input(Tensor<double>({1})), tp3.input(Tensor<double>({1}, 5.0)), st3, true,
                                    0.1, 1e-5));
    for (std::int64_t i = 0; i < y3.numel(); ++i) CHECK(y3[i] == 5.0);
}

TEST_CASE("shape algebra across even sizes") {
    Rng rng(21);
    for (int hw : {2, 4, 8, 16}) {
        Tape<double> tp;
        auto x = tp.input(rand_tensor<double>({1, 2, hw, hw}, rng));
        auto w = tp.input(rand_tensor<double>({3, 2, 3, 3}, rng));
        auto b = tp.input(Tensor<double>({3}));
        CHECK(tp.value(ops::conv2d(tp, x, w, b, 1, 1)).shape() == std::vector<int>{1, 3, hw, hw});
        ops::BatchNormState<double> st(2);
        auto g = tp.input(Tensor<double>({2}, 1.0));
        auto be = tp.input(Tensor<double>({2}));
        CHECK(tp.value(ops::batch_norm2d(tp, x, g, be, st, true, 0.1, 1e-5)).shape() ==
              std::vector<int>{1, 2, hw, hw});
        CHECK(tp.value(ops::relu(tp, x)).shape() == std::vector<int>{1, 2, hw, hw});
        CHECK(tp.value(ops::max_pool2d(tp, x)).shape() == std::vector<int>{1, 2, hw / 2, hw / 2});
        CHECK(tp.value(ops::upsample_bilinear2x(tp, x)).shape() == std::vector<int>{1, 2, 2 * hw, 2 * hw});
        auto wt = tp.input(rand_tensor<double>({2, 5, 2, 2}, rng));
        auto bt = tp.input(Tensor<double>({5}));
        CHECK(tp.value(ops::conv_transpose2d_2x(tp, x, wt, bt)).shape() == std::vector<int>{1, 5, 2 * hw, 2 * hw});
    }
}

TEST_CASE("tape contract: scalar loss, double backward, accumulation") {
    Parameter<double> p("p", Tensor<double>::from({3}, {1.0, -2.0, 0.5}));
    {
        // loss = sum(p) -> grad all ones
        Tape<double> tp;
        auto v = tp.param(p);
        auto loss = ops::sum_all(tp, v);
        p.zero_grad();
        tp.backward(loss);
        for (int i = 0; i < 3; ++i) CHECK(p.grad[i] == 1.0);
        CHECK_THROWS_AS(tp.backward(loss), UsageError);
    }
    {
        // loss = sum(p^2)/2 -> grad equals p
        Tape<double> tp;
        auto v = tp.param(p);
        auto loss = ops::scale(tp, ops::sum_all(tp, ops::mul(tp, v, v)), 0.5);
        p.zero_grad();
        tp.backward(loss);
        for (int i = 0; i < 3; ++i) CHECK(p.grad[i] == doctest::Approx(p.value[i]).epsilon(1e-12));
    }
    {
        // non-scalar loss rejected
        Tape<double> tp;
        auto v = tp.param(p);
        CHECK_THROWS_AS(tp.backward(v), UsageError);
    }
    {
        // parameter used twice accumulates additively
        Tape<double> tp;
        auto v = tp.param(p);
        auto s = ops::add(tp, v, v);
        auto loss = ops::sum_all(tp, s);
        p.zero_grad();
        tp.backward(loss);
        for (int i = 0; i < 3; ++i) CHECK(p.grad[i] == 2.0);
    }
}

TEST_CASE("non-finite forward output is a hard error") {
    Tape<double> tp;
    auto x = tp.input(Tensor<double>::from({1, 1}, {1e308}));
    CHECK_THROWS_AS(ops::scale(tp, ops::scale(tp, x, 1e308), 1e308), NumericError);
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checks, one per primitive (64-bit).

namespace {

using verify::GradCheckSpec;

template <typename BuildFn>
void fd_check(std::vector<Parameter<double>*> params, BuildFn&& build, double rtol = 1e-5, double h_scale = 1e-3) {
    auto forward = [&]() {
        Tape<double> tp;
        return tp.value(build(tp))[0];
    };
    auto grads = [&]() {
        for (auto* p : params) p->zero_grad();
        Tape<double> tp;
        tp.backward(build(tp));
    };
    GradCheckSpec spec;
    spec.rtol = rtol;
    spec.h_scale = h_scale;
    auto res = verify::check_parameters(params, forward, grads, spec);
    INFO("worst: ", res.worst, " rel_err: ", res.max_rel_err);
    CHECK(res.pass);
}

}  // namespace

TEST_CASE("gradient check: conv2d 3x3 and 1x1") {
    Rng rng(31);
    Parameter<double> x("x", rand_tensor<double>({2, 3, 4, 4}, rng));
    Parameter<double> w("w", rand_tensor<double>({4, 3, 3, 3}, rng));
    Parameter<double> b("b", rand_tensor<double>({4}, rng));
    auto probe = rand_tensor<double>({2, 4, 4, 4}, rng);
    fd_check({&x, &w, &b}, [&](Tape<double>& tp) {
        auto y = ops::conv2d(tp, tp.param(x), tp.param(w), tp.param(b), 1, 1);
        return ops::weighted_sum(tp, y, probe);
    });

    Parameter<double> w1("w1", rand_tensor<double>({2, 3, 1, 1}, rng));
    Parameter<double> b1("b1", rand_tensor<double>({2}, rng));
    auto probe1 = rand_tensor<double>({2, 2, 4, 4}, rng);
    fd_check({&x, &w1, &b1}, [&](Tape<double>& tp) {
        auto y = ops::conv2d(tp, tp.param(x), tp.param(w1), tp.param(b1), 1, 0);
        return ops::weighted_sum(tp, y, probe1);
    });
}

TEST_CASE("gradient check: batch_norm2d train and eval") {
    Rng rng(32);
    Parameter<double> x("x", rand_tensor<double>({2, 2, 3, 3}, rng));
    Parameter<double> g("g", rand_tensor<double>({2}, rng, 0.5, 1.5));
    Parameter<double> b("b", rand_tensor<double>({2}, rng));
    auto probe = rand_tensor<double>({2, 2, 3, 3}, rng);
    for (bool training : {true, false}) {
        ops::BatchNormState<double> st(2);
        fill_uniform(st.running_mean, rng, -0.2, 0.2);
        fill_uniform(st.running_var, rng, 0.5, 1.5);
        fd_check({&x, &g, &b}, [&](Tape<double>& tp) {
            auto y = ops::batch_norm2d(tp, tp.param(x), tp.param(g), tp.param(b), st, training, 0.1, 1e-5);
            return ops::weighted_sum(tp, y, probe);
        });
    }
}

TEST_CASE("gradient check: relu, max_pool, bilinear, conv_transpose") {
    Rng rng(33);
    Parameter<double> x("x", rand_tensor_nokink<double>({2, 2, 4, 4}, rng));
    auto probe = rand_tensor<double>({2, 2, 4, 4}, rng);
    fd_check({&x}, [&](Tape<double>& tp) { return ops::weighted_sum(tp, ops::relu(tp, tp.param(x)), probe); },
             1e-5, 1e-4);

    auto probe_pool = rand_tensor<double>({2, 2, 2, 2}, rng);
    fd_check({&x},
             [&](Tape<double>& tp) { return ops::weighted_sum(tp, ops::max_pool2d(tp, tp.param(x)), probe_pool); },
             1e-5, 1e-4);

    auto probe_up = rand_tensor<double>({2, 2, 8, 8}, rng);
    fd_check({&x}, [&](Tape<double>& tp) {
        return ops::weighted_sum(tp, ops::upsample_bilinear2x(tp, tp.param(x)), probe_up);
    });

    Parameter<double> wt("wt", rand_tensor<double>({2, 3, 2, 2}, rng));
    Parameter<double> bt("bt", rand_tensor<double>({3}, rng));
    auto probe_t = rand_tensor<double>({2, 3, 8, 8}, rng);
    fd_check({&x, &wt, &bt}, [&](Tape<double>& tp) {
        return ops::weighted_sum(tp, ops::conv_transpose2d_2x(tp, tp.param(x), tp.param(wt), tp.param(bt)), probe_t);
    });
}

TEST_CASE("gradient check: pooling, linear, l2_normalize, concat, sigmoid, softmax") {
    Rng rng(34);
    Parameter<double> x("x", rand_tensor<double>({2, 3, 4, 4}, rng));
    auto probe_vec = rand_tensor<double>({2, 3}, rng);
    fd_check({&x},
             [&](Tape<double>& tp) { return ops::weighted_sum(tp, ops::global_avg_pool(tp, tp.param(x)), probe_vec); });

    Tensor<double> mask({2, 1, 8, 8});
    for (std::int64_t i = 0; i < mask.numel(); ++i) mask[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    fd_check({&x}, [&](Tape<double>& tp) {
        return ops::weighted_sum(tp, ops::masked_pool(tp, tp.param(x), mask), probe_vec);
    });

    Parameter<double> xl("xl", rand_tensor<double>({3, 5}, rng));
    Parameter<double> wl("wl", rand_tensor<double>({4, 5}, rng));
    Parameter<double> bl("bl", rand_tensor<double>({4}, rng));
    auto probe_lin = rand_tensor<double>({3, 4}, rng);
    fd_check({&xl, &wl, &bl}, [&](Tape<double>& tp) {
        return ops::weighted_sum(tp, ops::linear(tp, tp.param(xl), tp.param(wl), tp.param(bl)), probe_lin);
    });

    Parameter<double> xn("xn", rand_tensor<double>({3, 6}, rng));
    auto probe_n = rand_tensor<double>({3, 6}, rng);
    fd_check({&xn},
             [&](Tape<double>& tp) { return ops::weighted_sum(tp, ops::l2_normalize(tp, tp.param(xn)), probe_n); });

    Parameter<double> xa("xa", rand_tensor<double>({2, 2, 3, 3}, rng));
    Parameter<double> xb("xb", rand_tensor<double>({2, 3, 3, 3}, rng));
    auto probe_cat = rand_tensor<double>({2, 5, 3, 3}, rng);
    fd_check({&xa, &xb}, [&](Tape<double>& tp) {
        return ops::weighted_sum(tp, ops::concat_channels(tp, tp.param(xa), tp.param(xb)), probe_cat);
    });

    Parameter<double> xs("xs", rand_tensor<double>({2, 1, 3, 3}, rng, -3.0, 3.0));
    auto probe_s = rand_tensor<double>({2, 1, 3, 3}, rng);
    fd_check({&xs}, [&](Tape<double>& tp) { return ops::weighted_sum(tp, ops::sigmoid(tp, tp.param(xs)), probe_s); });

    Parameter<double> xm("xm", rand_tensor<double>({2, 4, 3, 3}, rng, -2.0, 2.0));
    auto probe_m = rand_tensor<double>({2, 4, 3, 3}, rng);
    fd_check({&xm}, [&](Tape<double>& tp) {
        return ops::weighted_sum(tp, ops::softmax_channels(tp, tp.param(xm)), probe_m);
    });
}
