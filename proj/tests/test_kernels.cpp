#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "capsnet/kernels.hpp"

using namespace capsnet;

namespace {

Tensor<double> random_tensor(const Shape& shape, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1, 1);
    Tensor<double> t(shape);
    for (auto& v : t.storage()) v = u(rng);
    return t;
}

// Direct cross-correlation with explicit zero padding.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& k, const Tensor<double>& b,
                          std::size_t stride, std::size_t pad_top, std::size_t pad_left, std::size_t oh,
                          std::size_t ow) {
    const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2), F = k.dim(0), kh = k.dim(2), kw = k.dim(3);
    Tensor<double> out(Shape{F, oh, ow});
    for (std::size_t f = 0; f < F; ++f)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xx = 0; xx < ow; ++xx) {
                double s = b[f];
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t i = 0; i < kh; ++i)
                        for (std::size_t j = 0; j < kw; ++j) {
                            const long iy = static_cast<long>(y * stride + i) - static_cast<long>(pad_top);
                            const long ix = static_cast<long>(xx * stride + j) - static_cast<long>(pad_left);
                            if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
                            s += x(c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) * k(f, c, i, j);
                        }
                out(f, y, xx) = s;
            }
    return out;
}

}  // namespace

TEST(Conv2d, OnesGiveFour) {
    Tensor<double> x(Shape{1, 3, 3}, 1.0), k(Shape{1, 1, 2, 2}, 1.0), b(Shape{1}, 0.0);
    const auto y = conv2d(x, k, b, 1, Padding::valid);
    ASSERT_EQ(y.shape(), (Shape{1, 2, 2}));
    for (double v : y.data()) EXPECT_EQ(v, 4.0);
}

TEST(Conv2d, IdentityKernel) {
    std::mt19937_64 rng(1);
    const auto x = random_tensor({1, 4, 5}, rng);
    const auto y = conv2d(x, Tensor<double>(Shape{1, 1, 1, 1}, 1.0), Tensor<double>(Shape{1}), 1, Padding::valid);
    EXPECT_EQ(y, x);
}

TEST(Conv2d, MatchesNaiveOracleValid) {
    std::mt19937_64 rng(2);
    const auto x = random_tensor({2, 5, 5}, rng), k = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({3}, rng);
    const auto y = conv2d(x, k, b, 1, Padding::valid);
    const auto ref = naive_conv(x, k, b, 1, 0, 0, 3, 3);
    ASSERT_EQ(y.shape(), ref.shape());
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
}

TEST(Conv2d, MatchesNaiveOracleStridedAndSame) {
    std::mt19937_64 rng(3);
    for (std::size_t stride : {1u, 2u, 3u})
        for (std::size_t side : {5u, 6u, 7u}) {
            const auto x = random_tensor({2, side, side}, rng), k = random_tensor({2, 2, 4, 3}, rng),
                       b = random_tensor({2}, rng);
            // valid
            {
                const std::size_t oh = (side - 4) / stride + 1, ow = (side - 3) / stride + 1;
                const auto y = conv2d(x, k, b, stride, Padding::valid);
                const auto ref = naive_conv(x, k, b, stride, 0, 0, oh, ow);
                ASSERT_EQ(y.shape(), ref.shape());
                for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
            }
            // same: out = ceil(in/stride), symmetric pad with the extra pixel bottom/right
            {
                const std::size_t o = (side + stride - 1) / stride;
                const auto pad = [&](std::size_t kk) {
                    const long need = static_cast<long>((o - 1) * stride + kk) - static_cast<long>(side);
                    return static_cast<std::size_t>(std::max(0L, need)) / 2;
                };
                const auto y = conv2d(x, k, b, stride, Padding::same);
                const auto ref = naive_conv(x, k, b, stride, pad(4), pad(3), o, o);
                ASSERT_EQ(y.shape(), ref.shape());
                for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
            }
        }
}

TEST(Conv2d, SamePaddingExtraPixelGoesBottomRight) {
    const auto g = conv_axis(4, 2, 1, Padding::same);
    EXPECT_EQ(g.out, 4u);
    EXPECT_EQ(g.pad_total, 1u);
    EXPECT_EQ(g.pad_before, 0u);
    const auto g3 = conv_axis(5, 4, 1, Padding::same);
    EXPECT_EQ(g3.pad_total, 3u);
    EXPECT_EQ(g3.pad_before, 1u);
}

TEST(Conv2d, ShapeErrors) {
    Tensor<double> x(Shape{2, 5, 5}), b(Shape{3});
    EXPECT_THROW(conv2d(x, Tensor<double>(Shape{3, 1, 3, 3}), b, 1, Padding::valid), ShapeError);
    EXPECT_THROW(conv2d(x, Tensor<double>(Shape{3, 2, 6, 6}), b, 1, Padding::valid), ShapeError);
    EXPECT_THROW(conv2d(x, Tensor<double>(Shape{3, 2, 3, 3}), Tensor<double>(Shape{2}), 1, Padding::valid), ShapeError);
}

TEST(Maxpool, TwoByTwo) {
    Tensor<double> x(Shape{1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    const auto r = maxpool2(x);
    ASSERT_EQ(r.output.shape(), (Shape{1, 1, 1}));
    EXPECT_EQ(r.output[0], 4.0);
    EXPECT_EQ(r.argmax[0], 3u);  // (1,1)
}

TEST(Maxpool, TiesGoToFirstInRowMajorOrder) {
    Tensor<double> x(Shape{1, 4, 4}, 7.0);
    const auto r = maxpool2(x);
    for (double v : r.output.data()) EXPECT_EQ(v, 7.0);
    EXPECT_EQ(r.argmax, (std::vector<std::size_t>{0, 2, 8, 10}));
}

TEST(Maxpool, MatchesWindowScan) {
    std::mt19937_64 rng(4);
    const auto x = random_tensor({2, 4, 6}, rng);
    const auto r = maxpool2(x);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t y = 0; y < 2; ++y)
            for (std::size_t xx = 0; xx < 3; ++xx) {
                double best = -INFINITY;
                for (std::size_t i = 0; i < 2; ++i)
                    for (std::size_t j = 0; j < 2; ++j) best = std::max(best, x(c, 2 * y + i, 2 * xx + j));
                EXPECT_EQ(r.output(c, y, xx), best);
                EXPECT_EQ(x[r.argmax[(c * 2 + y) * 3 + xx]], best);
            }
}

TEST(Maxpool, OddSideIsShapeError) {
    EXPECT_THROW(maxpool2(Tensor<double>(Shape{1, 3, 4})), ShapeError);
    EXPECT_THROW(maxpool2(Tensor<double>(Shape{1, 4, 5})), ShapeError);
}

TEST(Dense, IdentityAndBias) {
    std::mt19937_64 rng(5);
    const auto x = random_tensor({4}, rng);
    Tensor<double> I(Shape{4, 4});
    for (std::size_t i = 0; i < 4; ++i) I(i, i) = 1;
    EXPECT_EQ(dense(x, I, Tensor<double>(Shape{4})), x);
    const auto b = random_tensor({3}, rng);
    EXPECT_EQ(dense(x, Tensor<double>(Shape{3, 4}), b), b);
}

TEST(Dense, MatchesNaiveMatvec) {
    std::mt19937_64 rng(6);
    const auto x = random_tensor({4}, rng), W = random_tensor({3, 4}, rng), b = random_tensor({3}, rng);
    const auto y = dense(x, W, b);
    for (std::size_t i = 0; i < 3; ++i) {
        double s = b[i];
        for (std::size_t j = 0; j < 4; ++j) s += W(i, j) * x[j];
        EXPECT_NEAR(y[i], s, 1e-12);
    }
    EXPECT_THROW(dense(x, random_tensor({3, 5}, rng), b), ShapeError);
}

TEST(Activation, Values) {
    Tensor<double> x(Shape{3}, std::vector<double>{-1, 0, 2});
    EXPECT_EQ(apply_activation(x, Activation::relu), (Tensor<double>(Shape{3}, std::vector<double>{0, 0, 2})));
    EXPECT_EQ(apply_activation(Tensor<double>::scalar(0.0), Activation::sigmoid)[0], 0.5);
    EXPECT_EQ(apply_activation(x, Activation::identity), x);
}

TEST(Activation, TanhMatchesExponentialForm) {
    std::mt19937_64 rng(7);
    const auto x = random_tensor({50}, rng);
    const auto y = apply_activation(x, Activation::tanh);
    for (std::size_t i = 0; i < x.size(); ++i) {
        // (e^{2x} - 1) / (e^{2x} + 1) evaluated in long double
        const long double e = std::exp(2.0L * static_cast<long double>(x[i]));
        EXPECT_NEAR(y[i], static_cast<double>((e - 1) / (e + 1)), 1e-12);
    }
}

TEST(Softmax, UniformAndAnalytic) {
    const auto u = softmax(Tensor<double>(Shape{5}));
    for (double v : u.data()) EXPECT_NEAR(v, 0.2, 1e-15);
    const auto p = softmax(Tensor<double>(Shape{2}, std::vector<double>{0, std::log(3.0)}));
    EXPECT_NEAR(p[0], 0.25, 1e-12);
    EXPECT_NEAR(p[1], 0.75, 1e-12);
}

TEST(Softmax, ShiftInvariantAndNormalizedPerRow) {
    std::mt19937_64 rng(8);
    auto x = random_tensor({4, 6}, rng);
    for (auto& v : x.storage()) v *= 30;
    auto shifted = x;
    for (auto& v : shifted.storage()) v += 123.0;
    const auto a = softmax(x), b = softmax(shifted);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
    for (std::size_t r = 0; r < 4; ++r) {
        double s = 0;
        for (std::size_t c = 0; c < 6; ++c) {
            EXPECT_GT(a(r, c), 0.0);
            s += a(r, c);
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
}

TEST(Softmax, LargeLogitsStayFinite) {
    const auto p = softmax(Tensor<float>(Shape{3}, std::vector<float>{1000.f, 999.f, -1000.f}));
    EXPECT_TRUE(p.all_finite());
    EXPECT_NEAR(p[0] + p[1] + p[2], 1.0f, 1e-6f);
}
