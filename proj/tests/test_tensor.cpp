#include <gtest/gtest.h>

#include "capsnet/tensor.hpp"

using namespace capsnet;

TEST(Tensor, ShapeAndSize) {
    Tensor<float> t(Shape{2, 3, 4}, 1.5f);
    EXPECT_EQ(t.rank(), 3u);
    EXPECT_EQ(t.size(), 24u);
    EXPECT_EQ(t.dim(1), 3u);
    for (float v : t.data()) EXPECT_EQ(v, 1.5f);
}

TEST(Tensor, RowMajorIndexing) {
    Tensor<double> t(Shape{2, 3}, std::vector<double>{0, 1, 2, 3, 4, 5});
    EXPECT_EQ(t(1, 0), 3.0);
    EXPECT_EQ(t(0, 2), 2.0);
    Tensor<double> u(Shape{2, 2, 2, 2});
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = static_cast<double>(i);
    EXPECT_EQ(u(1, 0, 1, 1), 11.0);
}

TEST(Tensor, RejectsZeroDimension) {
    EXPECT_THROW(Tensor<float>(Shape{3, 0}), ShapeError);
}

TEST(Tensor, RejectsDataLengthMismatch) {
    EXPECT_THROW(Tensor<float>(Shape{2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
}

TEST(Tensor, ReshapeKeepsData) {
    Tensor<float> t(Shape{2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
    const auto r = t.reshaped(Shape{3, 2});
    EXPECT_EQ(r(2, 1), 6.0f);
    EXPECT_THROW(t.reshape(Shape{4, 2}), ShapeError);
}

TEST(Tensor, CastAndFinite) {
    Tensor<double> t(Shape{3}, std::vector<double>{0.5, -1.25, 2.0});
    const auto f = t.cast<float>();
    EXPECT_EQ(f[1], -1.25f);
    EXPECT_TRUE(t.all_finite());
    t[2] = std::nan("");
    EXPECT_FALSE(t.all_finite());
}

TEST(Tensor, ScalarHasShapeOne) {
    const auto s = Tensor<double>::scalar(4.0);
    EXPECT_EQ(s.shape(), Shape{1});
    EXPECT_EQ(s[0], 4.0);
}
