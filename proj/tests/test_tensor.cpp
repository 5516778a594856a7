#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "cosal/tensor.hpp"

using cosal::Shape;
using cosal::ShapeError;
using cosal::Tensor;

TEST(Tensor, ShapeAndSize) {
    Tensor t({2, 3, 4});
    EXPECT_EQ(t.rank(), 3u);
    EXPECT_EQ(t.size(), 24u);
    EXPECT_EQ(t.extent(1), 3u);
    for (double v : t.values()) EXPECT_EQ(v, 0.0);
}

TEST(Tensor, RejectsMismatchedData) {
    EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
    EXPECT_THROW(Tensor(Shape{0, 2}), ShapeError);
}

TEST(Tensor, ChannelMajorIndexing) {
    Tensor t({2, 2, 3});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = double(i);
    EXPECT_EQ(t.at(1, 0, 2), 8.0);
    EXPECT_EQ(t.at(0, 1, 1), 4.0);
}

TEST(Tensor, ReshapeKeepsData) {
    Tensor t = Tensor::from({1, 2, 3, 4});
    const Tensor r = t.reshaped({2, 2});
    EXPECT_EQ(r.shape(), (Shape{2, 2}));
    EXPECT_EQ(r[3], 4.0);
    EXPECT_THROW(t.reshaped({3}), ShapeError);
}

TEST(Tensor, FiniteCheck) {
    Tensor t = Tensor::from({1, 2});
    EXPECT_TRUE(t.all_finite());
    t[1] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_FALSE(t.all_finite());
}

TEST(Tensor, CastRoundtrip) {
    Tensor t = Tensor::from({0.5, -2.25});
    EXPECT_EQ(t.cast<float>().cast<double>(), t);
}

TEST(Tensor, ShapeErrorNamesBothShapes) {
    try {
        cosal::require_shape({2, 3}, {3, 2}, "layer x");
        FAIL();
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("layer x"), std::string::npos);
        EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[3x2]"), std::string::npos) << msg;
    }
}
