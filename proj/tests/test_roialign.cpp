#include <gtest/gtest.h>

#include <random>

#include "checks.hpp"
#include "cosal/roialign.hpp"
#include "oracles.hpp"

using namespace cosal;

namespace {

Tensor random_map(std::mt19937_64& rng, std::size_t c = 1, std::size_t side = 4) {
    std::uniform_real_distribution<double> d(-1, 1);
    Tensor t({c, side, side});
    for (auto& v : t.values()) v = d(rng);
    return t;
}

Box random_inside_box(std::mt19937_64& rng, double side = 4.0) {
    std::uniform_real_distribution<double> u(0, side);
    double x1 = u(rng), x2 = u(rng), y1 = u(rng), y2 = u(rng);
    if (x1 > x2) std::swap(x1, x2);
    if (y1 > y2) std::swap(y1, y2);
    return Box::from_corners(x1, y1, x2 + 0.05, y2 + 0.05);
}

}  // namespace

TEST(RoiAlign, ConstantMapGivesConstantOutput) {
    const Tensor f({3, 6, 6}, 2.5);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 100; ++i) {
        const Tensor out = roi_align(f, random_inside_box(rng, 6.0));
        EXPECT_EQ(out.shape(), (Shape{3, 7, 7}));
        for (double v : out.values()) EXPECT_EQ(v, 2.5);
    }
}

TEST(RoiAlign, SingleSampleAtCellCentreReadsTheCell) {
    std::mt19937_64 rng(2);
    const Tensor f = random_map(rng);
    RoiSpec spec;
    spec.bins_h = spec.bins_w = 1;
    spec.samples_h = spec.samples_w = 1;
    const Tensor out = roi_align(f, Box{2.5, 1.5, 1.0, 1.0}, spec);
    EXPECT_EQ(out[0], f.at(0, 1, 2));
}

TEST(RoiAlign, MatchesScalarOracleOnHundredSeeds) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(seed);
        const Tensor f = random_map(rng);
        const Box box = random_inside_box(rng);
        RoiSpec spec;
        spec.bins_h = spec.bins_w = 2;
        const Tensor got = roi_align(f, box, spec);
        const Tensor want = oracle::roi_align(f, box, 2, 2);
        for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-6) << "seed " << seed;
        spec.aggregation = RoiAggregation::max;
        const Tensor got_max = roi_align(f, box, spec);
        const Tensor want_max = oracle::roi_align(f, box, 2, 2, true);
        for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got_max[i], want_max[i], 1e-6) << "seed " << seed;
    }
}

TEST(RoiAlign, DefaultSevenBinsMatchOracle) {
    std::mt19937_64 rng(5);
    const Tensor f = random_map(rng, 2, 8);
    const Box box = Box::from_corners(0.7, 1.2, 6.9, 7.5);
    const Tensor got = roi_align(f, box);
    const Tensor want = oracle::roi_align(f, box, 7, 2);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(RoiAlign, OutsideSamplesReadZero) {
    const Tensor f({1, 4, 4}, 1.0);
    RoiSpec spec;
    spec.bins_h = spec.bins_w = 1;
    spec.samples_h = spec.samples_w = 1;
    EXPECT_EQ(roi_align(f, Box{-3, 2, 1, 1}, spec)[0], 0.0);
}

TEST(RoiAlign, AverageBoundedByFeatureRange) {
    std::mt19937_64 rng(6);
    for (int i = 0; i < 50; ++i) {
        const Tensor f = random_map(rng);
        const auto [lo, hi] = std::minmax_element(f.values().begin(), f.values().end());
        const Tensor out = roi_align(f, random_inside_box(rng));
        for (double v : out.values()) {
            EXPECT_GE(v, *lo - 1e-12);
            EXPECT_LE(v, *hi + 1e-12);
        }
    }
}

TEST(RoiAlign, TranslationByBinMultipleOnPeriodicMap) {
    // period-2 checkerboard; shifting by 2 cells leaves the pattern unchanged
    Tensor f({1, 12, 12});
    for (std::size_t y = 0; y < 12; ++y)
        for (std::size_t x = 0; x < 12; ++x) f.at(0, y, x) = double((x + y) % 2);
    RoiSpec spec;
    spec.bins_h = spec.bins_w = 2;
    const Box box = Box::from_corners(2.3, 2.1, 6.3, 6.1);  // bin size 2
    const Box moved{box.cx + 2, box.cy + 2, box.w, box.h};
    const Tensor a = roi_align(f, box, spec), b = roi_align(f, moved, spec);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(RoiAlign, RejectsDegenerateBox) {
    const Tensor f({1, 4, 4});
    EXPECT_THROW(roi_align(f, Box{2, 2, 0, 1}), std::invalid_argument);
    EXPECT_THROW(roi_align(f, Box{2, 2, 1, -1}), std::invalid_argument);
}

TEST(RoiAlignBackward, ZeroUpstreamGivesZero) {
    const Tensor g = roi_align_backward(Shape{1, 4, 4}, Box{2, 2, 2, 2}, RoiSpec{}, Tensor({1, 7, 7}));
    for (double v : g.values()) EXPECT_EQ(v, 0.0);
}

TEST(RoiAlignBackward, MassConservationInsideMap) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> d(-1, 1);
    for (int i = 0; i < 50; ++i) {
        Tensor up({1, 7, 7});
        for (auto& v : up.values()) v = d(rng);
        const Tensor g = roi_align_backward(Shape{1, 4, 4}, random_inside_box(rng), RoiSpec{}, up);
        double gs = 0, us = 0;
        for (double v : g.values()) gs += v;
        for (double v : up.values()) us += v;
        EXPECT_NEAR(gs, us / 1.0, 1e-12);
    }
}

TEST(RoiAlignBackward, FiniteDifferencesTwentySeeds) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        EXPECT_LE(checks::roi_align_error(seed, RoiAggregation::average), 1e-4) << seed;
        EXPECT_LE(checks::roi_align_error(seed, RoiAggregation::max), 1e-4) << seed;
    }
}
