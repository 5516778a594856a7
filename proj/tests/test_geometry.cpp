#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cosal/geometry.hpp"
#include "oracles.hpp"

using namespace cosal;

namespace {

Box random_box(std::mt19937_64& rng, double extent = 64.0) {
    std::uniform_real_distribution<double> pos(0, extent), size(2, extent / 2);
    return {pos(rng), pos(rng), size(rng), size(rng)};
}

}  // namespace

TEST(Jaccard, IdentityAndDisjoint) {
    const Box a{5, 5, 4, 2};
    EXPECT_EQ(jaccard(a, a), 1.0);
    EXPECT_EQ(jaccard(a, Box{50, 50, 4, 2}), 0.0);
}

TEST(Jaccard, HandComputedOverlap) {
    EXPECT_NEAR(jaccard(Box::from_corners(0, 0, 2, 2), Box::from_corners(1, 1, 3, 3)), 1.0 / 7.0, 1e-15);
}

TEST(Jaccard, SymmetricAndBounded) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 1000; ++i) {
        const Box a = random_box(rng), b = random_box(rng);
        const double v = jaccard(a, b);
        EXPECT_EQ(v, jaccard(b, a));
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Anchors, CountIsNinePerCell) {
    const auto g = generate_anchors(64, 8, AnchorSpec{});
    EXPECT_EQ(g.anchors.size(), 576u);
    EXPECT_EQ(g.stride, 8.0);
}

TEST(Anchors, ScaleAndRatioGeometry) {
    const auto g = generate_anchors(512, 512, 1, 1, {128, 256, 512}, {1.0, 2.0, 0.5});
    EXPECT_DOUBLE_EQ(g.anchors[0].w, 128.0);
    EXPECT_DOUBLE_EQ(g.anchors[0].h, 128.0);
    EXPECT_DOUBLE_EQ(g.anchors[1].w, 128.0 / std::sqrt(2.0));
    EXPECT_DOUBLE_EQ(g.anchors[1].h, 128.0 * std::sqrt(2.0));
    EXPECT_NEAR(g.anchors[1].area(), 128.0 * 128.0, 1e-9);
    EXPECT_DOUBLE_EQ(g.anchors[8].w, 512.0 * std::sqrt(2.0));
}

TEST(Anchors, CentresOnStrideLattice) {
    const auto g = generate_anchors(64, 8, AnchorSpec{});
    for (std::size_t i = 0; i < g.anchors.size(); ++i) {
        const std::size_t cell = i / 9;
        EXPECT_EQ(g.anchors[i].cx, (double(cell % 8) + 0.5) * 8.0);
        EXPECT_EQ(g.anchors[i].cy, (double(cell / 8) + 0.5) * 8.0);
    }
}

TEST(Anchors, RejectsNonIntegralStride) {
    EXPECT_THROW(generate_anchors(64, 64, 6, 6, {16}, {1.0}), std::invalid_argument);
}

TEST(Offsets, IdentityEncodesToZero) {
    const Box d{10, 10, 4, 4};
    EXPECT_EQ(encode(d, d), (OffsetVec{0, 0, 0, 0}));
}

TEST(Offsets, DirectSubstitution) {
    const OffsetVec t = encode(Box{12, 10, 8, 4}, Box{10, 10, 4, 4});
    EXPECT_DOUBLE_EQ(t.tx, 0.5);
    EXPECT_DOUBLE_EQ(t.ty, 0.0);
    EXPECT_DOUBLE_EQ(t.tw, std::log(2.0));
    EXPECT_DOUBLE_EQ(t.th, 0.0);
}

TEST(Offsets, RoundtripThousandPairs) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> off(-2, 2);
    for (int i = 0; i < 1000; ++i) {
        const Box g = random_box(rng), d = random_box(rng);
        const Box back = decode(encode(g, d), d);
        EXPECT_NEAR(back.cx, g.cx, 1e-9);
        EXPECT_NEAR(back.cy, g.cy, 1e-9);
        EXPECT_NEAR(back.w, g.w, 1e-9);
        EXPECT_NEAR(back.h, g.h, 1e-9);
        const OffsetVec t{off(rng), off(rng), off(rng), off(rng)};
        const OffsetVec t2 = encode(decode(t, d), d);
        EXPECT_NEAR(t2.tx, t.tx, 1e-9);
        EXPECT_NEAR(t2.ty, t.ty, 1e-9);
        EXPECT_NEAR(t2.tw, t.tw, 1e-9);
        EXPECT_NEAR(t2.th, t.th, 1e-9);
    }
}

TEST(Match, ExactAnchorIsPositive) {
    const std::vector<Box> anchors{{8, 8, 16, 16}, {40, 40, 16, 16}};
    const auto m = match_anchors(anchors, {Box{40, 40, 16, 16}});
    EXPECT_EQ(m.labels[1], AnchorLabel::positive);
    EXPECT_EQ(m.gt_index[1], 0);
    EXPECT_EQ(m.best_iou[1], 1.0);
    EXPECT_EQ(m.labels[0], AnchorLabel::negative);
}

TEST(Match, BestAnchorForcedPositiveBelowThreshold) {
    const std::vector<Box> anchors{Box::from_corners(0, 0, 10, 10), Box::from_corners(40, 40, 50, 50)};
    const Box gt = Box::from_corners(0, 0, 10, 3);  // IoU 0.3
    const auto m = match_anchors(anchors, {gt});
    EXPECT_NEAR(m.best_iou[0], 0.3, 1e-12);
    EXPECT_EQ(m.labels[0], AnchorLabel::positive);
}

TEST(Match, IgnoreBandBetweenThresholds) {
    const std::vector<Box> anchors{Box::from_corners(0, 0, 10, 10), Box::from_corners(0, 0, 10, 4),
                                   Box::from_corners(0, 0, 10, 1)};
    const auto m = match_anchors(anchors, {Box::from_corners(0, 0, 10, 10)});
    EXPECT_EQ(m.labels[0], AnchorLabel::positive);
    EXPECT_EQ(m.labels[1], AnchorLabel::ignore);  // 0.4
    EXPECT_EQ(m.labels[2], AnchorLabel::negative);  // 0.1
}

TEST(Match, RejectsEmptyInputs) {
    EXPECT_THROW(match_anchors({}, {Box{1, 1, 1, 1}}), std::invalid_argument);
    EXPECT_THROW(match_anchors({Box{1, 1, 1, 1}}, {}), std::invalid_argument);
}

TEST(Match, AgreesWithExhaustiveMatcherOnFiftyScenes) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<int> n_anchor(5, 100), n_gt(1, 5);
        std::vector<Box> anchors(std::size_t(n_anchor(rng))), gts(std::size_t(n_gt(rng)));
        for (auto& a : anchors) a = random_box(rng);
        for (auto& g : gts) g = random_box(rng);
        const auto got = match_anchors(anchors, gts, 0.5, 0.3);
        const auto want = oracle::match(anchors, gts, 0.5, 0.3);
        for (std::size_t a = 0; a < anchors.size(); ++a) {
            EXPECT_EQ(int(got.labels[a]), want.label[a]) << "seed " << seed << " anchor " << a;
            if (want.label[a] == 1) {
                EXPECT_EQ(got.gt_index[a], want.gt[a]) << "seed " << seed << " anchor " << a;
            }
        }
        for (std::size_t g = 0; g < gts.size(); ++g) {
            bool has = false;
            for (std::size_t a = 0; a < anchors.size(); ++a)
                has |= got.labels[a] == AnchorLabel::positive && got.gt_index[a] == int(g);
            EXPECT_TRUE(has) << "seed " << seed << " gt " << g;
        }
    }
}

TEST(Nms, SingleBoxKept) {
    EXPECT_EQ(nms({Box{1, 1, 2, 2}}, {0.3}, 0.5), (std::vector<std::size_t>{0}));
    EXPECT_TRUE(nms({}, {}, 0.5).empty());
}

TEST(Nms, IdenticalBoxesKeepHigherScore) {
    const Box b{5, 5, 4, 4};
    EXPECT_EQ(nms({b, b}, {0.8, 0.9}, 0.5), (std::vector<std::size_t>{1}));
}

TEST(Nms, TiesBreakByLowerIndex) {
    const Box b{5, 5, 4, 4};
    EXPECT_EQ(nms({b, b, b}, {0.5, 0.5, 0.5}, 0.5), (std::vector<std::size_t>{0}));
}

TEST(Nms, AgreesWithOracleOverHundredSeeds) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<int> count(0, 20);
        std::uniform_real_distribution<double> score(0, 1), thr(0.1, 0.9);
        const std::size_t n = std::size_t(count(rng));
        std::vector<Box> boxes(n);
        std::vector<double> scores(n);
        for (std::size_t i = 0; i < n; ++i) {
            boxes[i] = random_box(rng, 32.0);
            // coarse scores produce ties
            scores[i] = std::round(score(rng) * 8) / 8;
        }
        const double t = thr(rng);
        const auto kept = nms(boxes, scores, t);
        EXPECT_EQ(kept, oracle::nms(boxes, scores, t)) << "seed " << seed;
        for (std::size_t i = 0; i < kept.size(); ++i)
            for (std::size_t j = i + 1; j < kept.size(); ++j) {
                EXPECT_LE(jaccard(boxes[kept[i]], boxes[kept[j]]), t);
                EXPECT_GE(scores[kept[i]], scores[kept[j]]);
            }
    }
}

TEST(Clip, StaysInsideImage) {
    const Box c = clip_to(Box::from_corners(-5, -5, 10, 70), 64, 64);
    EXPECT_EQ(c.x1(), 0.0);
    EXPECT_EQ(c.y1(), 0.0);
    EXPECT_EQ(c.y2(), 64.0);
}
