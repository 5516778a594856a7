#include <gtest/gtest.h>

#include <random>

#include "cosal/metrics.hpp"
#include "oracles.hpp"

using namespace cosal;

namespace {

struct Pair {
    std::vector<float> p;
    std::vector<std::uint8_t> y;
};

Pair random_pair(std::uint64_t seed, std::size_t n = 64) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> level(0, 255);
    std::bernoulli_distribution coin(0.4);
    Pair out;
    for (std::size_t i = 0; i < n; ++i) {
        out.p.push_back(float(level(rng)) / 255.0f);  // hits the curve thresholds exactly
        out.y.push_back(coin(rng));
    }
    return out;
}

double mae_of(const Pair& d) { return mae<float>(d.p, d.y); }

}  // namespace

TEST(Mae, Examples) {
    const std::vector<std::uint8_t> y{0, 1, 1, 0};
    EXPECT_EQ(mae<float>(std::vector<float>{0, 1, 1, 0}, y), 0.0);
    EXPECT_EQ(mae<float>(std::vector<float>(4, 0.5f), y), 0.5);
    EXPECT_THROW(mae<float>(std::vector<float>(3, 0.5f), y), ShapeError);
}

TEST(Pr, Examples) {
    const std::vector<std::uint8_t> y{0, 1, 1, 0};
    const std::vector<float> same{0, 1, 1, 0}, inverted{1, 0, 0, 1};
    auto pr = pr_at_threshold<float>(same, y, 0.5);
    EXPECT_EQ(pr.precision, 1.0);
    EXPECT_EQ(pr.recall, 1.0);
    pr = pr_at_threshold<float>(inverted, y, 0.5);
    EXPECT_EQ(pr.precision, 0.0);
    EXPECT_EQ(pr.recall, 0.0);
}

TEST(Pr, EmptyConventions) {
    const std::vector<std::uint8_t> none(4, 0);
    const auto pr = pr_at_threshold<float>(std::vector<float>(4, 0.0f), none, 0.5);
    EXPECT_EQ(pr.precision, 1.0);
    EXPECT_EQ(pr.recall, 1.0);
}

TEST(Pr, StrictThreshold) {
    const std::vector<std::uint8_t> y{1};
    EXPECT_EQ(pr_at_threshold<float>(std::vector<float>{0.5f}, y, 0.5).recall, 0.0);
}

TEST(FMeasure, Examples) {
    const std::vector<std::uint8_t> y{0, 1, 0, 0, 0, 1, 0, 0};
    const std::vector<float> p(y.begin(), y.end());
    EXPECT_NEAR(f_measure_adaptive<float>(p, y), 1.0, 1e-15);
    EXPECT_EQ(f_measure_adaptive<float>(std::vector<float>(8, 0.0f), y), 0.0);
}

TEST(Oracle, RandomMapsHundredSeeds) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Pair d = random_pair(seed);
        EXPECT_EQ(mae_of(d), oracle::mae(d.p, d.y));
        EXPECT_EQ(f_measure_adaptive<float>(d.p, d.y), oracle::f_adaptive(d.p, d.y));
        for (double t : {0.0, 0.3, 0.5, 0.77}) {
            const auto c = oracle::confusion(d.p, d.y, t);
            const auto pr = pr_at_threshold<float>(d.p, d.y, t);
            EXPECT_EQ(pr.precision, oracle::precision(c));
            EXPECT_EQ(pr.recall, oracle::recall(c));
        }
        const auto curve = pr_curve<float>(d.p, d.y);
        ASSERT_EQ(curve.size(), 256u);
        for (std::size_t k = 0; k < curve.size(); ++k) {
            const auto c = oracle::confusion(d.p, d.y, double(k) / 255.0);
            EXPECT_EQ(curve[k].threshold, double(k) / 255.0);
            EXPECT_EQ(curve[k].precision, oracle::precision(c)) << seed << ' ' << k;
            EXPECT_EQ(curve[k].recall, oracle::recall(c)) << seed << ' ' << k;
        }
    }
}

TEST(Properties, RecallMonotoneAndThresholdsIncreasing) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Pair d = random_pair(seed + 500);
        const auto curve = pr_curve<float>(d.p, d.y);
        for (std::size_t k = 1; k < curve.size(); ++k) {
            EXPECT_LE(curve[k].recall, curve[k - 1].recall);
            EXPECT_GT(curve[k].threshold, curve[k - 1].threshold);
        }
    }
}

TEST(Properties, ComplementSymmetry) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Pair d = random_pair(seed + 900), c = d;
        for (auto& v : c.p) v = 1.0f - v;
        for (auto& v : c.y) v = 1 - v;
        EXPECT_NEAR(mae_of(d), mae_of(c), 1e-7);
    }
}

TEST(Dataset, SingleImageEqualsPerImage) {
    const Pair d = random_pair(3);
    const auto r = evaluate_dataset({d.p}, {d.y});
    EXPECT_EQ(r.images, 1u);
    EXPECT_EQ(r.mae, mae_of(d));
    EXPECT_EQ(r.f_measure, f_measure_adaptive<float>(d.p, d.y));
}

TEST(Dataset, DuplicatedImageUnchanged) {
    const Pair d = random_pair(4);
    const auto one = evaluate_dataset({d.p}, {d.y}), two = evaluate_dataset({d.p, d.p}, {d.y, d.y});
    EXPECT_DOUBLE_EQ(one.mae, two.mae);
    EXPECT_DOUBLE_EQ(one.f_measure, two.f_measure);
    EXPECT_DOUBLE_EQ(one.precision, two.precision);
    for (std::size_t k = 0; k < 256; ++k) EXPECT_DOUBLE_EQ(one.pr_curve[k].recall, two.pr_curve[k].recall);
}

TEST(Dataset, TwoImageArithmeticMean) {
    // Image A: perfect (T = 0.5); image B: P = 0.5 everywhere (T = 1).
    const std::vector<float> pa{1, 0, 0, 0}, pb{0.5f, 0.5f, 0.5f, 0.5f};
    const std::vector<std::uint8_t> y{1, 0, 0, 0};
    const auto r = evaluate_dataset({pa, pb}, {y, y});
    EXPECT_DOUBLE_EQ(r.mae, (0.0 + 0.5) / 2);
    // B: T = min(1, 2 * 0.5) = 1, nothing exceeds it, precision 1 and recall 0 give F 0.
    EXPECT_DOUBLE_EQ(r.precision, (1.0 + 1.0) / 2);
    EXPECT_DOUBLE_EQ(r.recall, (1.0 + 0.0) / 2);
    EXPECT_DOUBLE_EQ(r.f_measure, (1.0 + 0.0) / 2);
}

TEST(Dataset, CountMismatchThrows) {
    EXPECT_THROW(evaluate_dataset({{0.5f}}, {}), std::invalid_argument);
}

TEST(Report, JsonFieldNames) {
    const Pair d = random_pair(5);
    const auto j = to_json(evaluate_dataset({d.p}, {d.y}));
    for (const char* key : {"mae", "precision", "recall", "f_measure", "pr_curve"}) EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(j["pr_curve"].size(), 256u);
    EXPECT_TRUE(j["pr_curve"][0].contains("threshold"));
    const std::string text = to_text(evaluate_dataset({d.p}, {d.y}));
    EXPECT_NE(text.find("f_measure"), std::string::npos);
}
