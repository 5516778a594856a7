#pragma once

// Saliency evaluation: MAE, precision/recall at a threshold, the adaptive
// threshold F-measure (T = min(1, 2 * mean(P)), beta^2 = 0.3) and PR curves
// over 256 uniform thresholds. A pixel is predicted salient when P > t.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "cosal/tensor.hpp"

namespace cosal {

inline constexpr double kFBetaSquared = 0.3;
inline constexpr std::size_t kPrThresholds = 256;

struct PrPoint {
    double threshold = 0, precision = 0, recall = 0;
};

struct EvalReport {
    double mae = 0, precision = 0, recall = 0, f_measure = 0;
    std::vector<PrPoint> pr_curve;
    std::size_t images = 0;
};

namespace detail {

template <typename T>
void check_pair(std::span<const T> p, std::span<const std::uint8_t> y, const char* what) {
    if (p.size() != y.size() || p.empty()) {
        throw ShapeError(std::string(what) + ": prediction has " + std::to_string(p.size()) + " pixels, mask has " +
                         std::to_string(y.size()));
    }
}

}  // namespace detail

template <typename T>
double mae(std::span<const T> p, std::span<const std::uint8_t> y) {
    detail::check_pair(p, y, "mae");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(double(p[i]) - (y[i] ? 1.0 : 0.0));
    return acc / double(p.size());
}

struct PrecisionRecall {
    double precision = 0, recall = 0;
};

/// Empty prediction: precision 1. Empty ground truth: recall 1.
template <typename T>
PrecisionRecall pr_at_threshold(std::span<const T> p, std::span<const std::uint8_t> y, double t) {
    detail::check_pair(p, y, "pr_at_threshold");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const bool pred = double(p[i]) > t;
        if (pred && y[i]) ++tp;
        else if (pred) ++fp;
        else if (y[i]) ++fn;
    }
    PrecisionRecall out;
    out.precision = tp + fp == 0 ? 1.0 : double(tp) / double(tp + fp);
    out.recall = tp + fn == 0 ? 1.0 : double(tp) / double(tp + fn);
    return out;
}

inline double f_beta(double precision, double recall, double beta2 = kFBetaSquared) {
    const double den = beta2 * precision + recall;
    return den > 0 ? (1.0 + beta2) * precision * recall / den : 0.0;
}

template <typename T>
double adaptive_threshold(std::span<const T> p) {
    double mean = 0.0;
    for (auto v : p) mean += double(v);
    mean /= double(p.size());
    return std::min(1.0, 2.0 * mean);
}

template <typename T>
double f_measure_adaptive(std::span<const T> p, std::span<const std::uint8_t> y) {
    detail::check_pair(p, y, "f_measure_adaptive");
    const auto pr = pr_at_threshold(p, y, adaptive_threshold(p));
    return f_beta(pr.precision, pr.recall);
}

inline double pr_threshold(std::size_t k) { return double(k) / double(kPrThresholds - 1); }

template <typename T>
std::vector<PrPoint> pr_curve(std::span<const T> p, std::span<const std::uint8_t> y) {
    detail::check_pair(p, y, "pr_curve");
    // Histogram the predictions by threshold bucket so the whole curve costs one pass.
    std::vector<std::size_t> pos_above(kPrThresholds + 1, 0), neg_above(kPrThresholds + 1, 0);
    std::size_t total_pos = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        // number of thresholds t_k with p > t_k
        const double v = double(p[i]);
        std::size_t count = 0;
        if (v > 0.0) {
            count = std::min<std::size_t>(kPrThresholds, std::size_t(std::ceil(v * double(kPrThresholds - 1))));
            while (count < kPrThresholds && v > pr_threshold(count)) ++count;
            while (count > 0 && !(v > pr_threshold(count - 1))) --count;
        }
        (y[i] ? pos_above : neg_above)[count] += 1;
        if (y[i]) ++total_pos;
    }
    std::vector<PrPoint> curve(kPrThresholds);
    std::size_t tp = 0, fp = 0;
    for (std::size_t c = kPrThresholds + 1; c-- > 1;) {
        tp += pos_above[c];
        fp += neg_above[c];
        const std::size_t k = c - 1;  // pixels with count >= c exceed t_k
        curve[k].threshold = pr_threshold(k);
        curve[k].precision = tp + fp == 0 ? 1.0 : double(tp) / double(tp + fp);
        curve[k].recall = total_pos == 0 ? 1.0 : double(tp) / double(total_pos);
    }
    return curve;
}

/// Macro average: per-image metrics, then the mean; PR curves averaged pointwise.
inline EvalReport evaluate_dataset(const std::vector<std::vector<float>>& predictions,
                                   const std::vector<std::vector<std::uint8_t>>& truths) {
    if (predictions.size() != truths.size()) {
        throw std::invalid_argument("evaluate_dataset: " + std::to_string(predictions.size()) + " predictions vs " +
                                    std::to_string(truths.size()) + " ground truths");
    }
    EvalReport r;
    r.images = predictions.size();
    r.pr_curve.assign(kPrThresholds, {});
    for (std::size_t k = 0; k < kPrThresholds; ++k) r.pr_curve[k].threshold = pr_threshold(k);
    if (predictions.empty()) return r;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        std::span<const float> p = predictions[i];
        std::span<const std::uint8_t> y = truths[i];
        r.mae += mae(p, y);
        const auto pr = pr_at_threshold(p, y, adaptive_threshold(p));
        r.precision += pr.precision;
        r.recall += pr.recall;
        r.f_measure += f_beta(pr.precision, pr.recall);
        const auto curve = pr_curve(p, y);
        for (std::size_t k = 0; k < kPrThresholds; ++k) {
            r.pr_curve[k].precision += curve[k].precision;
            r.pr_curve[k].recall += curve[k].recall;
        }
    }
    const double n = double(predictions.size());
    r.mae /= n;
    r.precision /= n;
    r.recall /= n;
    r.f_measure /= n;
    for (auto& pt : r.pr_curve) {
        pt.precision /= n;
        pt.recall /= n;
    }
    return r;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["mae"] = r.mae;
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    j["f_measure"] = r.f_measure;
    j["images"] = r.images;
    auto& curve = j["pr_curve"] = nlohmann::ordered_json::array();
    for (const auto& pt : r.pr_curve) curve.push_back({{"threshold", pt.threshold}, {"precision", pt.precision}, {"recall", pt.recall}});
    return j;
}

inline std::string to_text(const EvalReport& r) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(6);
    os << "metric      value\n";
    os << "images      " << r.images << '\n';
    os << "mae         " << r.mae << '\n';
    os << "precision   " << r.precision << '\n';
    os << "recall      " << r.recall << '\n';
    os << "f_measure   " << r.f_measure << '\n';
    return os.str();
}

inline std::string pr_curve_csv(const EvalReport& r) {
    std::ostringstream os;
    os.precision(17);
    os << "threshold,precision,recall\n";
    for (const auto& pt : r.pr_curve) os << pt.threshold << ',' << pt.precision << ',' << pt.recall << '\n';
    return os.str();
}

}  // namespace cosal
