#pragma once

// Triplet construction for the region feature mapping branch.
//
// Positive regions overlap exactly one co-salient ground truth with jaccard
// above `positive_iou`; negative regions stay below `negative_iou` against every
// co-salient box. Offline sampling jitters ground-truth boxes (and distractor
// boxes for negatives) or draws background boxes; online sampling takes RPN
// proposals ranked by their training loss.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "cosal/geometry.hpp"

namespace cosal {

struct SamplingConfig {
    double positive_iou = 0.5;
    double negative_iou = 0.1;
    std::size_t positives = 32;
    std::size_t negatives = 96;
    std::size_t triplets = 128;
    // Region area bounds are [min_side^2, max_side^2] with sides given as
    // fractions of the image side.
    double min_side_fraction = 0.25;
    double max_side_fraction = 1.0;
    double min_aspect = 0.5;
    double max_aspect = 2.0;
    std::size_t draws_per_region = 1000;
    double online_nms_iou = 0.7;
    // A ground truth counts as contained in a region when at least this share
    // of its area lies inside the region.
    double containment = 0.5;
};

struct Triplet {
    Box anchor, positive, negative;
    double weight = 0.0;
    int anchor_gt = -1, positive_gt = -1;
};

struct TripletBatch {
    std::vector<Triplet> triplets;
    std::vector<Box> positives;
    std::vector<int> positive_gt;
    std::vector<Box> negatives;
    std::size_t positive_shortfall = 0;
    std::size_t negative_shortfall = 0;
};

/// Ground truth with the highest jaccard; ties go to the lower index. Returns -1 for no boxes.
inline int matched_gt(const Box& region, const std::vector<Box>& gts) {
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
        const double iou = jaccard(region, gts[g]);
        if (iou > best_iou) {
            best_iou = iou;
            best = static_cast<int>(g);
        }
    }
    return best;
}

inline double max_jaccard(const Box& region, const std::vector<Box>& gts) {
    double m = 0.0;
    for (const auto& g : gts) m = std::max(m, jaccard(region, g));
    return m;
}

inline std::size_t contained_instances(const Box& region, const std::vector<Box>& gts, double containment) {
    std::size_t n = 0;
    for (const auto& g : gts)
        if (intersection_area(region, g) >= containment * g.area()) ++n;
    return n;
}

/// Matched ground-truth index if `region` qualifies as a positive, otherwise nullopt.
inline std::optional<int> positive_gate(const Box& region, const std::vector<Box>& gts, const SamplingConfig& cfg) {
    const int g = matched_gt(region, gts);
    if (g < 0 || !(jaccard(region, gts[std::size_t(g)]) > cfg.positive_iou)) return std::nullopt;
    if (contained_instances(region, gts, cfg.containment) != 1) return std::nullopt;
    if (intersection_area(region, gts[std::size_t(g)]) < cfg.containment * gts[std::size_t(g)].area()) {
        return std::nullopt;
    }
    return g;
}

inline bool negative_gate(const Box& region, const std::vector<Box>& gts, const SamplingConfig& cfg) {
    return max_jaccard(region, gts) < cfg.negative_iou && contained_instances(region, gts, cfg.containment) == 0;
}

/// Product of the anchor's and positive's jaccard with their matched ground truths.
inline double triplet_weight(const Box& anchor, const Box& positive, const std::vector<Box>& gts) {
    const int ga = matched_gt(anchor, gts), gp = matched_gt(positive, gts);
    if (ga < 0 || gp < 0) return 0.0;
    return jaccard(anchor, gts[std::size_t(ga)]) * jaccard(positive, gts[std::size_t(gp)]);
}

namespace detail {

inline bool region_shape_ok(const Box& b, double width, double height, const SamplingConfig& cfg) {
    const double side = std::min(width, height);
    const double amin = std::pow(cfg.min_side_fraction * side, 2), amax = std::pow(cfg.max_side_fraction * side, 2);
    const double aspect = b.h / b.w;
    return b.w > 0 && b.h > 0 && aspect >= cfg.min_aspect && aspect <= cfg.max_aspect && b.area() >= amin &&
           b.area() <= amax && b.x1() >= 0 && b.y1() >= 0 && b.x2() <= width && b.y2() <= height;
}

template <typename Rng>
Box jitter(const Box& b, Rng& rng) {
    std::uniform_real_distribution<double> log_scale(-0.35, 0.35);
    std::uniform_real_distribution<double> shift(-0.2, 0.2);
    const double w = b.w * std::exp(log_scale(rng));
    const double h = b.h * std::exp(log_scale(rng));
    return {b.cx + shift(rng) * b.w, b.cy + shift(rng) * b.h, w, h};
}

template <typename Rng>
Box background_box(double width, double height, const SamplingConfig& cfg, Rng& rng) {
    const double side = std::min(width, height);
    std::uniform_real_distribution<double> log_area(std::log(std::pow(cfg.min_side_fraction * side, 2)),
                                                    std::log(std::pow(cfg.max_side_fraction * side, 2)));
    std::uniform_real_distribution<double> log_aspect(std::log(cfg.min_aspect), std::log(cfg.max_aspect));
    const double area = std::exp(log_area(rng)), aspect = std::exp(log_aspect(rng));
    const double w = std::min(width, std::sqrt(area / aspect)), h = std::min(height, std::sqrt(area * aspect));
    std::uniform_real_distribution<double> ux(w / 2, width - w / 2), uy(h / 2, height - h / 2);
    return {ux(rng), uy(rng), w, h};
}

template <typename Rng>
std::vector<Triplet> draw_triplets(const TripletBatch& batch, const std::vector<Box>& gts, std::size_t count,
                                   Rng& rng) {
    std::vector<Triplet> out;
    if (batch.positives.size() < 2 || batch.negatives.empty()) return out;
    std::uniform_int_distribution<std::size_t> pick_pos(0, batch.positives.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_neg(0, batch.negatives.size() - 1);
    std::size_t guard = 0;
    while (out.size() < count && guard++ < 100 * count) {
        const std::size_t a = pick_pos(rng), p = pick_pos(rng), n = pick_neg(rng);
        if (a == p || batch.positives[a] == batch.positives[p]) continue;
        Triplet t;
        t.anchor = batch.positives[a];
        t.positive = batch.positives[p];
        t.negative = batch.negatives[n];
        t.anchor_gt = batch.positive_gt[a];
        t.positive_gt = batch.positive_gt[p];
        t.weight = jaccard(t.anchor, gts[std::size_t(t.anchor_gt)]) * jaccard(t.positive, gts[std::size_t(t.positive_gt)]);
        out.push_back(t);
    }
    return out;
}

}  // namespace detail

/// Offline strategy: jittered ground truths as positives, background or jittered
/// distractor boxes as negatives, then `cfg.triplets` random triplets. Each
/// requested region gets `cfg.draws_per_region` attempts; misses are reported
/// as shortfall.
template <typename Rng>
TripletBatch offline_triplets(const std::vector<Box>& gts, const std::vector<Box>& distractors, double width,
                              double height, const SamplingConfig& cfg, Rng& rng) {
    TripletBatch batch;
    if (gts.empty()) {
        batch.positive_shortfall = cfg.positives;
        batch.negative_shortfall = cfg.negatives;
        return batch;
    }
    std::uniform_int_distribution<std::size_t> pick_gt(0, gts.size() - 1);
    for (std::size_t i = 0; i < cfg.positives; ++i) {
        bool found = false;
        for (std::size_t draw = 0; draw < cfg.draws_per_region && !found; ++draw) {
            const std::size_t g = pick_gt(rng);
            const Box region = detail::jitter(gts[g], rng);
            if (!detail::region_shape_ok(region, width, height, cfg)) continue;
            const auto matched = positive_gate(region, gts, cfg);
            if (!matched || std::size_t(*matched) != g) continue;
            batch.positives.push_back(region);
            batch.positive_gt.push_back(*matched);
            found = true;
        }
        if (!found) ++batch.positive_shortfall;
    }
    std::bernoulli_distribution use_distractor(distractors.empty() ? 0.0 : 0.5);
    for (std::size_t i = 0; i < cfg.negatives; ++i) {
        bool found = false;
        for (std::size_t draw = 0; draw < cfg.draws_per_region && !found; ++draw) {
            Box region;
            if (use_distractor(rng)) {
                std::uniform_int_distribution<std::size_t> pick(0, distractors.size() - 1);
                region = detail::jitter(distractors[pick(rng)], rng);
            } else {
                region = detail::background_box(width, height, cfg, rng);
            }
            if (!detail::region_shape_ok(region, width, height, cfg) || !negative_gate(region, gts, cfg)) continue;
            batch.negatives.push_back(region);
            found = true;
        }
        if (!found) ++batch.negative_shortfall;
    }
    batch.triplets = detail::draw_triplets(batch, gts, cfg.triplets, rng);
    return batch;
}

/// Online hard example mining over RPN proposals. Proposals are clipped to the
/// image, ranked by descending loss (ties: lower index), thinned with NMS, and
/// gated. Triplets pair positives in loss order (i < j) and cycle through the
/// negatives hardest first, up to `cfg.triplets`.
inline TripletBatch online_triplets(const std::vector<Box>& gts, const std::vector<Box>& proposals,
                                    const std::vector<double>& region_losses, double width, double height,
                                    const SamplingConfig& cfg) {
    if (proposals.size() != region_losses.size()) {
        throw std::invalid_argument("online_triplets: proposals and losses differ in length");
    }
    TripletBatch batch;
    std::vector<Box> candidates;
    std::vector<double> scores;
    for (std::size_t i = 0; i < proposals.size(); ++i) {
        if (!proposals[i].valid()) continue;
        const Box clipped = clip_to(proposals[i], width, height);
        if (clipped.w < 1.0 || clipped.h < 1.0) continue;
        candidates.push_back(clipped);
        scores.push_back(std::isfinite(region_losses[i]) ? region_losses[i] : 0.0);
    }
    for (std::size_t idx : nms(candidates, scores, cfg.online_nms_iou)) {
        const Box& region = candidates[idx];
        if (auto g = positive_gate(region, gts, cfg)) {
            batch.positives.push_back(region);
            batch.positive_gt.push_back(*g);
        } else if (negative_gate(region, gts, cfg)) {
            batch.negatives.push_back(region);
        }
    }
    if (batch.positives.size() < 2 || batch.negatives.empty()) return batch;
    std::size_t next_negative = 0;
    for (std::size_t i = 0; i < batch.positives.size() && batch.triplets.size() < cfg.triplets; ++i) {
        for (std::size_t j = i + 1; j < batch.positives.size() && batch.triplets.size() < cfg.triplets; ++j) {
            if (batch.positives[i] == batch.positives[j]) continue;
            Triplet t;
            t.anchor = batch.positives[i];
            t.positive = batch.positives[j];
            t.negative = batch.negatives[next_negative++ % batch.negatives.size()];
            t.anchor_gt = batch.positive_gt[i];
            t.positive_gt = batch.positive_gt[j];
            t.weight = jaccard(t.anchor, gts[std::size_t(t.anchor_gt)]) *
                       jaccard(t.positive, gts[std::size_t(t.positive_gt)]);
            batch.triplets.push_back(t);
        }
    }
    return batch;
}

}  // namespace cosal
