#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace cosal {

/// Axis-aligned box in center form, pixel units.
struct Box {
    double cx = 0, cy = 0, w = 0, h = 0;

    static Box from_corners(double x1, double y1, double x2, double y2) {
        return {(x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1};
    }
    double x1() const { return cx - w / 2.0; }
    double y1() const { return cy - h / 2.0; }
    double x2() const { return cx + w / 2.0; }
    double y2() const { return cy + h / 2.0; }
    double area() const { return w * h; }
    bool valid() const { return w > 0 && h > 0 && std::isfinite(cx) && std::isfinite(cy); }

    Box scaled(double sx, double sy) const { return {cx * sx, cy * sy, w * sx, h * sy}; }

    friend bool operator==(const Box&, const Box&) = default;
};

inline double intersection_area(const Box& a, const Box& b) {
    const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
    const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
    return iw > 0 && ih > 0 ? iw * ih : 0.0;
}

/// Intersection over union.
inline double jaccard(const Box& a, const Box& b) {
    const double inter = intersection_area(a, b);
    if (inter <= 0) return 0.0;
    const double uni = a.area() + b.area() - inter;
    return uni > 0 ? std::min(1.0, inter / uni) : 0.0;
}

inline Box clip_to(const Box& b, double width, double height) {
    const double x1 = std::clamp(b.x1(), 0.0, width), x2 = std::clamp(b.x2(), 0.0, width);
    const double y1 = std::clamp(b.y1(), 0.0, height), y2 = std::clamp(b.y2(), 0.0, height);
    return Box::from_corners(x1, y1, x2, y2);
}

// ---------------------------------------------------------------------------
// Anchors

struct AnchorSpec {
    // Square-root box areas as fractions of the input side; 128/256/512 px at
    // ~512 px inputs correspond to 0.25/0.5/1.0.
    std::vector<double> scales{0.25, 0.5, 1.0};
    // Height / width.
    std::vector<double> ratios{1.0, 2.0, 0.5};

    std::size_t per_cell() const { return scales.size() * ratios.size(); }
};

struct AnchorGrid {
    std::size_t feature_h = 0, feature_w = 0;
    double stride = 0;
    std::vector<double> scales;  // pixels (square root of area)
    std::vector<double> ratios;
    std::vector<Box> anchors;    // index = ((y * feature_w + x) * scales * ratios) + s * ratios + r
};

/// Tiles scales x ratios boxes over every feature cell, centred on the cell.
/// `scales` are absolute side lengths in pixels (box area = scale^2).
inline AnchorGrid generate_anchors(std::size_t image_h, std::size_t image_w, std::size_t feature_h,
                                   std::size_t feature_w, const std::vector<double>& scales,
                                   const std::vector<double>& ratios) {
    if (feature_h == 0 || feature_w == 0 || image_h % feature_h || image_w % feature_w ||
        image_h / feature_h != image_w / feature_w) {
        throw std::invalid_argument("generate_anchors: feature extent " + std::to_string(feature_h) + "x" +
                                    std::to_string(feature_w) + " does not give an integral stride over " +
                                    std::to_string(image_h) + "x" + std::to_string(image_w));
    }
    if (scales.empty() || ratios.empty()) throw std::invalid_argument("generate_anchors: empty scales or ratios");
    AnchorGrid grid;
    grid.feature_h = feature_h;
    grid.feature_w = feature_w;
    grid.stride = double(image_h / feature_h);
    grid.scales = scales;
    grid.ratios = ratios;
    grid.anchors.reserve(feature_h * feature_w * scales.size() * ratios.size());
    for (std::size_t y = 0; y < feature_h; ++y) {
        for (std::size_t x = 0; x < feature_w; ++x) {
            const double cx = (double(x) + 0.5) * grid.stride, cy = (double(y) + 0.5) * grid.stride;
            for (double s : scales) {
                for (double r : ratios) {
                    // w * h = s^2, h / w = r
                    const double w = s / std::sqrt(r);
                    const double h = s * std::sqrt(r);
                    grid.anchors.push_back({cx, cy, w, h});
                }
            }
        }
    }
    return grid;
}

inline AnchorGrid generate_anchors(std::size_t image_side, std::size_t feature_side, const AnchorSpec& spec) {
    std::vector<double> px;
    for (double f : spec.scales) px.push_back(f * double(image_side));
    return generate_anchors(image_side, image_side, feature_side, feature_side, px, spec.ratios);
}

// ---------------------------------------------------------------------------
// Offset encoding

struct OffsetVec {
    double tx = 0, ty = 0, tw = 0, th = 0;
    friend bool operator==(const OffsetVec&, const OffsetVec&) = default;
};

inline OffsetVec encode(const Box& g, const Box& d) {
    return {(g.cx - d.cx) / d.w, (g.cy - d.cy) / d.h, std::log(g.w / d.w), std::log(g.h / d.h)};
}

inline Box decode(const OffsetVec& t, const Box& d) {
    return {t.tx * d.w + d.cx, t.ty * d.h + d.cy, std::exp(t.tw) * d.w, std::exp(t.th) * d.h};
}

// ---------------------------------------------------------------------------
// Matching

enum class AnchorLabel : std::int8_t { negative = 0, positive = 1, ignore = -1 };

struct MatchAssignment {
    std::vector<AnchorLabel> labels;
    std::vector<int> gt_index;     // matched ground truth for positives, -1 otherwise
    std::vector<double> best_iou;  // max jaccard to any ground truth

    std::size_t positives() const {
        return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), AnchorLabel::positive));
    }
    std::size_t negatives() const {
        return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), AnchorLabel::negative));
    }
};

/// Anchors with jaccard > pos_threshold to some ground truth are positive; each
/// ground truth additionally claims its best-overlap anchor (ties: lower anchor
/// index; an anchor already claimed by an earlier ground truth is skipped).
/// Remaining anchors below neg_threshold are negative, the band between is ignored.
inline MatchAssignment match_anchors(const std::vector<Box>& anchors, const std::vector<Box>& gts,
                                     double pos_threshold = 0.5, double neg_threshold = 0.3) {
    if (anchors.empty()) throw std::invalid_argument("match_anchors: no anchors");
    if (gts.empty()) throw std::invalid_argument("match_anchors: no ground-truth boxes");
    if (gts.size() > anchors.size()) throw std::invalid_argument("match_anchors: more ground truths than anchors");
    const std::size_t n = anchors.size(), m = gts.size();
    std::vector<double> iou(n * m);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t g = 0; g < m; ++g) iou[a * m + g] = jaccard(anchors[a], gts[g]);

    MatchAssignment out;
    out.labels.assign(n, AnchorLabel::ignore);
    out.gt_index.assign(n, -1);
    out.best_iou.assign(n, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
        std::size_t best = 0;
        for (std::size_t g = 1; g < m; ++g)
            if (iou[a * m + g] > iou[a * m + best]) best = g;
        out.best_iou[a] = iou[a * m + best];
        if (out.best_iou[a] > pos_threshold) {
            out.labels[a] = AnchorLabel::positive;
            out.gt_index[a] = static_cast<int>(best);
        } else if (out.best_iou[a] < neg_threshold) {
            out.labels[a] = AnchorLabel::negative;
        }
    }
    std::vector<bool> claimed(n, false);
    for (std::size_t g = 0; g < m; ++g) {
        std::size_t best = n;
        for (std::size_t a = 0; a < n; ++a) {
            if (claimed[a]) continue;
            if (best == n || iou[a * m + g] > iou[best * m + g]) best = a;
        }
        claimed[best] = true;
        out.labels[best] = AnchorLabel::positive;
        out.gt_index[best] = static_cast<int>(g);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Non-maximum suppression

/// Greedy NMS. Returns kept indices in descending score order; equal scores keep
/// the lower index first. A box is suppressed if its IoU with a kept box exceeds
/// the threshold.
inline std::vector<std::size_t> nms(const std::vector<Box>& boxes, const std::vector<double>& scores,
                                    double iou_threshold) {
    if (boxes.size() != scores.size()) throw std::invalid_argument("nms: boxes and scores differ in length");
    std::vector<std::size_t> order(boxes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<std::size_t> kept;
    for (std::size_t idx : order) {
        bool keep = true;
        for (std::size_t k : kept) {
            if (jaccard(boxes[idx], boxes[k]) > iou_threshold) {
                keep = false;
                break;
            }
        }
        if (keep) kept.push_back(idx);
    }
    return kept;
}

}  // namespace cosal
