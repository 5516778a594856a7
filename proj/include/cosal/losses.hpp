#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cosal/geometry.hpp"
#include "cosal/tensor.hpp"

namespace cosal {

struct LossConfig {
    double alpha = 1.0;      // decoder weight in the total
    double beta = 1.0;       // RPN weight in the total
    double gamma = 1.0;      // RFM weight in the total
    double alpha_loc = 1.0;  // localisation weight inside the RPN loss
    double margin = 1.0;
    double bce_epsilon = 1e-7;

    void validate() const {
        if (alpha < 0 || beta < 0 || gamma < 0 || alpha_loc < 0) throw std::invalid_argument("loss weights must be >= 0");
        if (!(margin > 0)) throw std::invalid_argument("triplet margin must be > 0");
    }
};

struct LossBreakdown {
    double total = 0, decoder = 0, rpn = 0, rfm = 0;
};

// ---------------------------------------------------------------------------
// Decoder: mean pixel-wise binary cross-entropy.

template <typename T>
double bce_loss(std::span<const T> p, std::span<const std::uint8_t> y, double eps = 1e-7) {
    if (p.size() != y.size() || p.empty()) {
        throw ShapeError("bce_loss: prediction has " + std::to_string(p.size()) + " pixels, mask has " +
                         std::to_string(y.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double q = std::clamp(double(p[i]), eps, 1.0 - eps);
        acc += y[i] ? std::log(q) : std::log(1.0 - q);
    }
    return -acc / double(p.size());
}

/// d(bce)/dP. Zero where P is outside the clamp range.
template <typename T>
std::vector<double> bce_loss_grad(std::span<const T> p, std::span<const std::uint8_t> y, double eps = 1e-7) {
    if (p.size() != y.size() || p.empty()) throw ShapeError("bce_loss_grad: size mismatch");
    std::vector<double> g(p.size());
    const double n = double(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double q = double(p[i]);
        if (q < eps || q > 1.0 - eps) continue;
        g[i] = y[i] ? -1.0 / (q * n) : 1.0 / ((1.0 - q) * n);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Smooth L1

inline double smooth_l1(double x) {
    const double a = std::abs(x);
    return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

inline double smooth_l1_grad(double x) { return std::clamp(x, -1.0, 1.0); }

// ---------------------------------------------------------------------------
// RPN: (conf + alpha_loc * loc) / N over matched anchors.

struct RpnLoss {
    double total = 0, conf = 0, loc = 0;
    std::size_t matched = 0;                 // N: number of positive anchors
    std::vector<double> conf_grad;           // d total / d confidence
    std::vector<double> conf_logit_grad;     // d total / d pre-sigmoid confidence
    std::vector<double> offset_grad;         // d total / d offsets, anchor-major (a * 4 + k)
};

/// `confidences` holds one sigmoid output per anchor; `offsets` four values per
/// anchor in (tx, ty, tw, th) order.
template <typename T>
RpnLoss rpn_loss(const MatchAssignment& assignment, std::span<const T> confidences, std::span<const T> offsets,
                 const std::vector<Box>& gts, const std::vector<Box>& anchors, const LossConfig& config) {
    const std::size_t n = anchors.size();
    if (assignment.labels.size() != n || confidences.size() != n || offsets.size() != 4 * n) {
        throw ShapeError("rpn_loss: " + std::to_string(n) + " anchors but " + std::to_string(confidences.size()) +
                         " confidences and " + std::to_string(offsets.size()) + " offsets");
    }
    RpnLoss out;
    out.matched = assignment.positives();
    if (out.matched == 0) throw std::invalid_argument("rpn_loss: no matched anchors (N == 0)");
    const double inv_n = 1.0 / double(out.matched);
    const double eps = config.bce_epsilon;
    out.conf_grad.assign(n, 0.0);
    out.conf_logit_grad.assign(n, 0.0);
    out.offset_grad.assign(4 * n, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
        const AnchorLabel label = assignment.labels[a];
        if (label == AnchorLabel::ignore) continue;
        const double t = label == AnchorLabel::positive ? 1.0 : 0.0;
        const double c = double(confidences[a]);
        const double q = std::clamp(c, eps, 1.0 - eps);
        out.conf -= t > 0 ? std::log(q) : std::log(1.0 - q);
        if (c >= eps && c <= 1.0 - eps) out.conf_grad[a] = (t > 0 ? -1.0 / q : 1.0 / (1.0 - q)) * inv_n;
        out.conf_logit_grad[a] = (c - t) * inv_n;
        if (label != AnchorLabel::positive) continue;
        const OffsetVec target = encode(gts.at(std::size_t(assignment.gt_index[a])), anchors[a]);
        const double tv[4] = {target.tx, target.ty, target.tw, target.th};
        for (int k = 0; k < 4; ++k) {
            const double diff = double(offsets[4 * a + k]) - tv[k];
            out.loc += smooth_l1(diff);
            out.offset_grad[4 * a + k] = config.alpha_loc * smooth_l1_grad(diff) * inv_n;
        }
    }
    out.total = (out.conf + config.alpha_loc * out.loc) * inv_n;
    return out;
}

/// Per-anchor loss used to rank proposals for hard example mining: the anchor's
/// confidence cross-entropy plus, for positives, its smooth-L1 localisation loss.
/// Ignored anchors score 0.
template <typename T>
std::vector<double> rpn_region_losses(const MatchAssignment& assignment, std::span<const T> confidences,
                                      std::span<const T> offsets, const std::vector<Box>& gts,
                                      const std::vector<Box>& anchors, double eps = 1e-7) {
    const std::size_t n = anchors.size();
    if (assignment.labels.size() != n || confidences.size() != n || offsets.size() != 4 * n) {
        throw ShapeError("rpn_region_losses: size mismatch");
    }
    std::vector<double> losses(n, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
        const AnchorLabel label = assignment.labels[a];
        if (label == AnchorLabel::ignore) continue;
        const double q = std::clamp(double(confidences[a]), eps, 1.0 - eps);
        if (label == AnchorLabel::negative) {
            losses[a] = -std::log(1.0 - q);
            continue;
        }
        double loss = -std::log(q);
        const OffsetVec target = encode(gts.at(std::size_t(assignment.gt_index[a])), anchors[a]);
        const double tv[4] = {target.tx, target.ty, target.tw, target.th};
        for (int k = 0; k < 4; ++k) loss += smooth_l1(double(offsets[4 * a + k]) - tv[k]);
        losses[a] = loss;
    }
    return losses;
}

// ---------------------------------------------------------------------------
// Triplet / RFM

template <typename T>
double squared_distance(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size()) {
        throw ShapeError("embedding lengths differ: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = double(a[i]) - double(b[i]);
        acc += d * d;
    }
    return acc;
}

/// max(|a - p|^2 - |a - n|^2 + margin, 0)
template <typename T>
double triplet_loss(std::span<const T> anchor, std::span<const T> positive, std::span<const T> negative,
                    double margin) {
    if (anchor.size() != positive.size() || anchor.size() != negative.size()) {
        throw ShapeError("triplet_loss: embedding lengths differ");
    }
    return std::max(squared_distance(anchor, positive) - squared_distance(anchor, negative) + margin, 0.0);
}

struct TripletTerm {
    std::size_t anchor = 0, positive = 0, negative = 0;  // rows of the embedding table
    double weight = 1.0;
};

struct RfmLoss {
    double value = 0.0;
    std::vector<std::vector<double>> grads;  // per embedding-table row
    std::size_t active = 0;                  // triplets with a non-zero hinge
};

/// sum_i weight_i * triplet_loss_i / max(1, count). At the hinge boundary the
/// subgradient is 0.
template <typename T>
RfmLoss rfm_loss(std::span<const TripletTerm> triplets, const std::vector<std::vector<T>>& embeddings, double margin) {
    RfmLoss out;
    out.grads.assign(embeddings.size(), {});
    for (std::size_t r = 0; r < embeddings.size(); ++r) out.grads[r].assign(embeddings[r].size(), 0.0);
    if (triplets.empty()) return out;
    const double inv = 1.0 / double(std::max<std::size_t>(1, triplets.size()));
    for (const auto& t : triplets) {
        const auto& a = embeddings.at(t.anchor);
        const auto& p = embeddings.at(t.positive);
        const auto& n = embeddings.at(t.negative);
        const double l = triplet_loss<T>(a, p, n, margin);
        out.value += t.weight * l * inv;
        if (!(l > 0.0)) continue;
        ++out.active;
        const double s = 2.0 * t.weight * inv;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double ai = double(a[i]), pi = double(p[i]), ni = double(n[i]);
            out.grads[t.anchor][i] += s * (ni - pi);
            out.grads[t.positive][i] += s * (pi - ai);
            out.grads[t.negative][i] += s * (ai - ni);
        }
    }
    return out;
}

inline double total_loss(double decoder, double rpn, double rfm, const LossConfig& config) {
    return config.alpha * decoder + config.beta * rpn + config.gamma * rfm;
}

}  // namespace cosal
