#pragma once

// RoIAlign: a box on a [C, H, W] feature map is divided into Bh x Bw bins; each
// bin averages (or maxes) bilinear samples taken at regularly spaced points
// (quarter points for 2x2 samples). Cell (i, j) holds its value at continuous
// coordinate (i + 0.5, j + 0.5); samples outside the map read as zero.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "cosal/geometry.hpp"
#include "cosal/tensor.hpp"

namespace cosal {

enum class RoiAggregation { average, max };

struct RoiSpec {
    std::size_t bins_h = 7, bins_w = 7;
    std::size_t samples_h = 2, samples_w = 2;
    RoiAggregation aggregation = RoiAggregation::average;

    void validate() const {
        if (bins_h < 1 || bins_w < 1 || samples_h < 1 || samples_w < 1) {
            throw std::invalid_argument("RoiSpec: bins and samples must be >= 1");
        }
    }
};

/// One bilinear sample: four (flat spatial index, weight) taps in the order
/// (y0, x0), (y0, x1), (y1, x0), (y1, x1). Border samples repeat indices.
struct BilinearTaps {
    std::array<std::size_t, 4> index{};
    std::array<double, 4> weight{};
    double ly = 0.0, lx = 0.0;
    std::size_t count = 0;  // 0 outside the map, otherwise 4
};

/// Points outside [0, h] x [0, w] produce no taps (value 0). Inside, the lattice
/// coordinate is clamped to the border cell centres.
inline BilinearTaps bilinear_taps(double y, double x, std::size_t h, std::size_t w) {
    BilinearTaps taps;
    if (!(y >= 0.0 && y <= double(h) && x >= 0.0 && x <= double(w))) return taps;
    const double u = std::clamp(y - 0.5, 0.0, double(h - 1));
    const double v = std::clamp(x - 0.5, 0.0, double(w - 1));
    const std::size_t y0 = static_cast<std::size_t>(u), x0 = static_cast<std::size_t>(v);
    const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
    taps.ly = u - double(y0);
    taps.lx = v - double(x0);
    taps.index = {y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1};
    taps.weight = {(1 - taps.ly) * (1 - taps.lx), (1 - taps.ly) * taps.lx, taps.ly * (1 - taps.lx), taps.ly * taps.lx};
    taps.count = 4;
    return taps;
}

/// Interpolated value as nested lerps, so a constant neighbourhood reads back exactly.
template <typename T>
T sample_value(const T* f, const BilinearTaps& t) {
    if (t.count == 0) return T{0};
    const T lx = static_cast<T>(t.lx), ly = static_cast<T>(t.ly);
    const T a = f[t.index[0]], b = f[t.index[1]], c = f[t.index[2]], d = f[t.index[3]];
    const T top = a + lx * (b - a), bottom = c + lx * (d - c);
    return top + ly * (bottom - top);
}

namespace detail {

inline void check_roi(const Shape& feature_shape, const Box& box, const RoiSpec& spec) {
    spec.validate();
    require_rank(feature_shape, 3, "roi_align feature");
    if (!(box.w > 0) || !(box.h > 0) || !std::isfinite(box.cx) || !std::isfinite(box.cy)) {
        throw std::invalid_argument("roi_align: degenerate box (w=" + std::to_string(box.w) +
                                    ", h=" + std::to_string(box.h) + ")");
    }
}

// Sample taps for every bin, row-major over (bin_y, bin_x), samples_h * samples_w each.
inline std::vector<BilinearTaps> roi_sample_taps(const Shape& feature_shape, const Box& box, const RoiSpec& spec) {
    const std::size_t h = feature_shape[1], w = feature_shape[2];
    const double bin_h = box.h / double(spec.bins_h), bin_w = box.w / double(spec.bins_w);
    std::vector<BilinearTaps> taps;
    taps.reserve(spec.bins_h * spec.bins_w * spec.samples_h * spec.samples_w);
    for (std::size_t by = 0; by < spec.bins_h; ++by)
        for (std::size_t bx = 0; bx < spec.bins_w; ++bx)
            for (std::size_t sy = 0; sy < spec.samples_h; ++sy)
                for (std::size_t sx = 0; sx < spec.samples_w; ++sx) {
                    const double y = box.y1() + bin_h * (double(by) + (double(sy) + 0.5) / double(spec.samples_h));
                    const double x = box.x1() + bin_w * (double(bx) + (double(sx) + 0.5) / double(spec.samples_w));
                    taps.push_back(bilinear_taps(y, x, h, w));
                }
    return taps;
}

}  // namespace detail

/// `box` is in feature-map coordinates.
template <typename T>
BasicTensor<T> roi_align(const BasicTensor<T>& feature, const Box& box, const RoiSpec& spec = {}) {
    detail::check_roi(feature.shape(), box, spec);
    const std::size_t c = feature.extent(0), hw = feature.extent(1) * feature.extent(2);
    const std::size_t per_bin = spec.samples_h * spec.samples_w;
    const auto taps = detail::roi_sample_taps(feature.shape(), box, spec);
    BasicTensor<T> out({c, spec.bins_h, spec.bins_w});
    const std::size_t bins = spec.bins_h * spec.bins_w;
    for (std::size_t k = 0; k < c; ++k) {
        const T* f = feature.data() + k * hw;
        for (std::size_t b = 0; b < bins; ++b) {
            T agg = spec.aggregation == RoiAggregation::max ? -std::numeric_limits<T>::infinity() : T{0};
            for (std::size_t s = 0; s < per_bin; ++s) {
                const BilinearTaps& t = taps[b * per_bin + s];
                const T v = sample_value(f, t);
                if (spec.aggregation == RoiAggregation::max) {
                    agg = std::max(agg, v);
                } else {
                    agg += v;
                }
            }
            if (spec.aggregation == RoiAggregation::average) agg /= static_cast<T>(per_bin);
            out[k * bins + b] = agg;
        }
    }
    return out;
}

/// Gradient of roi_align with respect to the feature map. Max aggregation routes
/// each bin's gradient to its first maximal sample.
template <typename T>
BasicTensor<T> roi_align_backward(const BasicTensor<T>& feature, const Box& box, const RoiSpec& spec,
                                  const BasicTensor<T>& upstream) {
    detail::check_roi(feature.shape(), box, spec);
    const std::size_t c = feature.extent(0), hw = feature.extent(1) * feature.extent(2);
    require_shape(upstream.shape(), {c, spec.bins_h, spec.bins_w}, "roi_align backward upstream");
    const std::size_t per_bin = spec.samples_h * spec.samples_w;
    const std::size_t bins = spec.bins_h * spec.bins_w;
    const auto taps = detail::roi_sample_taps(feature.shape(), box, spec);
    BasicTensor<T> grad(feature.shape());
    for (std::size_t k = 0; k < c; ++k) {
        const T* f = feature.data() + k * hw;
        T* g = grad.data() + k * hw;
        for (std::size_t b = 0; b < bins; ++b) {
            const T up = upstream[k * bins + b];
            if (up == T{0}) continue;
            if (spec.aggregation == RoiAggregation::average) {
                const T share = up / static_cast<T>(per_bin);
                for (std::size_t s = 0; s < per_bin; ++s) {
                    const BilinearTaps& t = taps[b * per_bin + s];
                    for (std::size_t q = 0; q < t.count; ++q) g[t.index[q]] += static_cast<T>(t.weight[q]) * share;
                }
            } else {
                std::size_t best = 0;
                T best_v = -std::numeric_limits<T>::infinity();
                for (std::size_t s = 0; s < per_bin; ++s) {
                    const BilinearTaps& t = taps[b * per_bin + s];
                    const T v = sample_value(f, t);
                    if (v > best_v) {
                        best_v = v;
                        best = s;
                    }
                }
                const BilinearTaps& t = taps[b * per_bin + best];
                for (std::size_t q = 0; q < t.count; ++q) g[t.index[q]] += static_cast<T>(t.weight[q]) * up;
            }
        }
    }
    return grad;
}

/// Same as roi_align_backward but only needs the feature shape (average aggregation).
template <typename T>
BasicTensor<T> roi_align_backward(const Shape& feature_shape, const Box& box, const RoiSpec& spec,
                                  const BasicTensor<T>& upstream) {
    if (spec.aggregation != RoiAggregation::average) {
        throw std::invalid_argument("roi_align_backward: max aggregation needs the feature values");
    }
    return roi_align_backward(BasicTensor<T>(feature_shape), box, spec, upstream);
}

}  // namespace cosal
