#pragma once

// Instance-annotated co-saliency samples: validation, the synthetic scene
// generator, augmentation, and the on-disk dataset layout
//
//   root/images/<id>.png          RGB image
//   root/annotations/<id>.json    {id, width, height, instances: [{box: [cx, cy, w, h], mask, cosalient}]}
//   root/masks/<id>_<k>.png       1-bit instance masks
//   root/gt/<id>.png              cached co-saliency mask (derivable)

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "cosal/geometry.hpp"
#include "cosal/image_io.hpp"
#include "cosal/network.hpp"
#include "cosal/tensor.hpp"

namespace cosal {

using Mask = std::vector<std::uint8_t>;

struct Instance {
    Box box;
    Mask mask;  // full image size, row-major
    bool cosalient = true;
};

struct Sample {
    std::string id;
    std::size_t width = 0, height = 0;
    BasicTensor<float> image;  // [3, height, width], values in [0, 1]
    Mask mask;                 // co-saliency ground truth Y
    std::vector<Instance> instances;

    std::vector<Box> cosalient_boxes() const {
        std::vector<Box> out;
        for (const auto& i : instances)
            if (i.cosalient) out.push_back(i.box);
        return out;
    }
    std::vector<Box> distractor_boxes() const {
        std::vector<Box> out;
        for (const auto& i : instances)
            if (!i.cosalient) out.push_back(i.box);
        return out;
    }
    std::size_t cosalient_count() const {
        return static_cast<std::size_t>(std::count_if(instances.begin(), instances.end(),
                                                      [](const Instance& i) { return i.cosalient; }));
    }
};

inline std::size_t mask_area(const Mask& m) {
    return static_cast<std::size_t>(std::count_if(m.begin(), m.end(), [](std::uint8_t v) { return v != 0; }));
}

/// Tight pixel-aligned box around the set pixels; nullopt for an empty mask.
inline std::optional<Box> box_from_mask(const Mask& m, std::size_t width, std::size_t height) {
    std::size_t x1 = width, y1 = height, x2 = 0, y2 = 0;
    bool any = false;
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
            if (m[y * width + x]) {
                any = true;
                x1 = std::min(x1, x);
                y1 = std::min(y1, y);
                x2 = std::max(x2, x + 1);
                y2 = std::max(y2, y + 1);
            }
    if (!any) return std::nullopt;
    return Box::from_corners(double(x1), double(y1), double(x2), double(y2));
}

inline Mask union_of_cosalient(const std::vector<Instance>& instances, std::size_t pixels) {
    Mask y(pixels, 0);
    for (const auto& inst : instances)
        if (inst.cosalient)
            for (std::size_t i = 0; i < pixels; ++i) y[i] |= inst.mask[i] ? 1 : 0;
    return y;
}

/// Name of the first violated invariant, or nullopt when the sample is valid.
inline std::optional<std::string> validate_sample(const Sample& s) {
    const std::size_t px = s.width * s.height;
    if (px == 0 || s.image.shape() != Shape{3, s.height, s.width}) return "image-shape";
    for (float v : s.image.values())
        if (!(v >= 0.0f && v <= 1.0f)) return "image-range";
    if (s.mask.size() != px) return "mask-shape";
    for (const auto& inst : s.instances) {
        if (inst.mask.size() != px) return "instance-mask-shape";
        if (!inst.box.valid()) return "box-valid";
        if (mask_area(inst.mask) == 0) return "instance-mask-empty";
        for (std::size_t y = 0; y < s.height; ++y)
            for (std::size_t x = 0; x < s.width; ++x)
                if (inst.mask[y * s.width + x] &&
                    (double(x) < inst.box.x1() - 1e-6 || double(x + 1) > inst.box.x2() + 1e-6 ||
                     double(y) < inst.box.y1() - 1e-6 || double(y + 1) > inst.box.y2() + 1e-6)) {
                    return "instance-mask-inside-box";
                }
    }
    if (s.cosalient_count() < 2) return "min-two-cosalient-instances";
    const Mask expected = union_of_cosalient(s.instances, px);
    for (std::size_t i = 0; i < px; ++i)
        if ((s.mask[i] != 0) != (expected[i] != 0)) return "mask-equals-cosalient-union";
    return std::nullopt;
}

template <typename T>
TrainingExample<T> to_training_example(const Sample& s) {
    return {s.image.cast<T>(), s.mask, s.cosalient_boxes(), s.distractor_boxes()};
}

// ---------------------------------------------------------------------------
// Synthetic generator

enum class ShapeClass { disc, square, triangle, diamond, cross, ring };
inline constexpr std::size_t kShapeClasses = 6;

/// Shape membership in normalised box coordinates u, v in [-1, 1].
inline bool shape_contains(ShapeClass c, double u, double v) {
    const double au = std::abs(u), av = std::abs(v);
    switch (c) {
        case ShapeClass::disc: return u * u + v * v <= 1.0;
        case ShapeClass::square: return au <= 0.85 && av <= 0.85;
        case ShapeClass::triangle: return v <= 1.0 && v >= -1.0 && au <= (v + 1.0) / 2.0;
        case ShapeClass::diamond: return au + av <= 1.0;
        case ShapeClass::cross: return (au <= 0.33 && av <= 1.0) || (av <= 0.33 && au <= 1.0);
        case ShapeClass::ring: {
            const double r2 = u * u + v * v;
            return r2 <= 1.0 && r2 >= 0.3;
        }
    }
    return false;
}

struct SynthConfig {
    std::size_t side = 64;
    std::size_t min_instances = 2, max_instances = 4;
    std::size_t max_distractors = 2;
    double min_size_fraction = 0.25, max_size_fraction = 0.31;  // base instance side / image side
    double size_jitter = 0.2;
};

namespace detail {

inline std::array<double, 3> hue_to_rgb(double hue, double sat, double val) {
    const double h6 = std::fmod(hue, 1.0) * 6.0;
    const int sector = static_cast<int>(h6) % 6;
    const double f = h6 - std::floor(h6);
    const double p = val * (1 - sat), q = val * (1 - sat * f), t = val * (1 - sat * (1 - f));
    switch (sector) {
        case 0: return {val, t, p};
        case 1: return {q, val, p};
        case 2: return {p, val, t};
        case 3: return {p, q, val};
        case 4: return {t, p, val};
        default: return {val, p, q};
    }
}

inline float quantize(double v) { return float(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0f; }

template <typename Rng>
void paint_texture(BasicTensor<float>& img, std::size_t x0, std::size_t y0, std::size_t x1, std::size_t y1, Rng& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const auto base = hue_to_rgb(u01(rng), 0.15 + 0.15 * u01(rng), 0.35 + 0.25 * u01(rng));
    struct Wave { double fx, fy, phase, amp; };
    std::array<Wave, 3> waves{};
    for (auto& w : waves) w = {u01(rng) * 0.5, u01(rng) * 0.5, u01(rng) * 6.283, 0.03 + 0.04 * u01(rng)};
    std::normal_distribution<double> noise(0.0, 0.025);
    const std::size_t h = img.extent(1), w = img.extent(2);
    for (std::size_t y = y0; y < std::min(y1, h); ++y)
        for (std::size_t x = x0; x < std::min(x1, w); ++x) {
            double tex = 0.0;
            for (const auto& wv : waves) tex += wv.amp * std::sin(wv.fx * double(x) + wv.fy * double(y) + wv.phase);
            for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = quantize(base[c] + tex + noise(rng));
        }
}

struct Placement {
    ShapeClass cls;
    std::array<double, 3> color;
    Box box;
    bool cosalient;
};

}  // namespace detail

/// One synthetic scene: 2-4 co-salient instances sharing shape class and colour
/// (size jitter <= 20%), plus 0-2 distractors of another class and colour, on a
/// textured background. Masks and boxes are exact by construction.
template <typename Rng>
Sample synth_sample(const SynthConfig& cfg, Rng& rng, std::string id = {}) {
    if (cfg.side < 32) throw std::invalid_argument("synth_generate: side must be >= 32");
    const std::size_t s = cfg.side;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int attempt = 0;; ++attempt) {
        std::uniform_int_distribution<std::size_t> pick_class(0, kShapeClasses - 1);
        std::uniform_int_distribution<std::size_t> pick_count(cfg.min_instances, cfg.max_instances);
        std::uniform_int_distribution<std::size_t> pick_distractors(0, cfg.max_distractors);
        const auto cls = static_cast<ShapeClass>(pick_class(rng));
        const double hue = u01(rng);
        const auto color = detail::hue_to_rgb(hue, 0.75 + 0.25 * u01(rng), 0.8 + 0.2 * u01(rng));
        const double base = (cfg.min_size_fraction + (cfg.max_size_fraction - cfg.min_size_fraction) * u01(rng)) * double(s);
        const std::size_t count = pick_count(rng);
        const std::size_t n_distract = pick_distractors(rng);

        std::vector<detail::Placement> placed;
        auto try_place = [&](ShapeClass c, const std::array<double, 3>& col, double side, bool cosal) {
            std::uniform_real_distribution<double> pos(side / 2 + 1, double(s) - side / 2 - 1);
            for (int tries = 0; tries < 200; ++tries) {
                const Box b{pos(rng), pos(rng), side, side};
                bool clear = true;
                for (const auto& p : placed) {
                    const Box grown{p.box.cx, p.box.cy, p.box.w + 3, p.box.h + 3};
                    if (intersection_area(b, grown) > 0) {
                        clear = false;
                        break;
                    }
                }
                if (clear) {
                    placed.push_back({c, col, b, cosal});
                    return true;
                }
            }
            return false;
        };
        bool ok = true;
        for (std::size_t i = 0; i < count && ok; ++i) {
            const double side = base * (1.0 + cfg.size_jitter * (2.0 * u01(rng) - 1.0));
            ok = try_place(cls, color, side, true);
        }
        if (!ok) {
            if (attempt > 1000) throw std::runtime_error("synth_generate: cannot place instances");
            continue;
        }
        for (std::size_t i = 0; i < n_distract; ++i) {
            auto other = static_cast<ShapeClass>((static_cast<std::size_t>(cls) + 1 +
                                                  std::uniform_int_distribution<std::size_t>(0, kShapeClasses - 2)(rng)) %
                                                 kShapeClasses);
            const double other_hue = hue + 0.25 + 0.5 * u01(rng);
            const auto other_color = detail::hue_to_rgb(other_hue, 0.75 + 0.25 * u01(rng), 0.8 + 0.2 * u01(rng));
            const double side = base * (1.0 + cfg.size_jitter * (2.0 * u01(rng) - 1.0));
            try_place(other, other_color, side, false);  // distractors are optional
        }

        Sample out;
        out.id = std::move(id);
        out.width = out.height = s;
        out.image = BasicTensor<float>({3, s, s});
        detail::paint_texture(out.image, 0, 0, s, s, rng);
        std::normal_distribution<double> shade(0.0, 0.02);
        bool empty_mask = false;
        for (const auto& p : placed) {
            Instance inst;
            inst.cosalient = p.cosalient;
            inst.mask.assign(s * s, 0);
            for (std::size_t y = 0; y < s; ++y)
                for (std::size_t x = 0; x < s; ++x) {
                    const double u = 2.0 * (double(x) + 0.5 - p.box.cx) / p.box.w;
                    const double v = 2.0 * (double(y) + 0.5 - p.box.cy) / p.box.h;
                    if (!shape_contains(p.cls, u, v)) continue;
                    inst.mask[y * s + x] = 1;
                    for (std::size_t c = 0; c < 3; ++c) out.image.at(c, y, x) = detail::quantize(p.color[c] + shade(rng));
                }
            const auto tight = box_from_mask(inst.mask, s, s);
            if (!tight) {
                empty_mask = true;
                break;
            }
            inst.box = *tight;
            out.instances.push_back(std::move(inst));
        }
        if (empty_mask) continue;
        out.mask = union_of_cosalient(out.instances, s * s);
        return out;
    }
}

/// Per-sample generators are seeded from (seed, index), so any subset or
/// parallel order reproduces the same samples.
inline std::vector<Sample> synth_generate(std::size_t count, std::size_t side, std::uint64_t seed,
                                          SynthConfig cfg = {}) {
    cfg.side = side;
    std::vector<Sample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::seed_seq seq{std::uint32_t(seed & 0xFFFFFFFFu), std::uint32_t(seed >> 32), std::uint32_t(i)};
        std::mt19937_64 rng(seq);
        char id[32];
        std::snprintf(id, sizeof id, "s%05zu", i);
        out.push_back(synth_sample(cfg, rng, id));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Augmentation

namespace detail {

inline std::array<float, 3> mean_color(const BasicTensor<float>& img) {
    std::array<float, 3> m{};
    const std::size_t n = img.extent(1) * img.extent(2);
    for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0;
        for (std::size_t i = 0; i < n; ++i) acc += img[c * n + i];
        m[c] = quantize(acc / double(n));
    }
    return m;
}

// Recomputes boxes from masks, drops instances whose visible area fell below
// `min_visible` of `original_area`, and rebuilds Y.
inline void finalize_instances(Sample& s, const std::vector<std::size_t>& original_area, double min_visible) {
    std::vector<Instance> kept;
    for (std::size_t k = 0; k < s.instances.size(); ++k) {
        auto& inst = s.instances[k];
        const std::size_t area = mask_area(inst.mask);
        if (area == 0 || double(area) < min_visible * double(original_area[k])) continue;
        inst.box = *box_from_mask(inst.mask, s.width, s.height);
        kept.push_back(std::move(inst));
    }
    s.instances = std::move(kept);
    s.mask = union_of_cosalient(s.instances, s.width * s.height);
}

}  // namespace detail

/// Where a box lands after scaling the image about its origin by `factor`,
/// before the centred crop/pad back to the original side.
inline Box rescale_box_uncropped(const Box& b, double factor) { return b.scaled(factor, factor); }

/// Offset of the centred crop (positive) or pad (negative) after scaling.
inline double rescale_crop_offset(std::size_t side, double factor) { return (double(side) * factor - double(side)) / 2.0; }

/// Scales the image by `factor` about the origin, then centre-crops or pads
/// (with the mean colour) back to the original size. Instance masks use
/// nearest-neighbour sampling; boxes are recomputed from the masks.
inline Sample rescale(const Sample& in, double factor) {
    Sample out = in;
    const std::size_t w = in.width, h = in.height;
    const double ox = (double(w) * factor - double(w)) / 2.0, oy = (double(h) * factor - double(h)) / 2.0;
    const auto fill = detail::mean_color(in.image);
    for (auto& inst : out.instances) std::fill(inst.mask.begin(), inst.mask.end(), 0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double sx = (double(x) + 0.5 + ox) / factor, sy = (double(y) + 0.5 + oy) / factor;
            if (sx < 0 || sy < 0 || sx >= double(w) || sy >= double(h)) {
                for (std::size_t c = 0; c < 3; ++c) out.image.at(c, y, x) = fill[c];
                continue;
            }
            // bilinear on pixel centres, clamped at the border
            const double u = std::clamp(sx - 0.5, 0.0, double(w - 1)), v = std::clamp(sy - 0.5, 0.0, double(h - 1));
            const std::size_t x0 = std::size_t(u), y0 = std::size_t(v);
            const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
            const double fx = u - double(x0), fy = v - double(y0);
            for (std::size_t c = 0; c < 3; ++c) {
                const double val = (1 - fy) * ((1 - fx) * in.image.at(c, y0, x0) + fx * in.image.at(c, y0, x1)) +
                                   fy * ((1 - fx) * in.image.at(c, y1, x0) + fx * in.image.at(c, y1, x1));
                out.image.at(c, y, x) = detail::quantize(val);
            }
            const std::size_t nx = std::size_t(sx), ny = std::size_t(sy);
            for (std::size_t k = 0; k < in.instances.size(); ++k)
                out.instances[k].mask[y * w + x] = in.instances[k].mask[ny * w + nx];
        }
    return out;
}

/// Blanks a strip of `amount` pixels along one border (0 top, 1 bottom, 2 left, 3 right).
inline Sample clip_border(const Sample& in, int side, std::size_t amount) {
    Sample out = in;
    const std::size_t w = in.width, h = in.height;
    const auto fill = detail::mean_color(in.image);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const bool hit = (side == 0 && y < amount) || (side == 1 && y + amount >= h) || (side == 2 && x < amount) ||
                             (side == 3 && x + amount >= w);
            if (!hit) continue;
            for (std::size_t c = 0; c < 3; ++c) out.image.at(c, y, x) = fill[c];
            for (auto& inst : out.instances) inst.mask[y * w + x] = 0;
        }
    return out;
}

/// Covers the pixel rectangle [x0, x1) x [y0, y1) with fresh background texture.
template <typename Rng>
Sample occlude(const Sample& in, std::size_t x0, std::size_t y0, std::size_t x1, std::size_t y1, Rng& rng) {
    Sample out = in;
    detail::paint_texture(out.image, x0, y0, x1, y1, rng);
    for (auto& inst : out.instances)
        for (std::size_t y = y0; y < std::min(y1, in.height); ++y)
            for (std::size_t x = x0; x < std::min(x1, in.width); ++x) inst.mask[y * in.width + x] = 0;
    return out;
}

struct AugmentConfig {
    double probability = 0.5;
    double min_scale = 0.75, max_scale = 1.25;
    double max_clip_fraction = 0.25;
    double max_occlusion_fraction = 0.15;
    double min_visible_fraction = 0.25;
};

/// Multi-scale rescale, border clipping and occlusion, each applied with
/// probability 0.5. Rolls back to the input if fewer than two co-salient
/// instances survive.
template <typename Rng>
Sample augment(const Sample& in, Rng& rng, const AugmentConfig& cfg = {}) {
    std::bernoulli_distribution apply(cfg.probability);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::vector<std::size_t> original_area;
    for (const auto& inst : in.instances) original_area.push_back(mask_area(inst.mask));
    const bool do_scale = apply(rng), do_clip = apply(rng), do_occlude = apply(rng);
    if (!do_scale && !do_clip && !do_occlude) return in;

    Sample out = in;
    if (do_scale) out = rescale(out, cfg.min_scale + (cfg.max_scale - cfg.min_scale) * u01(rng));
    if (do_clip) {
        const int side = std::uniform_int_distribution<int>(0, 3)(rng);
        const std::size_t limit = std::size_t(cfg.max_clip_fraction * double(side < 2 ? in.height : in.width));
        if (limit >= 1) out = clip_border(out, side, std::uniform_int_distribution<std::size_t>(1, limit)(rng));
    }
    if (do_occlude) {
        const double area = (0.02 + (cfg.max_occlusion_fraction - 0.02) * u01(rng)) * double(in.width * in.height);
        const double aspect = std::exp(std::log(0.5) + std::log(4.0) * u01(rng));
        const auto rw = std::clamp<std::size_t>(std::size_t(std::sqrt(area / aspect)), 1, in.width);
        const auto rh = std::clamp<std::size_t>(std::size_t(area / double(rw)), 1, in.height);
        const std::size_t x0 = std::uniform_int_distribution<std::size_t>(0, in.width - rw)(rng);
        const std::size_t y0 = std::uniform_int_distribution<std::size_t>(0, in.height - rh)(rng);
        out = occlude(out, x0, y0, x0 + rw, y0 + rh, rng);
    }
    detail::finalize_instances(out, original_area, cfg.min_visible_fraction);
    if (out.cosalient_count() < 2) return in;
    return out;
}

// ---------------------------------------------------------------------------
// Dataset I/O

struct LoadResult {
    std::vector<Sample> samples;
    std::vector<std::string> diagnostics;  // "<path>: <rule>: <detail>"
};

inline Image8 to_image8(const BasicTensor<float>& img) {
    Image8 out;
    out.height = img.extent(1);
    out.width = img.extent(2);
    out.channels = 3;
    out.pixels.resize(out.width * out.height * 3);
    for (std::size_t y = 0; y < out.height; ++y)
        for (std::size_t x = 0; x < out.width; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                out.pixels[(y * out.width + x) * 3 + c] =
                    static_cast<std::uint8_t>(std::lround(std::clamp(img.at(c, y, x), 0.0f, 1.0f) * 255.0f));
    return out;
}

inline BasicTensor<float> from_image8(const Image8& img) {
    BasicTensor<float> out({3, img.height, img.width});
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                out.at(c, y, x) = float(img.pixels[(y * img.width + x) * 3 + c]) / 255.0f;
    return out;
}

/// Bilinear resize of a [C, H, W] tensor with pixel-centre alignment and edge clamping.
template <typename T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& in, std::size_t out_h, std::size_t out_w) {
    require_rank(in.shape(), 3, "resize_bilinear");
    if (out_h == 0 || out_w == 0) throw ShapeError("resize_bilinear: target size must be positive");
    const std::size_t c_n = in.extent(0), in_h = in.extent(1), in_w = in.extent(2);
    BasicTensor<T> out({c_n, out_h, out_w});
    auto axis = [](std::size_t i, std::size_t n_out, std::size_t n_in) {
        const double u = std::clamp((double(i) + 0.5) * double(n_in) / double(n_out) - 0.5, 0.0, double(n_in - 1));
        const auto lo = static_cast<std::size_t>(u);
        return std::tuple{lo, std::min(lo + 1, n_in - 1), u - double(lo)};
    };
    for (std::size_t y = 0; y < out_h; ++y) {
        const auto [y0, y1, fy] = axis(y, out_h, in_h);
        for (std::size_t x = 0; x < out_w; ++x) {
            const auto [x0, x1, fx] = axis(x, out_w, in_w);
            for (std::size_t c = 0; c < c_n; ++c) {
                const double top = (1 - fx) * double(in.at(c, y0, x0)) + fx * double(in.at(c, y0, x1));
                const double bot = (1 - fx) * double(in.at(c, y1, x0)) + fx * double(in.at(c, y1, x1));
                out.at(c, y, x) = static_cast<T>((1 - fy) * top + fy * bot);
            }
        }
    }
    return out;
}

inline void save_sample(const std::filesystem::path& root, const Sample& s) {
    namespace fs = std::filesystem;
    for (const char* sub : {"images", "annotations", "masks", "gt"}) fs::create_directories(root / sub);
    write_png((root / "images" / (s.id + ".png")).string(), to_image8(s.image));
    nlohmann::ordered_json ann;
    ann["id"] = s.id;
    ann["width"] = s.width;
    ann["height"] = s.height;
    ann["instances"] = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < s.instances.size(); ++k) {
        const auto& inst = s.instances[k];
        const std::string mask_name = "masks/" + s.id + "_" + std::to_string(k) + ".png";
        write_mask_png((root / mask_name).string(), s.width, s.height, inst.mask);
        nlohmann::ordered_json j;
        j["box"] = {inst.box.cx, inst.box.cy, inst.box.w, inst.box.h};
        j["mask"] = mask_name;
        j["cosalient"] = inst.cosalient;
        ann["instances"].push_back(std::move(j));
    }
    std::ofstream(root / "annotations" / (s.id + ".json")) << ann.dump(2) << '\n';
    Image8 gt{s.width, s.height, 1, {}};
    gt.pixels.resize(s.width * s.height);
    for (std::size_t i = 0; i < gt.pixels.size(); ++i) gt.pixels[i] = s.mask[i] ? 255 : 0;
    write_png((root / "gt" / (s.id + ".png")).string(), gt);
}

inline void save_dataset(const std::filesystem::path& root, const std::vector<Sample>& samples) {
    for (const auto& s : samples) save_sample(root, s);
}

/// Loads every annotation under root/annotations (sorted by file name). Invalid
/// samples are skipped and described in the diagnostics.
inline LoadResult load_dataset(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    LoadResult result;
    const fs::path ann_dir = root / "annotations";
    if (!fs::is_directory(ann_dir)) return result;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(ann_dir))
        if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (fs::is_directory(root / "images")) {
        std::vector<fs::path> orphans;
        for (const auto& e : fs::directory_iterator(root / "images"))
            if (e.path().extension() == ".png" && !fs::exists(ann_dir / (e.path().stem().string() + ".json")))
                orphans.push_back(e.path());
        std::sort(orphans.begin(), orphans.end());
        for (const auto& p : orphans) result.diagnostics.push_back(p.string() + ": missing-annotation: no annotation file");
    }
    for (const auto& file : files) {
        auto fail = [&](const std::string& rule, const std::string& detail) {
            result.diagnostics.push_back(file.string() + ": " + rule + ": " + detail);
        };
        try {
            nlohmann::json ann = nlohmann::json::parse(std::ifstream(file));
            Sample s;
            s.id = ann.at("id").get<std::string>();
            s.width = ann.at("width").get<std::size_t>();
            s.height = ann.at("height").get<std::size_t>();
            const Image8 img = read_png((root / "images" / (s.id + ".png")).string(), 3);
            if (img.width != s.width || img.height != s.height) {
                fail("image-shape", "image is " + std::to_string(img.width) + "x" + std::to_string(img.height));
                continue;
            }
            s.image = from_image8(img);
            for (const auto& j : ann.at("instances")) {
                Instance inst;
                const auto b = j.at("box").get<std::vector<double>>();
                if (b.size() != 4) throw std::invalid_argument("box needs 4 numbers");
                inst.box = {b[0], b[1], b[2], b[3]};
                inst.cosalient = j.at("cosalient").get<bool>();
                std::size_t mw = 0, mh = 0;
                inst.mask = read_mask_png((root / j.at("mask").get<std::string>()).string(), mw, mh);
                if (mw != s.width || mh != s.height) throw std::invalid_argument("instance mask size differs from image");
                s.instances.push_back(std::move(inst));
            }
            s.mask = union_of_cosalient(s.instances, s.width * s.height);
            if (auto violated = validate_sample(s)) {
                fail(*violated, "sample '" + s.id + "' rejected");
                continue;
            }
            result.samples.push_back(std::move(s));
        } catch (const std::exception& e) {
            fail("annotation", e.what());
        }
    }
    return result;
}

}  // namespace cosal
