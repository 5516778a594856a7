#pragma once

// Co-saliency network: a U-Net style encoder/decoder with a Feature-Sensitive
// block (three 3x3 conv + relu) between them, plus two training-only branches
// tapping the sensitive features R:
//   RPN  conv3x3 + relu, then 1x1 heads for per-anchor confidence and offsets
//   RFM  RoIAlign(R, box) -> FC -> relu -> FC, a fixed-length region embedding
// Prediction runs the backbone only.

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cosal/checkpoint.hpp"
#include "cosal/geometry.hpp"
#include "cosal/layers.hpp"
#include "cosal/losses.hpp"
#include "cosal/optim.hpp"
#include "cosal/roialign.hpp"
#include "cosal/sampling.hpp"

namespace cosal {

struct NetworkConfig {
    std::size_t side = 64;
    std::vector<std::size_t> widths{8, 16, 32};  // one entry per encoder level
    std::size_t sensitive_channels = 32;
    std::size_t rfm_hidden = 64;
    std::size_t embedding = 32;
    AnchorSpec anchors;
    RoiSpec roi;

    std::size_t levels() const { return widths.size(); }
    std::size_t feature_side() const { return side >> levels(); }

    void validate() const {
        if (widths.empty()) throw std::invalid_argument("network needs at least one encoder level");
        for (auto w : widths)
            if (w == 0) throw std::invalid_argument("channel widths must be positive");
        if (sensitive_channels == 0 || rfm_hidden == 0) throw std::invalid_argument("channel widths must be positive");
        if (embedding < 2) throw std::invalid_argument("embedding length must be >= 2");
        if (side == 0 || side % (std::size_t{1} << levels()) != 0) {
            throw std::invalid_argument("input side " + std::to_string(side) + " must be divisible by 2^levels");
        }
        roi.validate();
    }
};

enum class SamplingMode { offline, online };

struct TrainOptions {
    LossConfig loss;
    SamplingConfig sampling;
    SamplingMode mode = SamplingMode::online;
    double rpn_positive_iou = 0.5;
    double rpn_negative_iou = 0.3;
    double learning_rate = 1e-5;
    double weight_decay = 1e-4;
    double max_grad_norm = 0.0;  // 0 disables clipping
};

/// What the network needs from a sample: image [3, S, S], binary mask (S*S,
/// row-major), co-salient boxes and (optionally) distractor boxes.
template <typename T>
struct TrainingExample {
    BasicTensor<T> image;
    std::vector<std::uint8_t> mask;
    std::vector<Box> cosalient;
    std::vector<Box> distractors;
};

struct StepStats {
    LossBreakdown losses;
    std::size_t triplets = 0;
    std::size_t positives = 0;
    std::size_t negatives = 0;
    std::size_t matched_anchors = 0;
    bool rfm_empty = false;
};

template <typename T>
struct BackboneCache {
    BasicTensor<T> input;
    std::vector<BasicTensor<T>> enc_pre, enc_act, pooled;
    std::vector<BasicTensor<T>> sens_in, sens_pre;
    std::vector<BasicTensor<T>> dec_up, dec_cat, dec_pre, dec_act;  // index 0 = deepest decoder stage
    BasicTensor<T> sensitive;                                        // R
    BasicTensor<T> logits;
    BasicTensor<T> saliency;  // P, [1, S, S]

    const BasicTensor<T>& encoded() const { return pooled.back(); }  // H
};

template <typename T>
struct RpnOutput {
    BasicTensor<T> pre, act;
    BasicTensor<T> conf_logits;  // [A, Hf, Wf]
    BasicTensor<T> conf;         // sigmoid(conf_logits)
    BasicTensor<T> offsets;      // [4A, Hf, Wf], channel a * 4 + k

    /// Anchor-ordered views matching generate_anchors: index (y * Wf + x) * A + a.
    std::vector<T> anchor_confidences() const {
        const std::size_t a_count = conf.extent(0), cells = conf.extent(1) * conf.extent(2);
        std::vector<T> out(a_count * cells);
        for (std::size_t a = 0; a < a_count; ++a)
            for (std::size_t c = 0; c < cells; ++c) out[c * a_count + a] = conf[a * cells + c];
        return out;
    }
    std::vector<T> anchor_offsets() const {
        const std::size_t ch = offsets.extent(0), cells = offsets.extent(1) * offsets.extent(2);
        std::vector<T> out(ch * cells);
        for (std::size_t k = 0; k < ch; ++k)
            for (std::size_t c = 0; c < cells; ++c) out[c * ch + k] = offsets[k * cells + c];
        return out;
    }
};

template <typename T>
struct RfmCache {
    Box feature_box;
    BasicTensor<T> pooled, hidden_pre, hidden, embedding;
};

template <typename T>
class Network {
public:
    explicit Network(NetworkConfig config, std::uint64_t seed = 0) : config_(std::move(config)) {
        config_.validate();
        std::mt19937_64 rng(seed);
        const std::size_t levels = config_.levels();
        std::size_t in = 3;
        for (std::size_t l = 0; l < levels; ++l) {
            encoder_.push_back(make_layer<T>("enc" + std::to_string(l), LayerKind::conv3x3, in, config_.widths[l], rng));
            in = config_.widths[l];
        }
        for (std::size_t k = 0; k < 3; ++k) {
            sensitive_.push_back(
                make_layer<T>("sens" + std::to_string(k), LayerKind::conv3x3, in, config_.sensitive_channels, rng));
            in = config_.sensitive_channels;
        }
        for (std::size_t d = 0; d < levels; ++d) {
            const std::size_t l = levels - 1 - d;
            const std::size_t up = d == 0 ? config_.sensitive_channels : config_.widths[l + 1];
            decoder_.push_back(
                make_layer<T>("dec" + std::to_string(d), LayerKind::conv3x3, up + config_.widths[l], config_.widths[l], rng));
        }
        head_ = make_layer<T>("head", LayerKind::conv1x1, config_.widths[0], 1, rng);

        const std::size_t a = config_.anchors.per_cell();
        const std::size_t cs = config_.sensitive_channels;
        rpn_conv_ = make_layer<T>("rpn.conv", LayerKind::conv3x3, cs, cs, rng);
        rpn_conf_ = make_layer<T>("rpn.conf", LayerKind::conv1x1, cs, a, rng);
        rpn_loc_ = make_layer<T>("rpn.loc", LayerKind::conv1x1, cs, 4 * a, rng);
        const std::size_t pooled = cs * config_.roi.bins_h * config_.roi.bins_w;
        rfm_fc1_ = make_layer<T>("rfm.fc1", LayerKind::fully_connected, pooled, config_.rfm_hidden, rng);
        rfm_fc2_ = make_layer<T>("rfm.fc2", LayerKind::fully_connected, config_.rfm_hidden, config_.embedding, rng);

        anchors_ = generate_anchors(config_.side, config_.feature_side(), config_.anchors);
    }

    const NetworkConfig& config() const { return config_; }
    const AnchorGrid& anchors() const { return anchors_; }

    std::vector<LayerParams<T>*> backbone_parameters() {
        std::vector<LayerParams<T>*> out;
        for (auto& p : encoder_) out.push_back(&p);
        for (auto& p : sensitive_) out.push_back(&p);
        for (auto& p : decoder_) out.push_back(&p);
        out.push_back(&head_);
        return out;
    }
    std::vector<LayerParams<T>*> branch_parameters() {
        return {&rpn_conv_, &rpn_conf_, &rpn_loc_, &rfm_fc1_, &rfm_fc2_};
    }
    std::vector<LayerParams<T>*> parameters() {
        auto out = backbone_parameters();
        for (auto* p : branch_parameters()) out.push_back(p);
        return out;
    }
    std::vector<const LayerParams<T>*> parameters() const {
        std::vector<const LayerParams<T>*> out;
        for (auto* p : const_cast<Network*>(this)->parameters()) out.push_back(p);
        return out;
    }

    std::uint64_t branch_reads() const {
        std::uint64_t n = 0;
        for (auto* p : const_cast<Network*>(this)->branch_parameters()) n += p->reads.get();
        return n;
    }

    LayerParams<T>& head() { return head_; }
    LayerParams<T>& rpn_conf_layer() { return rpn_conf_; }
    LayerParams<T>& rpn_loc_layer() { return rpn_loc_; }

    void zero_grad() {
        for (auto* p : parameters()) p->zero_grad();
    }

    // ---------------------------------------------------------------- backbone

    BackboneCache<T> forward_backbone(const BasicTensor<T>& image) const {
        require_shape(image.shape(), {3, config_.side, config_.side}, "network input image");
        const std::size_t levels = config_.levels();
        BackboneCache<T> c;
        c.input = image;
        const BasicTensor<T>* x = &c.input;
        for (std::size_t l = 0; l < levels; ++l) {
            c.enc_pre.push_back(conv2d(*x, encoder_[l]));
            c.enc_act.push_back(relu(c.enc_pre.back()));
            c.pooled.push_back(maxpool2(c.enc_act.back()));
            x = &c.pooled.back();
        }
        BasicTensor<T> r = c.pooled.back();
        for (std::size_t k = 0; k < 3; ++k) {
            c.sens_in.push_back(r);
            c.sens_pre.push_back(conv2d(r, sensitive_[k]));
            r = relu(c.sens_pre.back());
        }
        c.sensitive = r;
        for (std::size_t d = 0; d < levels; ++d) {
            const std::size_t l = levels - 1 - d;
            const BasicTensor<T>& below = d == 0 ? c.sensitive : c.dec_act.back();
            c.dec_up.push_back(upsample2(below));
            c.dec_cat.push_back(concat_channels(c.dec_up.back(), c.enc_act[l]));
            c.dec_pre.push_back(conv2d(c.dec_cat.back(), decoder_[d]));
            c.dec_act.push_back(relu(c.dec_pre.back()));
        }
        c.logits = conv2d(c.dec_act.back(), head_);
        c.saliency = sigmoid(c.logits);
        return c;
    }

    /// Backpropagates d(loss)/d(logits) plus any extra gradient arriving at R
    /// from the branches. Returns d(loss)/d(image).
    BasicTensor<T> backward_backbone(const BackboneCache<T>& c, const BasicTensor<T>& logit_grad,
                                     const BasicTensor<T>* sensitive_grad = nullptr) {
        const std::size_t levels = config_.levels();
        std::vector<BasicTensor<T>> skip_grad(levels);
        BasicTensor<T> g = conv2d_backward(c.dec_act.back(), head_, logit_grad);
        for (std::size_t d = levels; d-- > 0;) {
            const std::size_t l = levels - 1 - d;
            g = relu_backward(c.dec_pre[d], g);
            g = conv2d_backward(c.dec_cat[d], decoder_[d], g);
            auto [g_up, g_skip] = concat_backward(c.dec_up[d].shape(), c.enc_act[l].shape(), g);
            skip_grad[l] = std::move(g_skip);
            const Shape below = d == 0 ? c.sensitive.shape() : c.dec_act[d - 1].shape();
            g = upsample2_backward(below, g_up);
        }
        if (sensitive_grad) add_into(g, *sensitive_grad);
        for (std::size_t k = 3; k-- > 0;) {
            g = relu_backward(c.sens_pre[k], g);
            g = conv2d_backward(c.sens_in[k], sensitive_[k], g);
        }
        for (std::size_t l = levels; l-- > 0;) {
            g = maxpool2_backward(c.enc_act[l], g);
            add_into(g, skip_grad[l]);
            g = relu_backward(c.enc_pre[l], g);
            g = conv2d_backward(l == 0 ? c.input : c.pooled[l - 1], encoder_[l], g);
        }
        return g;
    }

    /// Evaluation path: backbone only, returns P as [1, S, S].
    BasicTensor<T> predict(const BasicTensor<T>& image) const { return forward_backbone(image).saliency; }

    // --------------------------------------------------------------------- RPN

    RpnOutput<T> forward_rpn(const BasicTensor<T>& sensitive) const {
        RpnOutput<T> o;
        o.pre = conv2d(sensitive, rpn_conv_);
        o.act = relu(o.pre);
        o.conf_logits = conv2d(o.act, rpn_conf_);
        o.conf = sigmoid(o.conf_logits);
        o.offsets = conv2d(o.act, rpn_loc_);
        return o;
    }

    /// Takes anchor-ordered gradients w.r.t. confidence logits and offsets;
    /// returns the gradient w.r.t. R.
    BasicTensor<T> backward_rpn(const BasicTensor<T>& sensitive, const RpnOutput<T>& o,
                                std::span<const double> conf_logit_grad, std::span<const double> offset_grad) {
        const std::size_t a_count = o.conf.extent(0), cells = o.conf.extent(1) * o.conf.extent(2);
        BasicTensor<T> g_conf(o.conf_logits.shape());
        BasicTensor<T> g_loc(o.offsets.shape());
        for (std::size_t c = 0; c < cells; ++c) {
            for (std::size_t a = 0; a < a_count; ++a) {
                g_conf[a * cells + c] = static_cast<T>(conf_logit_grad[c * a_count + a]);
                for (std::size_t k = 0; k < 4; ++k)
                    g_loc[(a * 4 + k) * cells + c] = static_cast<T>(offset_grad[(c * a_count + a) * 4 + k]);
            }
        }
        BasicTensor<T> g = conv2d_backward(o.act, rpn_conf_, g_conf);
        add_into(g, conv2d_backward(o.act, rpn_loc_, g_loc));
        g = relu_backward(o.pre, g);
        return conv2d_backward(sensitive, rpn_conv_, g);
    }

    // --------------------------------------------------------------------- RFM

    Box to_feature_box(const Box& image_box) const {
        const double s = double(config_.feature_side()) / double(config_.side);
        return image_box.scaled(s, s);
    }

    RfmCache<T> forward_rfm_cached(const BasicTensor<T>& sensitive, const Box& image_box) const {
        if (!image_box.valid()) throw std::invalid_argument("forward_rfm: degenerate box");
        RfmCache<T> c;
        c.feature_box = to_feature_box(image_box);
        c.pooled = roi_align(sensitive, c.feature_box, config_.roi);
        c.hidden_pre = fully_connected(c.pooled, rfm_fc1_);
        c.hidden = relu(c.hidden_pre);
        c.embedding = fully_connected(c.hidden, rfm_fc2_);
        return c;
    }

    std::vector<T> forward_rfm(const BasicTensor<T>& sensitive, const Box& image_box) const {
        const auto c = forward_rfm_cached(sensitive, image_box);
        return {c.embedding.values().begin(), c.embedding.values().end()};
    }

    /// Accumulates the gradient w.r.t. R into `sensitive_grad`.
    void backward_rfm(const BasicTensor<T>& sensitive, const RfmCache<T>& c, std::span<const double> embedding_grad,
                      BasicTensor<T>& sensitive_grad) {
        BasicTensor<T> g(c.embedding.shape());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<T>(embedding_grad[i]);
        g = fully_connected_backward(c.hidden, rfm_fc2_, g);
        g = relu_backward(c.hidden_pre, g);
        g = fully_connected_backward(c.pooled, rfm_fc1_, g);
        add_into(sensitive_grad, roi_align_backward(sensitive, c.feature_box, config_.roi, g));
    }

    // ---------------------------------------------------------------- training

    /// Forward + backward of the total loss for one example. Gradients accumulate;
    /// parameters are not updated. A non-null `fixed` batch bypasses sampling.
    template <typename Rng>
    StepStats accumulate_gradients(const TrainingExample<T>& ex, const TrainOptions& opt, Rng& rng,
                                   const TripletBatch* fixed = nullptr) {
        const std::size_t s = config_.side;
        if (ex.mask.size() != s * s) throw ShapeError("training mask does not match the input side");
        StepStats stats;
        const BackboneCache<T> bb = forward_backbone(ex.image);

        // Decoder: mean BCE on P, gradient through the sigmoid in logit space.
        stats.losses.decoder = bce_loss<T>(bb.saliency.values(), ex.mask, opt.loss.bce_epsilon);
        BasicTensor<T> logit_grad(bb.logits.shape());
        const double inv_pixels = 1.0 / double(s * s);
        for (std::size_t i = 0; i < logit_grad.size(); ++i) {
            logit_grad[i] = static_cast<T>(opt.loss.alpha * (double(bb.saliency[i]) - double(ex.mask[i])) * inv_pixels);
        }

        BasicTensor<T> r_grad(bb.sensitive.shape());
        const bool need_rpn = opt.loss.beta > 0 || (opt.loss.gamma > 0 && opt.mode == SamplingMode::online && !fixed);
        std::vector<Box> proposals;
        std::vector<double> region_losses;
        if (need_rpn && !ex.cosalient.empty()) {
            const RpnOutput<T> rpn = forward_rpn(bb.sensitive);
            const auto conf = rpn.anchor_confidences();
            const auto offs = rpn.anchor_offsets();
            const MatchAssignment match =
                match_anchors(anchors_.anchors, ex.cosalient, opt.rpn_positive_iou, opt.rpn_negative_iou);
            RpnLoss rl = rpn_loss<T>(match, conf, offs, ex.cosalient, anchors_.anchors, opt.loss);
            stats.losses.rpn = rl.total;
            stats.matched_anchors = rl.matched;
            if (opt.loss.beta > 0) {
                for (auto& v : rl.conf_logit_grad) v *= opt.loss.beta;
                for (auto& v : rl.offset_grad) v *= opt.loss.beta;
                add_into(r_grad, backward_rpn(bb.sensitive, rpn, rl.conf_logit_grad, rl.offset_grad));
            }
            if (opt.mode == SamplingMode::online && opt.loss.gamma > 0 && !fixed) {
                region_losses = rpn_region_losses<T>(match, conf, offs, ex.cosalient, anchors_.anchors,
                                                     opt.loss.bce_epsilon);
                proposals.reserve(anchors_.anchors.size());
                for (std::size_t a = 0; a < anchors_.anchors.size(); ++a) {
                    const OffsetVec t{double(offs[4 * a]), double(offs[4 * a + 1]), double(offs[4 * a + 2]),
                                      double(offs[4 * a + 3])};
                    proposals.push_back(decode(t, anchors_.anchors[a]));
                }
            }
        }

        if (opt.loss.gamma > 0) {
            TripletBatch sampled;
            const TripletBatch* batch = fixed;
            if (!batch) {
                if (opt.mode == SamplingMode::offline) {
                    sampled = offline_triplets(ex.cosalient, ex.distractors, double(s), double(s), opt.sampling, rng);
                } else {
                    sampled = online_triplets(ex.cosalient, proposals, region_losses, double(s), double(s), opt.sampling);
                }
                batch = &sampled;
            }
            stats.positives = batch->positives.size();
            stats.negatives = batch->negatives.size();
            stats.triplets = batch->triplets.size();
            stats.rfm_empty = batch->triplets.empty();
            if (!batch->triplets.empty()) {
                std::vector<Box> regions;
                std::vector<TripletTerm> terms;
                auto region_index = [&](const Box& b) {
                    for (std::size_t i = 0; i < regions.size(); ++i)
                        if (regions[i] == b) return i;
                    regions.push_back(b);
                    return regions.size() - 1;
                };
                for (const auto& t : batch->triplets) {
                    TripletTerm term;
                    term.anchor = region_index(t.anchor);
                    term.positive = region_index(t.positive);
                    term.negative = region_index(t.negative);
                    term.weight = t.weight;
                    terms.push_back(term);
                }
                std::vector<RfmCache<T>> caches;
                std::vector<std::vector<T>> embeddings;
                caches.reserve(regions.size());
                for (const auto& b : regions) {
                    caches.push_back(forward_rfm_cached(bb.sensitive, b));
                    embeddings.emplace_back(caches.back().embedding.values().begin(),
                                            caches.back().embedding.values().end());
                }
                RfmLoss rf = rfm_loss<T>(terms, embeddings, opt.loss.margin);
                stats.losses.rfm = rf.value;
                for (std::size_t i = 0; i < regions.size(); ++i) {
                    bool any = false;
                    for (auto& v : rf.grads[i]) {
                        v *= opt.loss.gamma;
                        any = any || v != 0.0;
                    }
                    if (any) backward_rfm(bb.sensitive, caches[i], rf.grads[i], r_grad);
                }
            }
        }

        stats.losses.total = total_loss(stats.losses.decoder, stats.losses.rpn, stats.losses.rfm, opt.loss);
        backward_backbone(bb, logit_grad, &r_grad);
        return stats;
    }

    /// Loss value only, with the same sampling semantics as accumulate_gradients.
    /// Used by finite-difference checks (pass a fixed batch).
    LossBreakdown evaluate_loss(const TrainingExample<T>& ex, const TrainOptions& opt, const TripletBatch& fixed) const {
        const BackboneCache<T> bb = forward_backbone(ex.image);
        LossBreakdown out;
        out.decoder = bce_loss<T>(bb.saliency.values(), ex.mask, opt.loss.bce_epsilon);
        if (opt.loss.beta > 0) {
            const RpnOutput<T> rpn = forward_rpn(bb.sensitive);
            const auto conf = rpn.anchor_confidences();
            const auto offs = rpn.anchor_offsets();
            const MatchAssignment match =
                match_anchors(anchors_.anchors, ex.cosalient, opt.rpn_positive_iou, opt.rpn_negative_iou);
            out.rpn = rpn_loss<T>(match, conf, offs, ex.cosalient, anchors_.anchors, opt.loss).total;
        }
        if (opt.loss.gamma > 0 && !fixed.triplets.empty()) {
            std::vector<std::vector<T>> embeddings;
            std::vector<TripletTerm> terms;
            for (const auto& t : fixed.triplets) {
                const std::size_t base = embeddings.size();
                embeddings.push_back(forward_rfm(bb.sensitive, t.anchor));
                embeddings.push_back(forward_rfm(bb.sensitive, t.positive));
                embeddings.push_back(forward_rfm(bb.sensitive, t.negative));
                terms.push_back({base, base + 1, base + 2, t.weight});
            }
            out.rfm = rfm_loss<T>(terms, embeddings, opt.loss.margin).value;
        }
        out.total = total_loss(out.decoder, out.rpn, out.rfm, opt.loss);
        return out;
    }

    /// One SGD iteration: zero grads, forward/backward, update.
    template <typename Rng>
    StepStats train_step(const TrainingExample<T>& ex, const TrainOptions& opt, Rng& rng) {
        zero_grad();
        StepStats stats = accumulate_gradients(ex, opt, rng);
        if (!std::isfinite(stats.losses.total)) throw NonFiniteGradient("non-finite training loss");
        sgd_step<T>(parameters(), opt.learning_rate, opt.weight_decay, opt.max_grad_norm);
        return stats;
    }

    // -------------------------------------------------------------- checkpoint

    std::vector<CheckpointRecord> to_records(bool include_branches = true) const {
        std::vector<CheckpointRecord> out;
        auto* self = const_cast<Network*>(this);
        auto add = [&](const LayerParams<T>* p) {
            out.push_back({p->name + ".weight", p->weight.template cast<float>()});
            out.push_back({p->name + ".bias", p->bias.template cast<float>()});
        };
        for (auto* p : self->backbone_parameters()) add(p);
        if (include_branches)
            for (auto* p : self->branch_parameters()) add(p);
        return out;
    }

    /// Records for absent layers leave those layers untouched.
    void load_records(const std::vector<CheckpointRecord>& records) {
        std::map<std::string, BasicTensor<T>*> slots;
        for (auto* p : parameters()) {
            slots[p->name + ".weight"] = &p->weight;
            slots[p->name + ".bias"] = &p->bias;
        }
        for (const auto& r : records) {
            auto it = slots.find(r.name);
            if (it == slots.end()) throw CheckpointError("checkpoint record '" + r.name + "' matches no layer");
            if (it->second->shape() != r.tensor.shape()) {
                throw CheckpointError("checkpoint record '" + r.name + "' has shape " + to_string(r.tensor.shape()) +
                                      ", layer expects " + to_string(it->second->shape()));
            }
            *it->second = r.tensor.template cast<T>();
        }
    }

    void save(const std::string& path, bool include_branches = true) const {
        save_checkpoint(path, to_records(include_branches));
    }
    void load(const std::string& path) { load_records(load_checkpoint(path)); }

private:
    static void add_into(BasicTensor<T>& dst, const BasicTensor<T>& src) {
        require_shape(src.shape(), dst.shape(), "gradient accumulation");
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }

    NetworkConfig config_;
    std::vector<LayerParams<T>> encoder_, sensitive_, decoder_;
    LayerParams<T> head_;
    LayerParams<T> rpn_conv_, rpn_conf_, rpn_loc_;
    LayerParams<T> rfm_fc1_, rfm_fc2_;
    AnchorGrid anchors_;
};

}  // namespace cosal
