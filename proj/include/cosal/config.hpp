#pragma once

// Run configuration as a flat `key = value` file. '#' starts a comment.
// `schedule = published` switches the optimiser to lr 1e-5 -> 1e-6 after 30k of
// 80k iterations; explicit keys still override it regardless of order.

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cosal/network.hpp"

namespace cosal {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct OptimizerConfig {
    double learning_rate = 0.05;
    double weight_decay = 1e-4;
    double max_grad_norm = 10.0;
    std::size_t lr_drop_iteration = 1500;
    double lr_after_drop = 0.01;
    std::size_t iterations = 2000;
    std::size_t checkpoint_every = 500;

    double rate_at(std::size_t iteration) const {
        return iteration > lr_drop_iteration ? lr_after_drop : learning_rate;
    }
};

struct RunConfig {
    NetworkConfig network;
    TrainOptions train;
    OptimizerConfig optimizer;
    bool augment = true;
    std::uint64_t seed = 0;
    std::string data;  // dataset root
    std::string out;   // output directory

    TrainOptions options_at(std::size_t iteration) const {
        TrainOptions o = train;
        o.learning_rate = optimizer.rate_at(iteration);
        o.weight_decay = optimizer.weight_decay;
        o.max_grad_norm = optimizer.max_grad_norm;
        return o;
    }
};

inline void apply_published_schedule(OptimizerConfig& o) {
    o.learning_rate = 1e-5;
    o.weight_decay = 1e-4;
    o.lr_drop_iteration = 30000;
    o.lr_after_drop = 1e-6;
    o.max_grad_norm = 0.0;
    o.iterations = 80000;
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    }
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
    const double d = to_double(key, v);
    if (d < 0 || d != std::floor(d)) throw ConfigError("config key '" + key + "': expected a non-negative integer");
    return static_cast<std::size_t>(d);
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

}  // namespace detail

inline SamplingMode parse_mode(const std::string& v) {
    if (v == "offline") return SamplingMode::offline;
    if (v == "online") return SamplingMode::online;
    throw ConfigError("sampling mode must be 'offline' or 'online', got '" + v + "'");
}

inline const char* mode_name(SamplingMode m) { return m == SamplingMode::offline ? "offline" : "online"; }

/// Applies one key to the config. Unknown keys are rejected.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& v) {
    using namespace detail;
    auto& n = c.network;
    auto& t = c.train;
    auto& o = c.optimizer;
    if (key == "side") n.side = to_size(key, v);
    else if (key == "widths") {
        n.widths.clear();
        for (const auto& s : split_list(v)) n.widths.push_back(to_size(key, s));
    } else if (key == "sensitive_channels") n.sensitive_channels = to_size(key, v);
    else if (key == "rfm_hidden") n.rfm_hidden = to_size(key, v);
    else if (key == "embedding") n.embedding = to_size(key, v);
    else if (key == "anchor_scales") {
        n.anchors.scales.clear();
        for (const auto& s : split_list(v)) n.anchors.scales.push_back(to_double(key, s));
    } else if (key == "anchor_ratios") {
        n.anchors.ratios.clear();
        for (const auto& s : split_list(v)) n.anchors.ratios.push_back(to_double(key, s));
    } else if (key == "roi_bins") n.roi.bins_h = n.roi.bins_w = to_size(key, v);
    else if (key == "roi_samples") n.roi.samples_h = n.roi.samples_w = to_size(key, v);
    else if (key == "roi_aggregation") {
        if (v == "average") n.roi.aggregation = RoiAggregation::average;
        else if (v == "max") n.roi.aggregation = RoiAggregation::max;
        else throw ConfigError("roi_aggregation must be 'average' or 'max'");
    } else if (key == "alpha") t.loss.alpha = to_double(key, v);
    else if (key == "beta") t.loss.beta = to_double(key, v);
    else if (key == "gamma") t.loss.gamma = to_double(key, v);
    else if (key == "alpha_loc") t.loss.alpha_loc = to_double(key, v);
    else if (key == "margin") t.loss.margin = to_double(key, v);
    else if (key == "mode") t.mode = parse_mode(v);
    else if (key == "positive_iou") t.sampling.positive_iou = to_double(key, v);
    else if (key == "negative_iou") t.sampling.negative_iou = to_double(key, v);
    else if (key == "rpn_positive_iou") t.rpn_positive_iou = to_double(key, v);
    else if (key == "rpn_negative_iou") t.rpn_negative_iou = to_double(key, v);
    else if (key == "online_nms_iou") t.sampling.online_nms_iou = to_double(key, v);
    else if (key == "positives") t.sampling.positives = to_size(key, v);
    else if (key == "negatives") t.sampling.negatives = to_size(key, v);
    else if (key == "triplets") t.sampling.triplets = to_size(key, v);
    else if (key == "region_min_side") t.sampling.min_side_fraction = to_double(key, v);
    else if (key == "region_max_side") t.sampling.max_side_fraction = to_double(key, v);
    else if (key == "learning_rate") o.learning_rate = to_double(key, v);
    else if (key == "weight_decay") o.weight_decay = to_double(key, v);
    else if (key == "max_grad_norm") o.max_grad_norm = to_double(key, v);
    else if (key == "lr_drop_iteration") o.lr_drop_iteration = to_size(key, v);
    else if (key == "lr_after_drop") o.lr_after_drop = to_double(key, v);
    else if (key == "iterations") o.iterations = to_size(key, v);
    else if (key == "checkpoint_every") o.checkpoint_every = to_size(key, v);
    else if (key == "augment") c.augment = to_bool(key, v);
    else if (key == "seed") c.seed = to_size(key, v);
    else if (key == "data") c.data = v;
    else if (key == "out") c.out = v;
    else if (key == "schedule") {
        if (v == "published") apply_published_schedule(o);
        else if (v != "desk") throw ConfigError("schedule must be 'desk' or 'published'");
    } else throw ConfigError("unknown config key '" + key + "'");
}

inline RunConfig parse_config(std::istream& in, RunConfig base = {}) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        entries.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    for (const auto& [k, v] : entries)
        if (k == "schedule") set_config_value(base, k, v);
    for (const auto& [k, v] : entries)
        if (k != "schedule") set_config_value(base, k, v);
    base.network.validate();
    base.train.loss.validate();
    return base;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse_config(in);
}

}  // namespace cosal
