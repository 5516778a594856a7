#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cosal/layers.hpp"

namespace cosal {

struct GradCheckReport {
    bool passed = true;
    double tolerance = 0.0;
    double worst_error = 0.0;
    std::string worst_location;
    std::size_t checked = 0;
};

/// Relative error used throughout: |analytic - numeric| / max(1, |numeric|).
inline double gradient_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

inline void record(GradCheckReport& report, double analytic, double numeric, const std::string& where) {
    const double err = gradient_error(analytic, numeric);
    ++report.checked;
    // NaN compares false everywhere; treat it as the worst possible error.
    if (report.checked == 1 || !(err <= report.worst_error)) {
        report.worst_error = std::isfinite(err) ? err : INFINITY;
        report.worst_location = where;
    }
    if (!(err <= report.tolerance)) report.passed = false;
}

/// Central finite difference of a scalar function with respect to one value.
inline double central_difference(double& value, const std::function<double()>& f, double step) {
    const double saved = value;
    value = saved + step;
    const double plus = f();
    value = saved - step;
    const double minus = f();
    value = saved;
    return (plus - minus) / (2.0 * step);
}

/// Checks one layer's backward against central differences of
/// loss = sum(forward(inputs) * upstream) for a random upstream tensor.
inline GradCheckReport grad_check(LayerKind kind, LayerParams<double>* params, std::vector<Tensor> inputs,
                                  double tolerance, std::uint64_t seed = 0, double step = 1e-5) {
    GradCheckReport report;
    report.tolerance = tolerance;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);

    const Tensor out = forward<double>(kind, params, inputs);
    Tensor upstream(out.shape());
    for (auto& v : upstream.values()) v = dist(rng);

    auto loss = [&]() {
        const Tensor y = forward<double>(kind, params, inputs);
        double acc = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * upstream[i];
        return acc;
    };

    if (params) params->zero_grad();
    const std::vector<Tensor> input_grads = backward<double>(kind, params, inputs, upstream);

    const std::string layer = layer_name(kind);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double numeric = central_difference(inputs[k][i], loss, step);
            record(report, input_grads[k][i], numeric,
                   layer + " input " + std::to_string(k) + "[" + std::to_string(i) + "]");
        }
    }
    if (params) {
        for (std::size_t i = 0; i < params->weight.size(); ++i) {
            const double numeric = central_difference(params->weight[i], loss, step);
            record(report, params->weight_grad[i], numeric, layer + " weight[" + std::to_string(i) + "]");
        }
        for (std::size_t i = 0; i < params->bias.size(); ++i) {
            const double numeric = central_difference(params->bias[i], loss, step);
            record(report, params->bias_grad[i], numeric, layer + " bias[" + std::to_string(i) + "]");
        }
    }
    return report;
}

struct NamedGradCheck {
    std::string name;
    GradCheckReport report;
};

/// Every layer kind on small random inputs. relu inputs stay 0.1 away from the
/// kink and maxpool inputs are pairwise separated, so differences are smooth.
inline std::vector<NamedGradCheck> layer_grad_suite(std::uint64_t seed, double tolerance = 1e-4) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    auto random = [&](Shape shape) {
        Tensor t(std::move(shape));
        for (auto& v : t.values()) v = dist(rng);
        return t;
    };
    std::vector<NamedGradCheck> out;
    auto run = [&](LayerKind kind, LayerParams<double>* params, std::vector<Tensor> inputs) {
        out.push_back({layer_name(kind), grad_check(kind, params, std::move(inputs), tolerance, rng())});
    };

    auto c3 = make_layer<double>("c3", LayerKind::conv3x3, 2, 3, rng);
    for (auto& b : c3.bias.values()) b = dist(rng);
    run(LayerKind::conv3x3, &c3, {random({2, 5, 5})});
    auto c1 = make_layer<double>("c1", LayerKind::conv1x1, 3, 2, rng);
    for (auto& b : c1.bias.values()) b = dist(rng);
    run(LayerKind::conv1x1, &c1, {random({3, 4, 4})});
    auto fc = make_layer<double>("fc", LayerKind::fully_connected, 6, 4, rng);
    for (auto& b : fc.bias.values()) b = dist(rng);
    run(LayerKind::fully_connected, &fc, {random({6})});

    Tensor r = random({2, 4, 4});
    for (auto& v : r.values()) v += v < 0 ? -0.1 : 0.1;
    run(LayerKind::relu, nullptr, {r});
    run(LayerKind::sigmoid, nullptr, {random({2, 3, 3})});

    Tensor m({2, 4, 4});
    std::vector<double> levels(m.size());
    for (std::size_t i = 0; i < levels.size(); ++i) levels[i] = -1.0 + 0.05 * double(i);
    std::shuffle(levels.begin(), levels.end(), rng);
    std::copy(levels.begin(), levels.end(), m.values().begin());
    run(LayerKind::maxpool2, nullptr, {m});
    run(LayerKind::upsample2, nullptr, {random({2, 2, 3})});
    run(LayerKind::concat, nullptr, {random({1, 3, 3}), random({2, 3, 3})});
    return out;
}

}  // namespace cosal
