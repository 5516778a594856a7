#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "cosal/layers.hpp"

namespace cosal {

class NonFiniteGradient : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <typename T, typename Range>
double gradient_norm(Range&& layers) {
    double acc = 0.0;
    for (const LayerParams<T>* p : layers) {
        for (auto g : p->weight_grad.values()) acc += double(g) * double(g);
        for (auto g : p->bias_grad.values()) acc += double(g) * double(g);
    }
    return std::sqrt(acc);
}

/// Plain SGD with L2 weight decay: w <- w - lr * (grad + decay * w), then grads are zeroed.
/// With max_norm > 0 the gradient is first rescaled so its global L2 norm is at most max_norm.
/// Throws NonFiniteGradient, leaving the parameters untouched, if any gradient is NaN/Inf.
template <typename T, typename Range>
void sgd_step(Range&& layers, double learning_rate, double weight_decay, double max_norm = 0.0) {
    for (LayerParams<T>* p : layers) {
        if (!p->weight_grad.all_finite() || !p->bias_grad.all_finite()) {
            throw NonFiniteGradient("non-finite gradient in layer '" + p->name + "'");
        }
    }
    if (max_norm > 0.0) {
        const double norm = gradient_norm<T>(layers);
        if (norm > max_norm) {
            const T scale = static_cast<T>(max_norm / norm);
            for (LayerParams<T>* p : layers) {
                for (auto& g : p->weight_grad.values()) g *= scale;
                for (auto& g : p->bias_grad.values()) g *= scale;
            }
        }
    }
    const T lr = static_cast<T>(learning_rate);
    const T wd = static_cast<T>(weight_decay);
    for (LayerParams<T>* p : layers) {
        for (std::size_t i = 0; i < p->weight.size(); ++i) p->weight[i] -= lr * (p->weight_grad[i] + wd * p->weight[i]);
        for (std::size_t i = 0; i < p->bias.size(); ++i) p->bias[i] -= lr * (p->bias_grad[i] + wd * p->bias[i]);
        p->zero_grad();
    }
}

template <typename T>
void sgd_step(LayerParams<T>& layer, double learning_rate, double weight_decay, double max_norm = 0.0) {
    LayerParams<T>* one[] = {&layer};
    sgd_step<T>(one, learning_rate, weight_decay, max_norm);
}

}  // namespace cosal
