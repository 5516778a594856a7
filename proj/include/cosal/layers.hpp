#pragma once

// Layer inventory for the co-saliency network: 3x3 / 1x1 convolutions, relu,
// sigmoid, 2x2 max pooling, nearest-neighbour x2 upsampling, channel concat
// and fully-connected. Every forward has a hand-written backward; parameter
// gradients accumulate into LayerParams until zero_grad().

#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cosal/tensor.hpp"

namespace cosal {

enum class LayerKind { conv3x3, conv1x1, relu, sigmoid, maxpool2, upsample2, concat, fully_connected };

inline const char* layer_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv3x3: return "conv3x3";
        case LayerKind::conv1x1: return "conv1x1";
        case LayerKind::relu: return "relu";
        case LayerKind::sigmoid: return "sigmoid";
        case LayerKind::maxpool2: return "maxpool2";
        case LayerKind::upsample2: return "upsample2";
        case LayerKind::concat: return "concat";
        case LayerKind::fully_connected: return "fully_connected";
    }
    return "unknown";
}

inline bool has_params(LayerKind kind) {
    return kind == LayerKind::conv3x3 || kind == LayerKind::conv1x1 || kind == LayerKind::fully_connected;
}

// Copyable atomic counter; parameter reads may happen from parallel predictors.
class ReadCounter {
public:
    ReadCounter() = default;
    ReadCounter(const ReadCounter& other) : value_(other.get()) {}
    ReadCounter& operator=(const ReadCounter& other) {
        value_.store(other.get(), std::memory_order_relaxed);
        return *this;
    }
    void bump() const noexcept { value_.fetch_add(1, std::memory_order_relaxed); }
    std::uint64_t get() const noexcept { return value_.load(std::memory_order_relaxed); }

private:
    mutable std::atomic<std::uint64_t> value_{0};
};

/// Weights and accumulated gradients of one parametrised layer.
/// Convolutions store weights as [out, in, k, k]; fully-connected as [out, in].
template <typename T>
struct LayerParams {
    std::string name;
    LayerKind kind = LayerKind::conv3x3;
    BasicTensor<T> weight;
    BasicTensor<T> bias;
    BasicTensor<T> weight_grad;
    BasicTensor<T> bias_grad;
    ReadCounter reads;

    std::size_t out_features() const { return weight.extent(0); }
    std::size_t in_features() const { return weight.extent(1); }

    void zero_grad() {
        weight_grad.fill(T{0});
        bias_grad.fill(T{0});
    }
};

inline std::size_t kernel_size(LayerKind kind) { return kind == LayerKind::conv3x3 ? 3 : 1; }

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero bias.
template <typename T, typename Rng>
LayerParams<T> make_layer(std::string name, LayerKind kind, std::size_t in, std::size_t out, Rng& rng) {
    if (!has_params(kind)) throw std::invalid_argument(std::string("layer kind has no parameters: ") + layer_name(kind));
    if (in == 0 || out == 0) throw std::invalid_argument("layer '" + name + "' needs positive in/out features");
    LayerParams<T> p;
    p.name = std::move(name);
    p.kind = kind;
    Shape wshape = kind == LayerKind::fully_connected ? Shape{out, in}
                                                      : Shape{out, in, kernel_size(kind), kernel_size(kind)};
    const double receptive = kind == LayerKind::fully_connected ? 1.0 : double(kernel_size(kind) * kernel_size(kind));
    const double limit = std::sqrt(6.0 / (double(in) * receptive + double(out) * receptive));
    std::uniform_real_distribution<double> dist(-limit, limit);
    std::vector<T> w(element_count(wshape));
    for (auto& v : w) v = static_cast<T>(dist(rng));
    p.weight = BasicTensor<T>(wshape, std::move(w));
    p.bias = BasicTensor<T>({out});
    p.weight_grad = BasicTensor<T>(wshape);
    p.bias_grad = BasicTensor<T>({out});
    return p;
}

namespace detail {

template <typename T>
void check_conv(const BasicTensor<T>& in, const LayerParams<T>& p) {
    const std::string where = "layer '" + p.name + "' (" + layer_name(p.kind) + ")";
    require_rank(in.shape(), 3, where);
    if (p.weight.rank() != 4 || p.weight.extent(1) != in.extent(0) || p.weight.extent(2) != kernel_size(p.kind)) {
        throw ShapeError(where + ": input " + to_string(in.shape()) + " incompatible with weight " +
                         to_string(p.weight.shape()));
    }
}

}  // namespace detail

/// Same-size convolution: 3x3 with zero padding 1, or 1x1. Stride 1.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& in, const LayerParams<T>& p) {
    detail::check_conv(in, p);
    p.reads.bump();
    const std::size_t cin = in.extent(0), h = in.extent(1), w = in.extent(2);
    const std::size_t cout = p.weight.extent(0);
    const auto k = static_cast<std::ptrdiff_t>(kernel_size(p.kind));
    const std::ptrdiff_t pad = k / 2;
    BasicTensor<T> out({cout, h, w});
    const T* wt = p.weight.data();
    for (std::size_t o = 0; o < cout; ++o) {
        T* op = out.data() + o * h * w;
        std::fill(op, op + h * w, p.bias[o]);
        for (std::size_t c = 0; c < cin; ++c) {
            const T* ip = in.data() + c * h * w;
            for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
                for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
                    const T wv = wt[((o * cin + c) * k + ky) * k + kx];
                    const std::ptrdiff_t dy = ky - pad, dx = kx - pad;
                    const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
                    const std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(h, std::ptrdiff_t(h) - dy);
                    const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
                    const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(w, std::ptrdiff_t(w) - dx);
                    for (std::ptrdiff_t y = y0; y < y1; ++y) {
                        T* orow = op + y * w;
                        const T* irow = ip + (y + dy) * std::ptrdiff_t(w) + dx;
                        for (std::ptrdiff_t x = x0; x < x1; ++x) orow[x] += wv * irow[x];
                    }
                }
            }
        }
    }
    return out;
}

/// Returns d(loss)/d(in); accumulates weight and bias gradients into p.
template <typename T>
BasicTensor<T> conv2d_backward(const BasicTensor<T>& in, LayerParams<T>& p, const BasicTensor<T>& upstream) {
    detail::check_conv(in, p);
    const std::size_t cin = in.extent(0), h = in.extent(1), w = in.extent(2);
    const std::size_t cout = p.weight.extent(0);
    require_shape(upstream.shape(), {cout, h, w}, "layer '" + p.name + "' backward upstream");
    const auto k = static_cast<std::ptrdiff_t>(kernel_size(p.kind));
    const std::ptrdiff_t pad = k / 2;
    BasicTensor<T> gin(in.shape());
    const T* wt = p.weight.data();
    T* gw = p.weight_grad.data();
    for (std::size_t o = 0; o < cout; ++o) {
        const T* gp = upstream.data() + o * h * w;
        T bsum{0};
        for (std::size_t i = 0; i < h * w; ++i) bsum += gp[i];
        p.bias_grad[o] += bsum;
        for (std::size_t c = 0; c < cin; ++c) {
            const T* ip = in.data() + c * h * w;
            T* gip = gin.data() + c * h * w;
            for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
                for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
                    const std::size_t widx = ((o * cin + c) * k + ky) * k + kx;
                    const T wv = wt[widx];
                    const std::ptrdiff_t dy = ky - pad, dx = kx - pad;
                    const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
                    const std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(h, std::ptrdiff_t(h) - dy);
                    const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
                    const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(w, std::ptrdiff_t(w) - dx);
                    T acc{0};
                    for (std::ptrdiff_t y = y0; y < y1; ++y) {
                        const T* grow = gp + y * w;
                        const std::ptrdiff_t off = (y + dy) * std::ptrdiff_t(w) + dx;
                        const T* irow = ip + off;
                        T* girow = gip + off;
                        for (std::ptrdiff_t x = x0; x < x1; ++x) {
                            acc += grow[x] * irow[x];
                            girow[x] += wv * grow[x];
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    return gin;
}

template <typename T>
BasicTensor<T> fully_connected(const BasicTensor<T>& in, const LayerParams<T>& p) {
    if (p.weight.rank() != 2 || p.weight.extent(1) != in.size()) {
        throw ShapeError("layer '" + p.name + "' (fully_connected): input " + to_string(in.shape()) +
                         " incompatible with weight " + to_string(p.weight.shape()));
    }
    p.reads.bump();
    const std::size_t n_out = p.weight.extent(0), n_in = in.size();
    BasicTensor<T> out({n_out});
    for (std::size_t o = 0; o < n_out; ++o) {
        const T* row = p.weight.data() + o * n_in;
        T acc = p.bias[o];
        for (std::size_t i = 0; i < n_in; ++i) acc += row[i] * in[i];
        out[o] = acc;
    }
    return out;
}

template <typename T>
BasicTensor<T> fully_connected_backward(const BasicTensor<T>& in, LayerParams<T>& p, const BasicTensor<T>& upstream) {
    if (p.weight.rank() != 2 || p.weight.extent(1) != in.size()) {
        throw ShapeError("layer '" + p.name + "' (fully_connected) backward: input " + to_string(in.shape()) +
                         " incompatible with weight " + to_string(p.weight.shape()));
    }
    const std::size_t n_out = p.weight.extent(0), n_in = in.size();
    require_shape(upstream.shape(), {n_out}, "layer '" + p.name + "' backward upstream");
    BasicTensor<T> gin(in.shape());
    for (std::size_t o = 0; o < n_out; ++o) {
        const T g = upstream[o];
        p.bias_grad[o] += g;
        const T* row = p.weight.data() + o * n_in;
        T* grow = p.weight_grad.data() + o * n_in;
        for (std::size_t i = 0; i < n_in; ++i) {
            grow[i] += g * in[i];
            gin[i] += g * row[i];
        }
    }
    return gin;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& in) {
    BasicTensor<T> out = in;
    for (auto& v : out.values()) v = v > T{0} ? v : T{0};
    return out;
}

// Subgradient 0 at the kink.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& in, const BasicTensor<T>& upstream) {
    require_shape(upstream.shape(), in.shape(), "relu backward upstream");
    BasicTensor<T> g = upstream;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(in[i] > T{0})) g[i] = T{0};
    }
    return g;
}

template <typename T>
T sigmoid(T x) {
    if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
    const T e = std::exp(x);
    return e / (T{1} + e);
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& in) {
    BasicTensor<T> out = in;
    for (auto& v : out.values()) v = sigmoid(v);
    return out;
}

template <typename T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& in, const BasicTensor<T>& upstream) {
    require_shape(upstream.shape(), in.shape(), "sigmoid backward upstream");
    BasicTensor<T> g = upstream;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const T s = sigmoid(in[i]);
        g[i] *= s * (T{1} - s);
    }
    return g;
}

template <typename T>
BasicTensor<T> maxpool2(const BasicTensor<T>& in) {
    require_rank(in.shape(), 3, "maxpool2");
    const std::size_t c = in.extent(0), h = in.extent(1), w = in.extent(2);
    if (h % 2 || w % 2) throw ShapeError("maxpool2: spatial extents must be even, got " + to_string(in.shape()));
    BasicTensor<T> out({c, h / 2, w / 2});
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t y = 0; y < h / 2; ++y)
            for (std::size_t x = 0; x < w / 2; ++x) {
                T m = in.at(k, 2 * y, 2 * x);
                m = std::max(m, in.at(k, 2 * y, 2 * x + 1));
                m = std::max(m, in.at(k, 2 * y + 1, 2 * x));
                m = std::max(m, in.at(k, 2 * y + 1, 2 * x + 1));
                out.at(k, y, x) = m;
            }
    return out;
}

// Gradient routes to the first maximal element in row-major window order.
template <typename T>
BasicTensor<T> maxpool2_backward(const BasicTensor<T>& in, const BasicTensor<T>& upstream) {
    require_rank(in.shape(), 3, "maxpool2 backward");
    const std::size_t c = in.extent(0), h = in.extent(1), w = in.extent(2);
    require_shape(upstream.shape(), {c, h / 2, w / 2}, "maxpool2 backward upstream");
    BasicTensor<T> g(in.shape());
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t y = 0; y < h / 2; ++y)
            for (std::size_t x = 0; x < w / 2; ++x) {
                std::size_t by = 2 * y, bx = 2 * x;
                for (std::size_t dy = 0; dy < 2; ++dy)
                    for (std::size_t dx = 0; dx < 2; ++dx)
                        if (in.at(k, 2 * y + dy, 2 * x + dx) > in.at(k, by, bx)) {
                            by = 2 * y + dy;
                            bx = 2 * x + dx;
                        }
                g.at(k, by, bx) += upstream.at(k, y, x);
            }
    return g;
}

template <typename T>
BasicTensor<T> upsample2(const BasicTensor<T>& in) {
    require_rank(in.shape(), 3, "upsample2");
    const std::size_t c = in.extent(0), h = in.extent(1), w = in.extent(2);
    BasicTensor<T> out({c, 2 * h, 2 * w});
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t y = 0; y < 2 * h; ++y)
            for (std::size_t x = 0; x < 2 * w; ++x) out.at(k, y, x) = in.at(k, y / 2, x / 2);
    return out;
}

template <typename T>
BasicTensor<T> upsample2_backward(const Shape& in_shape, const BasicTensor<T>& upstream) {
    require_rank(in_shape, 3, "upsample2 backward");
    const std::size_t c = in_shape[0], h = in_shape[1], w = in_shape[2];
    require_shape(upstream.shape(), {c, 2 * h, 2 * w}, "upsample2 backward upstream");
    BasicTensor<T> g(in_shape);
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t y = 0; y < 2 * h; ++y)
            for (std::size_t x = 0; x < 2 * w; ++x) g.at(k, y / 2, x / 2) += upstream.at(k, y, x);
    return g;
}

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_rank(a.shape(), 3, "concat");
    require_rank(b.shape(), 3, "concat");
    if (a.extent(1) != b.extent(1) || a.extent(2) != b.extent(2)) {
        throw ShapeError("concat: spatial extents differ, " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
    std::vector<T> data(a.values().begin(), a.values().end());
    data.insert(data.end(), b.values().begin(), b.values().end());
    return BasicTensor<T>({a.extent(0) + b.extent(0), a.extent(1), a.extent(2)}, std::move(data));
}

/// Splits the upstream gradient of concat(a, b) back into (grad_a, grad_b).
template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> concat_backward(const Shape& a_shape, const Shape& b_shape,
                                                          const BasicTensor<T>& upstream) {
    require_shape(upstream.shape(), {a_shape[0] + b_shape[0], a_shape[1], a_shape[2]}, "concat backward upstream");
    const std::size_t na = element_count(a_shape);
    std::vector<T> ga(upstream.values().begin(), upstream.values().begin() + na);
    std::vector<T> gb(upstream.values().begin() + na, upstream.values().end());
    return {BasicTensor<T>(a_shape, std::move(ga)), BasicTensor<T>(b_shape, std::move(gb))};
}

// Uniform dispatch over the inventory, used by gradient checking and tooling.

template <typename T>
BasicTensor<T> forward(LayerKind kind, const LayerParams<T>* params, std::span<const BasicTensor<T>> inputs) {
    const std::size_t arity = kind == LayerKind::concat ? 2 : 1;
    if (inputs.size() != arity) {
        throw ShapeError(std::string(layer_name(kind)) + ": expected " + std::to_string(arity) + " input(s), got " +
                         std::to_string(inputs.size()));
    }
    if (has_params(kind) && !params) throw std::invalid_argument(std::string(layer_name(kind)) + ": missing params");
    switch (kind) {
        case LayerKind::conv3x3:
        case LayerKind::conv1x1: return conv2d(inputs[0], *params);
        case LayerKind::fully_connected: return fully_connected(inputs[0], *params);
        case LayerKind::relu: return relu(inputs[0]);
        case LayerKind::sigmoid: return sigmoid(inputs[0]);
        case LayerKind::maxpool2: return maxpool2(inputs[0]);
        case LayerKind::upsample2: return upsample2(inputs[0]);
        case LayerKind::concat: return concat_channels(inputs[0], inputs[1]);
    }
    throw std::invalid_argument("unknown layer kind");
}

template <typename T>
std::vector<BasicTensor<T>> backward(LayerKind kind, LayerParams<T>* params, std::span<const BasicTensor<T>> inputs,
                                     const BasicTensor<T>& upstream) {
    const BasicTensor<T> probe = forward<T>(kind, params, inputs);
    require_shape(upstream.shape(), probe.shape(), std::string(layer_name(kind)) + " backward upstream");
    switch (kind) {
        case LayerKind::conv3x3:
        case LayerKind::conv1x1: return {conv2d_backward(inputs[0], *params, upstream)};
        case LayerKind::fully_connected: return {fully_connected_backward(inputs[0], *params, upstream)};
        case LayerKind::relu: return {relu_backward(inputs[0], upstream)};
        case LayerKind::sigmoid: return {sigmoid_backward(inputs[0], upstream)};
        case LayerKind::maxpool2: return {maxpool2_backward(inputs[0], upstream)};
        case LayerKind::upsample2: return {upsample2_backward(inputs[0].shape(), upstream)};
        case LayerKind::concat: {
            auto [ga, gb] = concat_backward(inputs[0].shape(), inputs[1].shape(), upstream);
            return {std::move(ga), std::move(gb)};
        }
    }
    throw std::invalid_argument("unknown layer kind");
}

}  // namespace cosal
