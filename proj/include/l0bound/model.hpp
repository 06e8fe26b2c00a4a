#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "l0bound/errors.hpp"
#include "l0bound/parallel.hpp"
#include "l0bound/tensor.hpp"

namespace l0bound {

namespace layers {

/// Fully connected: y = W x + b, W stored row-major as outputs x inputs.
struct Dense {
    std::size_t outputs = 0;
    std::size_t inputs = 0;
    std::vector<double> weights;
    std::vector<double> bias;
};

/// Valid-padding 2-d convolution over [h, w, c] inputs.
/// Kernels are stored as [out_channels][kernel_h][kernel_w][in_channels].
struct Conv2d {
    std::size_t out_channels = 0;
    std::size_t kernel_h = 0;
    std::size_t kernel_w = 0;
    std::size_t in_channels = 0;
    std::size_t stride = 1;
    std::vector<double> kernels;
    std::vector<double> bias;
};

struct Relu {};

/// Per-channel (last axis) affine normalisation with frozen statistics.
struct BatchNorm {
    std::vector<double> mean;
    std::vector<double> variance;
    std::vector<double> gamma;
    std::vector<double> beta;
    double eps = 1e-5;
};

/// Non-overlapping max pooling; trailing rows/columns that do not fill a window are dropped.
struct MaxPool {
    std::size_t window_h = 1;
    std::size_t window_w = 1;
};

struct Flatten {};
struct Softmax {};

/// Identity at inference.
struct Dropout {
    double rate = 0.0;
};

} // namespace layers

using Layer = std::variant<layers::Dense, layers::Conv2d, layers::Relu, layers::BatchNorm, layers::MaxPool,
                           layers::Flatten, layers::Softmax, layers::Dropout>;

inline const char* layer_type_name(const Layer& layer)
{
    constexpr const char* names[] = {"dense", "conv2d", "relu", "batchnorm", "maxpool", "flatten", "softmax", "dropout"};
    return names[layer.index()];
}

/// Stable identifier of a hidden neuron: the relu layer index and the offset in its output.
struct NeuronId {
    std::size_t layer = 0;
    std::size_t offset = 0;
    auto operator<=>(const NeuronId&) const = default;
};

struct Prediction {
    std::vector<double> confidences;
    std::size_t label = 0;
};

inline std::size_t argmax(std::span<const double> values)
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

inline void softmax_in_place(std::span<double> z)
{
    const double top = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v - top);
        sum += v;
    }
    for (double& v : z) v /= sum;
}

/// Layered feed-forward classifier. Immutable after construction.
class Model {
public:
    Model() = default;

    /// Validates that consecutive layers chain and the network ends in at least two scores.
    Model(std::string name, Shape input_shape, std::vector<Layer> layers)
        : name_(std::move(name)), input_shape_(std::move(input_shape)), layers_(std::move(layers))
    {
        validate();
    }

    const std::string& name() const noexcept { return name_; }
    const Shape& input_shape() const noexcept { return input_shape_; }
    const std::vector<Layer>& layers() const noexcept { return layers_; }
    std::size_t input_size() const noexcept { return element_count(input_shape_); }
    std::size_t class_count() const noexcept { return output_shapes_.empty() ? 0 : output_shapes_.back()[0]; }
    const Shape& output_shape(std::size_t layer) const { return output_shapes_.at(layer); }

    /// Every hidden neuron, in (layer, offset) order.
    std::vector<NeuronId> hidden_neurons() const
    {
        std::vector<NeuronId> out;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            if (!std::holds_alternative<layers::Relu>(layers_[i])) continue;
            for (std::size_t k = 0; k < element_count(output_shapes_[i]); ++k) out.push_back({i, k});
        }
        return out;
    }

    std::size_t widest_layer() const noexcept { return widest_; }

    /// Pre-softmax scores of one flat input. `a` and `b` are scratch buffers.
    /// Calls `observe(layer_index, output)` after every layer when provided.
    template <typename Observer>
    void logits(std::span<const double> input, std::vector<double>& a, std::vector<double>& b,
                Observer&& observe) const
    {
        a.assign(input.begin(), input.end());
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            if (std::holds_alternative<layers::Softmax>(layers_[i])) break;
            const Shape& in_shape = i == 0 ? input_shape_ : output_shapes_[i - 1];
            run_layer(layers_[i], in_shape, output_shapes_[i], a, b);
            std::swap(a, b);
            observe(i, std::span<const double>(a));
        }
    }

    void logits(std::span<const double> input, std::vector<double>& a, std::vector<double>& b) const
    {
        logits(input, a, b, [](std::size_t, std::span<const double>) {});
    }

private:
    void validate()
    {
        if (input_shape_.empty() || input_shape_.size() == 2 || input_shape_.size() > 3) {
            throw ModelError("input_shape must be [n] or [height, width, channels], got " + to_string(input_shape_), 0);
        }
        for (std::size_t e : input_shape_) {
            if (e == 0) throw ModelError("input_shape extents must be >= 1", 0);
        }
        if (layers_.empty()) throw ModelError("model has no layers", 0);

        Shape shape = input_shape_;
        widest_ = element_count(shape);
        output_shapes_.clear();
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            shape = std::visit([&](const auto& layer) { return output_shape_of(layer, shape, i); }, layers_[i]);
            if (std::holds_alternative<layers::Softmax>(layers_[i]) && i + 1 != layers_.size()) {
                throw ModelError("layer " + std::to_string(i) + " (softmax) must be the final layer", i);
            }
            output_shapes_.push_back(shape);
            widest_ = std::max(widest_, element_count(shape));
        }
        if (shape.size() != 1 || shape[0] < 2) {
            throw ModelError("final layer must produce a vector of at least 2 class scores, got " + to_string(shape),
                             layers_.size() - 1);
        }
    }

    static std::string where(std::size_t i, const char* type) { return "layer " + std::to_string(i) + " (" + type + "): "; }

    static Shape output_shape_of(const layers::Dense& d, const Shape& in, std::size_t i)
    {
        if (in.size() != 1) throw ModelError(where(i, "dense") + "expects a flat input, got " + to_string(in), i);
        if (d.inputs != in[0]) {
            throw ModelError(where(i, "dense") + "weights expect " + std::to_string(d.inputs) + " inputs, previous layer gives " +
                                 std::to_string(in[0]),
                             i);
        }
        if (d.outputs == 0 || d.weights.size() != d.outputs * d.inputs) {
            throw ModelError(where(i, "dense") + "weight matrix size does not match declared dimensions", i);
        }
        if (d.bias.size() != d.outputs) {
            throw ModelError(where(i, "dense") + "bias length " + std::to_string(d.bias.size()) +
                                 " does not match weight rows " + std::to_string(d.outputs),
                             i);
        }
        return {d.outputs};
    }

    static Shape output_shape_of(const layers::Conv2d& c, const Shape& in, std::size_t i)
    {
        if (in.size() != 3) throw ModelError(where(i, "conv2d") + "expects [h,w,c] input, got " + to_string(in), i);
        if (c.in_channels != in[2]) throw ModelError(where(i, "conv2d") + "kernel channel count does not match input", i);
        if (c.stride == 0) throw ModelError(where(i, "conv2d") + "stride must be >= 1", i);
        if (c.kernel_h == 0 || c.kernel_w == 0 || c.kernel_h > in[0] || c.kernel_w > in[1]) {
            throw ModelError(where(i, "conv2d") + "kernel does not fit input " + to_string(in), i);
        }
        if (c.out_channels == 0 || c.kernels.size() != c.out_channels * c.kernel_h * c.kernel_w * c.in_channels) {
            throw ModelError(where(i, "conv2d") + "kernel array size does not match declared dimensions", i);
        }
        if (c.bias.size() != c.out_channels) throw ModelError(where(i, "conv2d") + "bias length does not match out channels", i);
        return {(in[0] - c.kernel_h) / c.stride + 1, (in[1] - c.kernel_w) / c.stride + 1, c.out_channels};
    }

    static Shape output_shape_of(const layers::BatchNorm& bn, const Shape& in, std::size_t i)
    {
        const std::size_t ch = in.back();
        if (bn.mean.size() != ch || bn.variance.size() != ch || bn.gamma.size() != ch || bn.beta.size() != ch) {
            throw ModelError(where(i, "batchnorm") + "parameter lengths must equal channel count " + std::to_string(ch), i);
        }
        for (double v : bn.variance) {
            if (!(v + bn.eps > 0.0)) throw ModelError(where(i, "batchnorm") + "variance + eps must be positive", i);
        }
        return in;
    }

    static Shape output_shape_of(const layers::MaxPool& p, const Shape& in, std::size_t i)
    {
        if (in.size() != 3) throw ModelError(where(i, "maxpool") + "expects [h,w,c] input, got " + to_string(in), i);
        if (p.window_h == 0 || p.window_w == 0 || p.window_h > in[0] || p.window_w > in[1]) {
            throw ModelError(where(i, "maxpool") + "window does not fit input " + to_string(in), i);
        }
        return {in[0] / p.window_h, in[1] / p.window_w, in[2]};
    }

    static Shape output_shape_of(const layers::Flatten&, const Shape& in, std::size_t) { return {element_count(in)}; }

    template <typename L>
        requires(std::is_same_v<L, layers::Relu> || std::is_same_v<L, layers::Softmax> ||
                 std::is_same_v<L, layers::Dropout>)
    static Shape output_shape_of(const L&, const Shape& in, std::size_t)
    {
        return in;
    }

    static void run_layer(const Layer& layer, const Shape& in_shape, const Shape& out_shape,
                          const std::vector<double>& in, std::vector<double>& out)
    {
        out.resize(element_count(out_shape));
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, layers::Dense>) {
                    for (std::size_t r = 0; r < l.outputs; ++r) {
                        const double* w = l.weights.data() + r * l.inputs;
                        double acc = l.bias[r];
                        for (std::size_t c = 0; c < l.inputs; ++c) acc += w[c] * in[c];
                        out[r] = acc;
                    }
                } else if constexpr (std::is_same_v<L, layers::Conv2d>) {
                    const std::size_t in_w = in_shape[1];
                    const std::size_t oh = out_shape[0], ow = out_shape[1];
                    for (std::size_t y = 0; y < oh; ++y) {
                        for (std::size_t x = 0; x < ow; ++x) {
                            for (std::size_t o = 0; o < l.out_channels; ++o) {
                                double acc = l.bias[o];
                                const double* k = l.kernels.data() + o * l.kernel_h * l.kernel_w * l.in_channels;
                                for (std::size_t ky = 0; ky < l.kernel_h; ++ky) {
                                    for (std::size_t kx = 0; kx < l.kernel_w; ++kx) {
                                        const double* px =
                                            in.data() + ((y * l.stride + ky) * in_w + (x * l.stride + kx)) * l.in_channels;
                                        const double* kk = k + (ky * l.kernel_w + kx) * l.in_channels;
                                        for (std::size_t c = 0; c < l.in_channels; ++c) acc += kk[c] * px[c];
                                    }
                                }
                                out[(y * ow + x) * l.out_channels + o] = acc;
                            }
                        }
                    }
                } else if constexpr (std::is_same_v<L, layers::Relu>) {
                    for (std::size_t k = 0; k < in.size(); ++k) out[k] = in[k] > 0.0 ? in[k] : 0.0;
                } else if constexpr (std::is_same_v<L, layers::BatchNorm>) {
                    const std::size_t ch = l.mean.size();
                    for (std::size_t k = 0; k < in.size(); ++k) {
                        const std::size_t c = k % ch;
                        out[k] = l.gamma[c] * (in[k] - l.mean[c]) / std::sqrt(l.variance[c] + l.eps) + l.beta[c];
                    }
                } else if constexpr (std::is_same_v<L, layers::MaxPool>) {
                    const std::size_t in_w = in_shape[1], ch = in_shape[2];
                    const std::size_t oh = out_shape[0], ow = out_shape[1];
                    for (std::size_t y = 0; y < oh; ++y) {
                        for (std::size_t x = 0; x < ow; ++x) {
                            for (std::size_t c = 0; c < ch; ++c) {
                                double best = -std::numeric_limits<double>::infinity();
                                for (std::size_t ky = 0; ky < l.window_h; ++ky) {
                                    for (std::size_t kx = 0; kx < l.window_w; ++kx) {
                                        best = std::max(best, in[((y * l.window_h + ky) * in_w + x * l.window_w + kx) * ch + c]);
                                    }
                                }
                                out[(y * ow + x) * ch + c] = best;
                            }
                        }
                    }
                } else {
                    // flatten, dropout, softmax (handled by the caller)
                    std::copy(in.begin(), in.end(), out.begin());
                }
            },
            layer);
    }

    std::string name_;
    Shape input_shape_;
    std::vector<Layer> layers_;
    std::vector<Shape> output_shapes_;
    std::size_t widest_ = 0;
};

inline void check_input(const Model& model, std::span<const double> x)
{
    if (x.size() != model.input_size()) {
        throw ShapeError("input has " + std::to_string(x.size()) + " values, model " + model.name() + " expects " +
                         std::to_string(model.input_size()));
    }
    for (double v : x) {
        if (!std::isfinite(v)) throw RangeError("non-finite value in input");
        if (v < 0.0 || v > 1.0) throw RangeError("input value " + std::to_string(v) + " outside [0,1]");
    }
}

/// Post-softmax prediction of one flat input. No validation; see check_input.
inline Prediction predict(const Model& model, std::span<const double> x)
{
    std::vector<double> a, b;
    model.logits(x, a, b);
    softmax_in_place(a);
    Prediction p;
    p.label = argmax(a);
    p.confidences = std::move(a);
    return p;
}

/// Post-softmax predictions for `count` flat inputs laid out back to back.
/// Each row is computed independently, so partitioning across workers never changes results.
inline std::vector<Prediction> predict_rows(const Model& model, std::span<const double> rows, std::size_t count,
                                            std::size_t workers = 1)
{
    const std::size_t width = model.input_size();
    if (rows.size() != count * width) throw ShapeError("row buffer does not hold " + std::to_string(count) + " inputs");
    std::vector<Prediction> out(count);
    parallel_for(count, workers, [&](std::size_t i) { out[i] = predict(model, rows.subspan(i * width, width)); });
    return out;
}

/// Forward pass over a batch whose first axis indexes inputs.
inline std::vector<Prediction> forward_batch(const Model& model, const TensorND& batch, std::size_t workers = 1)
{
    if (batch.rank() != model.input_shape().size() + 1 ||
        !std::equal(model.input_shape().begin(), model.input_shape().end(), batch.shape().begin() + 1)) {
        throw ShapeError("batch shape " + to_string(batch.shape()) + " does not match [B] + " +
                         to_string(model.input_shape()));
    }
    const std::size_t count = batch.extent(0);
    const std::size_t width = model.input_size();
    for (std::size_t i = 0; i < count; ++i) check_input(model, batch.data().subspan(i * width, width));
    return predict_rows(model, batch.data(), count, workers);
}

/// Post-activation value of every hidden neuron for one input.
inline std::vector<std::pair<NeuronId, double>> record_activations(const Model& model, const TensorND& input)
{
    check_input(model, input.data());
    std::vector<std::pair<NeuronId, double>> out;
    std::vector<double> a, b;
    model.logits(input.data(), a, b, [&](std::size_t layer, std::span<const double> values) {
        if (!std::holds_alternative<layers::Relu>(model.layers()[layer])) return;
        for (std::size_t k = 0; k < values.size(); ++k) out.push_back({{layer, k}, values[k]});
    });
    return out;
}

/// Upper bound on the ∞-norm Lipschitz constant of the pre-softmax map: the product of
/// per-layer induced ∞-norm bounds.
inline double lipschitz_upper_bound(const Model& model)
{
    double k = 1.0;
    for (const Layer& layer : model.layers()) {
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, layers::Dense>) {
                    double row_max = 0.0;
                    for (std::size_t r = 0; r < l.outputs; ++r) {
                        double sum = 0.0;
                        for (std::size_t c = 0; c < l.inputs; ++c) sum += std::abs(l.weights[r * l.inputs + c]);
                        row_max = std::max(row_max, sum);
                    }
                    k *= row_max;
                } else if constexpr (std::is_same_v<L, layers::Conv2d>) {
                    // each output reads one kernel's worth of inputs
                    const std::size_t per_kernel = l.kernel_h * l.kernel_w * l.in_channels;
                    double kernel_max = 0.0;
                    for (std::size_t o = 0; o < l.out_channels; ++o) {
                        double sum = 0.0;
                        for (std::size_t q = 0; q < per_kernel; ++q) sum += std::abs(l.kernels[o * per_kernel + q]);
                        kernel_max = std::max(kernel_max, sum);
                    }
                    k *= kernel_max;
                } else if constexpr (std::is_same_v<L, layers::BatchNorm>) {
                    double scale = 0.0;
                    for (std::size_t c = 0; c < l.gamma.size(); ++c) {
                        scale = std::max(scale, std::abs(l.gamma[c]) / std::sqrt(l.variance[c] + l.eps));
                    }
                    k *= scale;
                }
            },
            layer);
    }
    return k;
}

} // namespace l0bound
