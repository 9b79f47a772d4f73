#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stmre/ops.hpp"

namespace stmre {

template <typename T>
struct NamedParam {
    std::string name;
    Var<T> var;
};

/// Per-pass settings threaded through a forward pass.
struct ForwardContext {
    bool training = false;
    Rng* rng = nullptr;  // required when training with dropout > 0
};

template <typename T>
Var<T> apply_dropout(const Var<T>& input, double rate, ForwardContext& ctx) {
    if (ctx.training && rate > 0.0 && ctx.rng == nullptr) {
        throw ArgumentError("training-mode dropout needs a seeded generator");
    }
    Rng unused(0);
    return dropout(input, rate, ctx.training, ctx.rng ? *ctx.rng : unused);
}

/// (channels, height, width) of one input image.
using ImageShape = std::array<std::size_t, 3>;

template <typename T>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
           std::size_t stride = 1, std::size_t padding = 0);

    /// Same-padded stride-1 convolution with an odd kernel.
    static Conv2d same(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel);

    Var<T> forward(const Var<T>& input) const { return conv2d(input, weight, bias, stride_, padding_); }
    void collect(std::vector<NamedParam<T>>& out) const;

    std::size_t in_channels() const { return weight->value.dim(1); }
    std::size_t out_channels() const { return weight->value.dim(0); }
    std::size_t kernel_size() const { return weight->value.dim(2); }
    std::size_t stride() const { return stride_; }
    std::size_t padding() const { return padding_; }
    const std::string& name() const { return name_; }

    Var<T> weight;
    Var<T> bias;

private:
    std::string name_;
    std::size_t stride_ = 1;
    std::size_t padding_ = 0;
};

template <typename T>
class Linear {
public:
    Linear() = default;
    Linear(std::string name, std::size_t in_features, std::size_t out_features);

    Var<T> forward(const Var<T>& input) const { return linear(input, weight, bias); }
    void collect(std::vector<NamedParam<T>>& out) const;

    std::size_t in_features() const { return weight->value.dim(1); }
    std::size_t out_features() const { return weight->value.dim(0); }

    Var<T> weight;
    Var<T> bias;

private:
    std::string name_;
};

/// Anything the trainer and evaluator can drive: image batch in, two logits out.
template <typename T>
class Classifier {
public:
    virtual ~Classifier() = default;

    /// [N, C, H, W] -> logits [N, 2].
    virtual Var<T> forward(const Var<T>& input, ForwardContext& ctx) = 0;

    /// Global-average-pooled feature vector feeding the classifier head, [N, F].
    virtual Var<T> features(const Var<T>& input) = 0;

    /// Every parameter in serialization order, frozen ones included.
    virtual std::vector<NamedParam<T>> parameters() const = 0;

    virtual ImageShape input_shape() const = 0;

    std::vector<NamedParam<T>> trainable_parameters() const;
    std::size_t parameter_count() const;
};

/// He-normal weights (std = sqrt(2 / fan_in)), zero biases. Draws one stream
/// in parameter order, so the result depends only on `seed` and the manifest.
template <typename T>
void init_he_normal(const std::vector<NamedParam<T>>& params, std::uint64_t seed);

/// Marks parameters frozen (no gradient) or trainable.
template <typename T>
void set_trainable(const std::vector<NamedParam<T>>& params, bool trainable);

/// Copies values by name; every destination name must exist in `src` with the same shape.
template <typename T>
void copy_parameter_values(const std::vector<NamedParam<T>>& dst, const std::vector<NamedParam<T>>& src);

/// Deep snapshot of parameter values, in order.
template <typename T>
std::vector<TensorT<T>> snapshot(const std::vector<NamedParam<T>>& params);

}  // namespace stmre
