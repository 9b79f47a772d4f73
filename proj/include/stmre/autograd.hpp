#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "stmre/tensor.hpp"

namespace stmre {

enum class OpKind {
    Leaf,
    Conv2d,
    MaxPool2d,
    AvgPool2d,
    Relu,
    ConcatChannels,
    SliceChannels,
    GlobalAvgPool,
    Linear,
    Dropout,
    SoftmaxCrossEntropy,
    Add,
    ResizeNearest,
    Sum,
    WeightedSum,
};

const char* op_kind_name(OpKind kind);

/// A tensor value plus its autodiff provenance.
///
/// Leaves that require grad (parameters) own a gradient buffer from creation.
/// Interior nodes get one lazily when backward first reaches them. The
/// backward closure holds whatever the op saved on the forward pass and
/// accumulates into the gradients of `inputs`.
template <typename T>
struct Node {
    TensorT<T> value;
    TensorT<T> grad;
    bool requires_grad = false;
    OpKind kind = OpKind::Leaf;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;

    bool has_grad() const { return !grad.empty(); }

    TensorT<T>& ensure_grad() {
        if (grad.empty()) grad = TensorT<T>::zeros(value.shape());
        return grad;
    }

    void zero_grad() {
        if (requires_grad) ensure_grad().fill(T{0});
    }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> leaf(TensorT<T> value, bool requires_grad = false) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    if (requires_grad) node->ensure_grad();
    return node;
}

/// Whether ops record the graph on this thread.
class GradMode {
public:
    static bool enabled();
    static void set_enabled(bool on);
};

/// Disables graph recording for its lifetime (inference passes).
class NoGradGuard {
public:
    NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
    ~NoGradGuard() { GradMode::set_enabled(previous_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Builds an op node. Records parents and the backward closure only when grad
/// mode is on and some input requires grad.
template <typename T>
Var<T> make_op(OpKind kind, TensorT<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward_fn) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    node->kind = kind;
    bool needs = false;
    if (GradMode::enabled()) {
        for (const auto& in : inputs) needs = needs || in->requires_grad;
    }
    if (needs) {
        node->requires_grad = true;
        node->inputs = std::move(inputs);
        node->backward_fn = std::move(backward_fn);
    }
    return node;
}

/// Reverse-mode sweep from a scalar node. Visits every reachable node in
/// reverse topological order exactly once; gradients accumulate additively.
template <typename T>
void backward(const Var<T>& loss);

/// Fingerprint of the piecewise-linear decisions (ReLU signs, max-pool argmaxes)
/// taken during a forward pass. Finite-difference checks use it to detect when
/// a perturbation crosses a kink.
class ActivationPattern {
public:
    void record(std::span<const std::uint8_t> bits);
    void record(std::span<const std::uint32_t> indices);
    std::uint64_t digest() const { return hash_; }

private:
    std::uint64_t hash_ = 1469598103934665603ULL;
};

/// RAII: routes pattern records on this thread into `pattern`.
class PatternScope {
public:
    explicit PatternScope(ActivationPattern& pattern);
    ~PatternScope();
    PatternScope(const PatternScope&) = delete;
    PatternScope& operator=(const PatternScope&) = delete;

    static ActivationPattern* active();

private:
    ActivationPattern* previous_;
};

}  // namespace stmre
