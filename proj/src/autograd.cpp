#include "stmre/autograd.hpp"

#include <unordered_set>

namespace stmre {

namespace {
thread_local bool grad_enabled = true;
thread_local ActivationPattern* active_pattern = nullptr;
}  // namespace

const char* op_kind_name(OpKind kind) {
    switch (kind) {
        case OpKind::Leaf: return "leaf";
        case OpKind::Conv2d: return "conv2d";
        case OpKind::MaxPool2d: return "max_pool2d";
        case OpKind::AvgPool2d: return "avg_pool2d";
        case OpKind::Relu: return "relu";
        case OpKind::ConcatChannels: return "concat_channels";
        case OpKind::SliceChannels: return "slice_channels";
        case OpKind::GlobalAvgPool: return "global_avg_pool";
        case OpKind::Linear: return "linear";
        case OpKind::Dropout: return "dropout";
        case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
        case OpKind::Add: return "add";
        case OpKind::ResizeNearest: return "resize_nearest";
        case OpKind::Sum: return "sum";
        case OpKind::WeightedSum: return "weighted_sum";
    }
    return "unknown";
}

bool GradMode::enabled() { return grad_enabled; }
void GradMode::set_enabled(bool on) { grad_enabled = on; }

template <typename T>
void backward(const Var<T>& loss) {
    if (!loss) throw ArgumentError("backward on a null node");
    if (loss->value.numel() != 1) {
        throw ArgumentError("backward requires a scalar loss, got shape " + shape_str(loss->value.shape()));
    }
    if (!loss->requires_grad) return;

    // Iterative post-order DFS gives a topological order of the reachable graph.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node<T>* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss->ensure_grad().fill(T{1});
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (!node->backward_fn) continue;
        node->ensure_grad();
        for (auto& in : node->inputs) {
            if (in->requires_grad) in->ensure_grad();
        }
        node->backward_fn(*node);
    }
}

template void backward<float>(const Var<float>&);
template void backward<double>(const Var<double>&);

void ActivationPattern::record(std::span<const std::uint8_t> bits) {
    for (auto b : bits) {
        hash_ ^= b;
        hash_ *= 1099511628211ULL;
    }
    hash_ ^= 0xFF;
    hash_ *= 1099511628211ULL;
}

void ActivationPattern::record(std::span<const std::uint32_t> indices) {
    for (auto v : indices) {
        hash_ ^= v;
        hash_ *= 1099511628211ULL;
    }
    hash_ ^= 0xFE;
    hash_ *= 1099511628211ULL;
}

PatternScope::PatternScope(ActivationPattern& pattern) : previous_(active_pattern) { active_pattern = &pattern; }
PatternScope::~PatternScope() { active_pattern = previous_; }
ActivationPattern* PatternScope::active() { return active_pattern; }

}  // namespace stmre
