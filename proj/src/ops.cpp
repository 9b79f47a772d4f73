#include "stmre/ops.hpp"

#include <cmath>
#include <string>

namespace stmre {

namespace {

template <typename T>
void record_relu_pattern(const TensorT<T>& input) {
    if (auto* pattern = PatternScope::active()) {
        std::vector<std::uint8_t> bits(input.numel());
        for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = input[i] > T{0};
        pattern->record(bits);
    }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias, std::size_t stride, std::size_t padding) {
    auto out = kernels::conv2d_forward(input->value, kernel->value, bias->value, stride, padding);
    return make_op<T>(OpKind::Conv2d, std::move(out), {input, kernel, bias}, [stride, padding](Node<T>& self) {
        auto& x = *self.inputs[0];
        auto& w = *self.inputs[1];
        auto& b = *self.inputs[2];
        kernels::conv2d_backward(x.value, w.value, self.grad, stride, padding, x.requires_grad ? &x.grad : nullptr,
                                 w.requires_grad ? &w.grad : nullptr, b.requires_grad ? &b.grad : nullptr);
    });
}

template <typename T>
Var<T> conv2d_stacked(const Var<T>& input, const std::vector<Var<T>>& kernels, const std::vector<Var<T>>& biases,
                      std::size_t stride, std::size_t padding) {
    if (kernels.empty() || kernels.size() != biases.size()) {
        throw ArgumentError("conv2d_stacked needs one bias per kernel");
    }
    if (kernels.size() == 1) return conv2d(input, kernels[0], biases[0], stride, padding);
    Shape wshape = kernels[0]->value.shape();
    if (wshape.size() != 4) throw DimensionError("conv kernels must be 4-d, got " + shape_str(wshape));
    std::vector<std::size_t> offsets{0};
    for (std::size_t i = 0; i < kernels.size(); ++i) {
        const auto& s = kernels[i]->value.shape();
        if (s.size() != 4 || !std::equal(s.begin() + 1, s.end(), wshape.begin() + 1)) {
            throw DimensionError("stacked kernel " + shape_str(s) + " does not match " + shape_str(wshape));
        }
        if (biases[i]->value.numel() != s[0]) throw DimensionError("stacked bias length does not match its kernel");
        offsets.push_back(offsets.back() + s[0]);
    }
    const std::size_t per_out = kernels[0]->value.numel() / wshape[0];
    wshape[0] = offsets.back();
    TensorT<T> w(wshape), b(Shape{offsets.back()});
    for (std::size_t i = 0; i < kernels.size(); ++i) {
        std::copy(kernels[i]->value.data(), kernels[i]->value.data() + kernels[i]->value.numel(),
                  w.data() + offsets[i] * per_out);
        std::copy(biases[i]->value.data(), biases[i]->value.data() + biases[i]->value.numel(), b.data() + offsets[i]);
    }
    auto out = kernels::conv2d_forward(input->value, w, b, stride, padding);
    std::vector<Var<T>> inputs{input};
    inputs.insert(inputs.end(), kernels.begin(), kernels.end());
    inputs.insert(inputs.end(), biases.begin(), biases.end());
    const std::size_t n = kernels.size();
    return make_op<T>(OpKind::Conv2d, std::move(out), std::move(inputs),
                      [w = std::move(w), offsets, per_out, n, stride, padding](Node<T>& self) {
                          auto& x = *self.inputs[0];
                          bool any_w = false, any_b = false;
                          for (std::size_t i = 0; i < n; ++i) {
                              any_w |= self.inputs[1 + i]->requires_grad;
                              any_b |= self.inputs[1 + n + i]->requires_grad;
                          }
                          TensorT<T> gw = any_w ? TensorT<T>::zeros(w.shape()) : TensorT<T>{};
                          TensorT<T> gb = any_b ? TensorT<T>::zeros(Shape{offsets.back()}) : TensorT<T>{};
                          kernels::conv2d_backward(x.value, w, self.grad, stride, padding,
                                                   x.requires_grad ? &x.grad : nullptr, any_w ? &gw : nullptr,
                                                   any_b ? &gb : nullptr);
                          for (std::size_t i = 0; i < n; ++i) {
                              auto& wi = *self.inputs[1 + i];
                              auto& bi = *self.inputs[1 + n + i];
                              if (wi.requires_grad) {
                                  const T* src = gw.data() + offsets[i] * per_out;
                                  for (std::size_t j = 0; j < wi.grad.numel(); ++j) wi.grad[j] += src[j];
                              }
                              if (bi.requires_grad) {
                                  for (std::size_t j = 0; j < bi.grad.numel(); ++j) bi.grad[j] += gb[offsets[i] + j];
                              }
                          }
                      });
}

template <typename T>
Var<T> pool2d(const Var<T>& input, PoolMode mode, std::size_t window, std::size_t stride, std::size_t padding) {
    std::vector<std::uint32_t> saved;
    auto out = kernels::pool2d_forward(input->value, mode, window, stride, padding, saved);
    if (mode == PoolMode::Max) {
        if (auto* pattern = PatternScope::active()) pattern->record(std::span<const std::uint32_t>(saved));
    }
    const OpKind kind = mode == PoolMode::Max ? OpKind::MaxPool2d : OpKind::AvgPool2d;
    return make_op<T>(kind, std::move(out), {input},
                      [mode, window, stride, padding, saved = std::move(saved)](Node<T>& self) {
                          auto& x = *self.inputs[0];
                          kernels::pool2d_backward(x.value.shape(), mode, window, stride, padding, saved, self.grad,
                                                   x.grad);
                      });
}

template <typename T>
Var<T> relu(const Var<T>& input) {
    record_relu_pattern(input->value);
    auto out = kernels::relu_forward(input->value);
    return make_op<T>(OpKind::Relu, std::move(out), {input}, [](Node<T>& self) {
        auto& x = *self.inputs[0];
        kernels::relu_backward(x.value, self.grad, x.grad);
    });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
    std::vector<const TensorT<T>*> values;
    values.reserve(parts.size());
    for (const auto& p : parts) values.push_back(&p->value);
    auto out = kernels::concat_channels<T>(std::span<const TensorT<T>* const>(values));
    return make_op<T>(OpKind::ConcatChannels, std::move(out), parts, [](Node<T>& self) {
        std::size_t begin = 0;
        for (auto& part : self.inputs) {
            const std::size_t width = part->value.dim(1);
            if (part->requires_grad) {
                auto slice = kernels::slice_channels(self.grad, begin, begin + width);
                kernels::add_into(part->grad, slice);
            }
            begin += width;
        }
    });
}

template <typename T>
Var<T> slice_channels(const Var<T>& input, std::size_t begin, std::size_t end) {
    auto out = kernels::slice_channels(input->value, begin, end);
    return make_op<T>(OpKind::SliceChannels, std::move(out), {input}, [begin](Node<T>& self) {
        kernels::slice_channels_backward(self.grad, begin, self.inputs[0]->grad);
    });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& input) {
    auto out = kernels::global_avg_pool_forward(input->value);
    return make_op<T>(OpKind::GlobalAvgPool, std::move(out), {input}, [](Node<T>& self) {
        kernels::global_avg_pool_backward(self.grad, self.inputs[0]->grad);
    });
}

template <typename T>
Var<T> linear(const Var<T>& input, const Var<T>& weight, const Var<T>& bias) {
    auto out = kernels::linear_forward(input->value, weight->value, bias->value);
    return make_op<T>(OpKind::Linear, std::move(out), {input, weight, bias}, [](Node<T>& self) {
        auto& x = *self.inputs[0];
        auto& w = *self.inputs[1];
        auto& b = *self.inputs[2];
        kernels::linear_backward(x.value, w.value, self.grad, x.requires_grad ? &x.grad : nullptr,
                                 w.requires_grad ? &w.grad : nullptr, b.requires_grad ? &b.grad : nullptr);
    });
}

template <typename T>
Var<T> dropout(const Var<T>& input, double rate, bool training, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ArgumentError("dropout rate must be in [0, 1), got " + std::to_string(rate));
    require_finite(input->value.values(), "dropout");
    if (!training || rate == 0.0) {
        auto out = input->value;
        return make_op<T>(OpKind::Dropout, std::move(out), {input}, [](Node<T>& self) {
            kernels::add_into(self.inputs[0]->grad, self.grad);
        });
    }
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    TensorT<T> mask(input->value.shape());
    for (auto& m : mask.values()) m = rng.uniform() < rate ? T{0} : scale;
    TensorT<T> out = input->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= mask[i];
    return make_op<T>(OpKind::Dropout, std::move(out), {input}, [mask = std::move(mask)](Node<T>& self) {
        auto& gx = self.inputs[0]->grad;
        for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += self.grad[i] * mask[i];
    });
}

template <typename T>
LossOutput<T> softmax_cross_entropy(const Var<T>& logits, std::span<const int> labels) {
    const auto& z = logits->value;
    if (z.rank() != 2) throw DimensionError("softmax_cross_entropy expects [N, K] logits");
    if (labels.size() != z.dim(0)) throw DimensionError("softmax_cross_entropy: label count does not match batch");
    for (int label : labels) {
        if (label < 0 || static_cast<std::size_t>(label) >= z.dim(1)) {
            throw ArgumentError("label " + std::to_string(label) + " out of range");
        }
    }
    auto probs = kernels::softmax(z);
    const double loss = kernels::cross_entropy(z, labels);
    std::vector<int> saved_labels(labels.begin(), labels.end());
    auto node = make_op<T>(OpKind::SoftmaxCrossEntropy, TensorT<T>::scalar(static_cast<T>(loss)), {logits},
                           [probs, saved_labels = std::move(saved_labels)](Node<T>& self) {
                               auto& g = self.inputs[0]->grad;
                               const std::size_t N = probs.dim(0), K = probs.dim(1);
                               const T scale = self.grad[0] / static_cast<T>(N);
                               for (std::size_t n = 0; n < N; ++n) {
                                   for (std::size_t k = 0; k < K; ++k) {
                                       const T onehot = static_cast<int>(k) == saved_labels[n] ? T{1} : T{0};
                                       g[n * K + k] += (probs[n * K + k] - onehot) * scale;
                                   }
                               }
                           });
    return {std::move(node), std::move(probs)};
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    if (a->value.shape() != b->value.shape()) {
        throw DimensionError("add: " + shape_str(a->value.shape()) + " vs " + shape_str(b->value.shape()));
    }
    TensorT<T> out = a->value;
    kernels::add_into(out, b->value);
    return make_op<T>(OpKind::Add, std::move(out), {a, b}, [](Node<T>& self) {
        for (auto& in : self.inputs) {
            if (in->requires_grad) kernels::add_into(in->grad, self.grad);
        }
    });
}

template <typename T>
Var<T> resize_nearest(const Var<T>& input, std::size_t out_h, std::size_t out_w) {
    auto out = kernels::resize_nearest_forward(input->value, out_h, out_w);
    return make_op<T>(OpKind::ResizeNearest, std::move(out), {input}, [](Node<T>& self) {
        kernels::resize_nearest_backward(self.grad, self.inputs[0]->grad);
    });
}

template <typename T>
Var<T> sum(const Var<T>& input) {
    double acc = 0.0;
    for (T v : input->value.values()) acc += v;
    return make_op<T>(OpKind::Sum, TensorT<T>::scalar(static_cast<T>(acc)), {input}, [](Node<T>& self) {
        auto& g = self.inputs[0]->grad;
        for (auto& v : g.values()) v += self.grad[0];
    });
}

template <typename T>
Var<T> weighted_sum(const Var<T>& input, const TensorT<T>& weights) {
    if (weights.shape() != input->value.shape()) throw DimensionError("weighted_sum: weight shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.numel(); ++i) acc += static_cast<double>(input->value[i]) * weights[i];
    return make_op<T>(OpKind::WeightedSum, TensorT<T>::scalar(static_cast<T>(acc)), {input},
                      [weights](Node<T>& self) {
                          auto& g = self.inputs[0]->grad;
                          for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[0] * weights[i];
                      });
}

#define STMRE_INSTANTIATE_OPS(T)                                                                              \
    template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, std::size_t);           \
    template Var<T> conv2d_stacked(const Var<T>&, const std::vector<Var<T>>&, const std::vector<Var<T>>&,      \
                                   std::size_t, std::size_t);                                                 \
    template Var<T> pool2d(const Var<T>&, PoolMode, std::size_t, std::size_t, std::size_t);                  \
    template Var<T> relu(const Var<T>&);                                                                      \
    template Var<T> concat_channels(const std::vector<Var<T>>&);                                              \
    template Var<T> slice_channels(const Var<T>&, std::size_t, std::size_t);                                  \
    template Var<T> global_avg_pool(const Var<T>&);                                                           \
    template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                                      \
    template Var<T> dropout(const Var<T>&, double, bool, Rng&);                                               \
    template LossOutput<T> softmax_cross_entropy(const Var<T>&, std::span<const int>);                        \
    template Var<T> add(const Var<T>&, const Var<T>&);                                                        \
    template Var<T> resize_nearest(const Var<T>&, std::size_t, std::size_t);                                  \
    template Var<T> sum(const Var<T>&);                                                                       \
    template Var<T> weighted_sum(const Var<T>&, const TensorT<T>&);

STMRE_INSTANTIATE_OPS(float)
STMRE_INSTANTIATE_OPS(double)

}  // namespace stmre
