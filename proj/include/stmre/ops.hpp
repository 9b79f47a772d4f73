#pragma once

#include <span>
#include <vector>

#include "stmre/autograd.hpp"
#include "stmre/kernels.hpp"
#include "stmre/rng.hpp"

namespace stmre {

using kernels::PoolMode;

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias, std::size_t stride, std::size_t padding);

/// Several convolutions over the same input evaluated as one, outputs stacked
/// along channels in argument order. Kernels must agree on all but dim 0.
template <typename T>
Var<T> conv2d_stacked(const Var<T>& input, const std::vector<Var<T>>& kernels, const std::vector<Var<T>>& biases,
                      std::size_t stride, std::size_t padding);

template <typename T>
Var<T> pool2d(const Var<T>& input, PoolMode mode, std::size_t window, std::size_t stride, std::size_t padding);

template <typename T>
Var<T> relu(const Var<T>& input);

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts);

template <typename T>
Var<T> slice_channels(const Var<T>& input, std::size_t begin, std::size_t end);

template <typename T>
Var<T> global_avg_pool(const Var<T>& input);

template <typename T>
Var<T> linear(const Var<T>& input, const Var<T>& weight, const Var<T>& bias);

/// Inverted dropout. The mask is drawn from `rng` only in training mode.
template <typename T>
Var<T> dropout(const Var<T>& input, double rate, bool training, Rng& rng);

template <typename T>
struct LossOutput {
    Var<T> loss;
    TensorT<T> probs;
};

/// Mean softmax cross-entropy over the batch; labels are class indices.
template <typename T>
LossOutput<T> softmax_cross_entropy(const Var<T>& logits, std::span<const int> labels);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> resize_nearest(const Var<T>& input, std::size_t out_h, std::size_t out_w);

template <typename T>
Var<T> sum(const Var<T>& input);

/// sum_i input[i] * weights[i], with `weights` treated as a constant.
template <typename T>
Var<T> weighted_sum(const Var<T>& input, const TensorT<T>& weights);

}  // namespace stmre
