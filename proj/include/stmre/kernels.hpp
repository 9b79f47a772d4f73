#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stmre/tensor.hpp"

// Forward and backward kernels on plain tensors. Backward kernels accumulate
// (+=) into the gradient buffers they are handed, so fan-out sums naturally.
namespace stmre::kernels {

/// Output extent of a sliding window: floor((in + 2*pad - window) / stride) + 1.
std::size_t window_out(std::size_t in, std::size_t window, std::size_t stride, std::size_t pad);

/// Row-major C = alpha * op(A) * op(B) + beta * C.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

struct Conv2dGeometry {
    std::size_t batch, in_ch, in_h, in_w;
    std::size_t out_ch, kh, kw;
    std::size_t stride, pad;
    std::size_t out_h, out_w;
};

Conv2dGeometry conv2d_geometry(const Shape& input, const Shape& kernel, std::size_t stride, std::size_t pad);

/// Cross-correlation (no kernel flip) plus per-output-channel bias.
template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const TensorT<T>& kernel, const TensorT<T>& bias,
                          std::size_t stride, std::size_t pad);

/// Any of the grad_* pointers may be null to skip that gradient.
template <typename T>
void conv2d_backward(const TensorT<T>& input, const TensorT<T>& kernel, const TensorT<T>& grad_out,
                     std::size_t stride, std::size_t pad, TensorT<T>* grad_input, TensorT<T>* grad_kernel,
                     TensorT<T>* grad_bias);

enum class PoolMode { Max, Avg };

/// Pooling saves, per output cell, either the flat argmax input index (max) or
/// the count of in-bounds cells (avg).
template <typename T>
TensorT<T> pool2d_forward(const TensorT<T>& input, PoolMode mode, std::size_t window, std::size_t stride,
                          std::size_t pad, std::vector<std::uint32_t>& saved);

template <typename T>
void pool2d_backward(const Shape& input_shape, PoolMode mode, std::size_t window, std::size_t stride,
                     std::size_t pad, const std::vector<std::uint32_t>& saved, const TensorT<T>& grad_out,
                     TensorT<T>& grad_input);

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& input);

/// Passes gradient only where the forward input was strictly positive.
template <typename T>
void relu_backward(const TensorT<T>& input, const TensorT<T>& grad_out, TensorT<T>& grad_input);

template <typename T>
TensorT<T> concat_channels(std::span<const TensorT<T>* const> parts);

/// Channels [begin, end) of an [N, C, H, W] tensor.
template <typename T>
TensorT<T> slice_channels(const TensorT<T>& input, std::size_t begin, std::size_t end);

/// grad_input[:, begin:end] += grad_out
template <typename T>
void slice_channels_backward(const TensorT<T>& grad_out, std::size_t begin, TensorT<T>& grad_input);

template <typename T>
TensorT<T> global_avg_pool_forward(const TensorT<T>& input);

template <typename T>
void global_avg_pool_backward(const TensorT<T>& grad_out, TensorT<T>& grad_input);

/// input [N, F] times weight [O, F] transposed, plus bias [O].
template <typename T>
TensorT<T> linear_forward(const TensorT<T>& input, const TensorT<T>& weight, const TensorT<T>& bias);

template <typename T>
void linear_backward(const TensorT<T>& input, const TensorT<T>& weight, const TensorT<T>& grad_out,
                     TensorT<T>* grad_input, TensorT<T>* grad_weight, TensorT<T>* grad_bias);

/// Row-wise softmax with max subtraction.
template <typename T>
TensorT<T> softmax(const TensorT<T>& logits);

/// Mean negative log-likelihood, computed in double from the log-sum-exp form.
template <typename T>
double cross_entropy(const TensorT<T>& logits, std::span<const int> labels);

/// Nearest-neighbour resize: out[i] = in[floor(i * in_size / out_size)].
template <typename T>
TensorT<T> resize_nearest_forward(const TensorT<T>& input, std::size_t out_h, std::size_t out_w);

template <typename T>
void resize_nearest_backward(const TensorT<T>& grad_out, TensorT<T>& grad_input);

template <typename T>
void add_into(TensorT<T>& dst, const TensorT<T>& src);

}  // namespace stmre::kernels
