#include "stmre/kernels.hpp"

#include <cblas.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <string>

namespace stmre::kernels {

std::size_t window_out(std::size_t in, std::size_t window, std::size_t stride, std::size_t pad) {
    if (window == 0 || stride == 0) throw ArgumentError("window and stride must be positive");
    if (in + 2 * pad < window) {
        throw DimensionError("window " + std::to_string(window) + " larger than padded input " +
                             std::to_string(in + 2 * pad));
    }
    return (in + 2 * pad - window) / stride + 1;
}

template <>
void gemm<float>(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
                 const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
                 std::size_t ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
                static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a, static_cast<int>(lda), b,
                static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

template <>
void gemm<double>(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
                  const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta, double* c,
                  std::size_t ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
                static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a, static_cast<int>(lda), b,
                static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

Conv2dGeometry conv2d_geometry(const Shape& input, const Shape& kernel, std::size_t stride, std::size_t pad) {
    if (input.size() != 4 || kernel.size() != 4) {
        throw DimensionError("conv2d expects 4-d input and kernel, got " + shape_str(input) + " and " +
                             shape_str(kernel));
    }
    if (kernel[1] != input[1]) {
        throw DimensionError("conv2d kernel channels " + std::to_string(kernel[1]) + " != input channels " +
                             std::to_string(input[1]));
    }
    if (stride == 0) throw ArgumentError("conv2d stride must be positive");
    Conv2dGeometry g{};
    g.batch = input[0];
    g.in_ch = input[1];
    g.in_h = input[2];
    g.in_w = input[3];
    g.out_ch = kernel[0];
    g.kh = kernel[2];
    g.kw = kernel[3];
    g.stride = stride;
    g.pad = pad;
    g.out_h = window_out(g.in_h, g.kh, stride, pad);
    g.out_w = window_out(g.in_w, g.kw, stride, pad);
    return g;
}

namespace {

bool is_pointwise(const Conv2dGeometry& g) { return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0; }

/// Output columns [lo, hi) whose input column ox*stride + kj - pad is in bounds.
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t in, std::size_t stride,
                                                       std::size_t k, std::size_t pad) {
    std::size_t lo = 0;
    if (k < pad) lo = (pad - k + stride - 1) / stride;
    // largest ox with ox*stride + k - pad <= in - 1
    const long top = static_cast<long>(in) - 1 + static_cast<long>(pad) - static_cast<long>(k);
    std::size_t hi = top < 0 ? 0 : static_cast<std::size_t>(top) / stride + 1;
    hi = std::min(hi, out);
    return {std::min(lo, hi), hi};
}

// col has shape [C*kh*kw, out_h*out_w]
template <typename T>
void im2col(const T* img, const Conv2dGeometry& g, T* col) {
    const std::size_t out_hw = g.out_h * g.out_w;
    for (std::size_t c = 0; c < g.in_ch; ++c) {
        const T* plane = img + c * g.in_h * g.in_w;
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
            const auto [y_lo, y_hi] = valid_range(g.out_h, g.in_h, g.stride, ki, g.pad);
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
                const auto [x_lo, x_hi] = valid_range(g.out_w, g.in_w, g.stride, kj, g.pad);
                const auto x_off = static_cast<std::ptrdiff_t>(kj) - static_cast<std::ptrdiff_t>(g.pad);
                T* row = col + ((c * g.kh + ki) * g.kw + kj) * out_hw;
                std::fill(row, row + y_lo * g.out_w, T{0});
                for (std::size_t oy = y_lo; oy < y_hi; ++oy) {
                    const T* src = plane + (oy * g.stride + ki - g.pad) * g.in_w;
                    T* dst = row + oy * g.out_w;
                    std::fill(dst, dst + x_lo, T{0});
                    if (g.stride == 1 && x_hi > x_lo) {
                        std::copy_n(src + (static_cast<std::ptrdiff_t>(x_lo) + x_off), x_hi - x_lo, dst + x_lo);
                    } else {
                        for (std::size_t ox = x_lo; ox < x_hi; ++ox)
                            dst[ox] = src[static_cast<std::ptrdiff_t>(ox * g.stride) + x_off];
                    }
                    std::fill(dst + x_hi, dst + g.out_w, T{0});
                }
                std::fill(row + y_hi * g.out_w, row + out_hw, T{0});
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, const Conv2dGeometry& g, T* img) {
    const std::size_t out_hw = g.out_h * g.out_w;
    for (std::size_t c = 0; c < g.in_ch; ++c) {
        T* plane = img + c * g.in_h * g.in_w;
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
            const auto [y_lo, y_hi] = valid_range(g.out_h, g.in_h, g.stride, ki, g.pad);
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
                const auto [x_lo, x_hi] = valid_range(g.out_w, g.in_w, g.stride, kj, g.pad);
                const auto x_off = static_cast<std::ptrdiff_t>(kj) - static_cast<std::ptrdiff_t>(g.pad);
                const T* row = col + ((c * g.kh + ki) * g.kw + kj) * out_hw;
                for (std::size_t oy = y_lo; oy < y_hi; ++oy) {
                    T* dst = plane + (oy * g.stride + ki - g.pad) * g.in_w;
                    const T* src = row + oy * g.out_w;
                    for (std::size_t ox = x_lo; ox < x_hi; ++ox)
                        dst[static_cast<std::ptrdiff_t>(ox * g.stride) + x_off] += src[ox];
                }
            }
        }
    }
}

}  // namespace

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const TensorT<T>& kernel, const TensorT<T>& bias,
                          std::size_t stride, std::size_t pad) {
    const auto g = conv2d_geometry(input.shape(), kernel.shape(), stride, pad);
    if (bias.numel() != g.out_ch) throw DimensionError("conv2d bias length does not match output channels");
    require_finite(input.values(), "conv2d");

    TensorT<T> out(Shape{g.batch, g.out_ch, g.out_h, g.out_w});
    const std::size_t ckk = g.in_ch * g.kh * g.kw;
    const std::size_t out_hw = g.out_h * g.out_w;
    const bool pointwise = is_pointwise(g);
    std::vector<T> col(pointwise ? 0 : ckk * out_hw);

    for (std::size_t n = 0; n < g.batch; ++n) {
        const T* img = input.data() + n * g.in_ch * g.in_h * g.in_w;
        T* dst = out.data() + n * g.out_ch * out_hw;
        for (std::size_t k = 0; k < g.out_ch; ++k) std::fill(dst + k * out_hw, dst + (k + 1) * out_hw, bias[k]);
        const T* cols = img;
        if (!pointwise) {
            im2col(img, g, col.data());
            cols = col.data();
        }
        gemm<T>(false, false, g.out_ch, out_hw, ckk, T{1}, kernel.data(), ckk, cols, out_hw, T{1}, dst, out_hw);
    }
    return out;
}

template <typename T>
void conv2d_backward(const TensorT<T>& input, const TensorT<T>& kernel, const TensorT<T>& grad_out,
                     std::size_t stride, std::size_t pad, TensorT<T>* grad_input, TensorT<T>* grad_kernel,
                     TensorT<T>* grad_bias) {
    const auto g = conv2d_geometry(input.shape(), kernel.shape(), stride, pad);
    const std::size_t ckk = g.in_ch * g.kh * g.kw;
    const std::size_t out_hw = g.out_h * g.out_w;
    const std::size_t in_chw = g.in_ch * g.in_h * g.in_w;
    const bool pointwise = is_pointwise(g);
    std::vector<T> col(pointwise ? 0 : ckk * out_hw);
    std::vector<T> dcol(pointwise ? 0 : ckk * out_hw);

    if (grad_bias) {
        for (std::size_t k = 0; k < g.out_ch; ++k) {
            double acc = 0.0;
            for (std::size_t n = 0; n < g.batch; ++n) {
                const T* src = grad_out.data() + (n * g.out_ch + k) * out_hw;
                for (std::size_t i = 0; i < out_hw; ++i) acc += src[i];
            }
            (*grad_bias)[k] += static_cast<T>(acc);
        }
    }

    for (std::size_t n = 0; n < g.batch; ++n) {
        const T* img = input.data() + n * in_chw;
        const T* dy = grad_out.data() + n * g.out_ch * out_hw;
        if (grad_kernel) {
            const T* cols = img;
            if (!pointwise) {
                im2col(img, g, col.data());
                cols = col.data();
            }
            // dW[K, CKK] += dY[K, HW] * col[CKK, HW]^T
            gemm<T>(false, true, g.out_ch, ckk, out_hw, T{1}, dy, out_hw, cols, out_hw, T{1}, grad_kernel->data(),
                    ckk);
        }
        if (grad_input) {
            T* dx = grad_input->data() + n * in_chw;
            if (pointwise) {
                gemm<T>(true, false, ckk, out_hw, g.out_ch, T{1}, kernel.data(), ckk, dy, out_hw, T{1}, dx, out_hw);
            } else {
                gemm<T>(true, false, ckk, out_hw, g.out_ch, T{1}, kernel.data(), ckk, dy, out_hw, T{0}, dcol.data(),
                        out_hw);
                col2im_add(dcol.data(), g, dx);
            }
        }
    }
}

template <typename T>
TensorT<T> pool2d_forward(const TensorT<T>& input, PoolMode mode, std::size_t window, std::size_t stride,
                          std::size_t pad, std::vector<std::uint32_t>& saved) {
    if (input.rank() != 4) throw DimensionError("pool2d expects a 4-d input, got " + shape_str(input.shape()));
    if (pad >= window && window > 0) throw ArgumentError("pool2d padding must be smaller than the window");
    require_finite(input.values(), "pool2d");
    const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const std::size_t OH = window_out(H, window, stride, pad);
    const std::size_t OW = window_out(W, window, stride, pad);
    TensorT<T> out(Shape{N, C, OH, OW});
    saved.assign(out.numel(), 0);

    std::size_t o = 0;
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        const T* plane = input.data() + nc * H * W;
        for (std::size_t oy = 0; oy < OH; ++oy) {
            const long y0 = static_cast<long>(oy * stride) - static_cast<long>(pad);
            const long ylo = std::max(y0, 0L);
            const long yhi = std::min(y0 + static_cast<long>(window), static_cast<long>(H));
            for (std::size_t ox = 0; ox < OW; ++ox, ++o) {
                const long x0 = static_cast<long>(ox * stride) - static_cast<long>(pad);
                const long xlo = std::max(x0, 0L);
                const long xhi = std::min(x0 + static_cast<long>(window), static_cast<long>(W));
                if (mode == PoolMode::Max) {
                    T best = -std::numeric_limits<T>::infinity();
                    std::size_t arg = 0;
                    for (long y = ylo; y < yhi; ++y) {
                        for (long x = xlo; x < xhi; ++x) {
                            const std::size_t idx = static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x);
                            if (plane[idx] > best) {
                                best = plane[idx];
                                arg = idx;
                            }
                        }
                    }
                    out[o] = best;
                    saved[o] = static_cast<std::uint32_t>(arg);
                } else {
                    double acc = 0.0;
                    for (long y = ylo; y < yhi; ++y) {
                        for (long x = xlo; x < xhi; ++x) acc += plane[y * static_cast<long>(W) + x];
                    }
                    const auto count = static_cast<std::uint32_t>((yhi - ylo) * (xhi - xlo));
                    out[o] = static_cast<T>(acc / count);
                    saved[o] = count;
                }
            }
        }
    }
    return out;
}

template <typename T>
void pool2d_backward(const Shape& input_shape, PoolMode mode, std::size_t window, std::size_t stride,
                     std::size_t pad, const std::vector<std::uint32_t>& saved, const TensorT<T>& grad_out,
                     TensorT<T>& grad_input) {
    const std::size_t N = input_shape[0], C = input_shape[1], H = input_shape[2], W = input_shape[3];
    const std::size_t OH = grad_out.dim(2), OW = grad_out.dim(3);
    std::size_t o = 0;
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        T* plane = grad_input.data() + nc * H * W;
        for (std::size_t oy = 0; oy < OH; ++oy) {
            for (std::size_t ox = 0; ox < OW; ++ox, ++o) {
                if (mode == PoolMode::Max) {
                    plane[saved[o]] += grad_out[o];
                    continue;
                }
                const long y0 = static_cast<long>(oy * stride) - static_cast<long>(pad);
                const long x0 = static_cast<long>(ox * stride) - static_cast<long>(pad);
                const long ylo = std::max(y0, 0L), yhi = std::min(y0 + static_cast<long>(window), static_cast<long>(H));
                const long xlo = std::max(x0, 0L), xhi = std::min(x0 + static_cast<long>(window), static_cast<long>(W));
                const T share = grad_out[o] / static_cast<T>(saved[o]);
                for (long y = ylo; y < yhi; ++y) {
                    for (long x = xlo; x < xhi; ++x) plane[y * static_cast<long>(W) + x] += share;
                }
            }
        }
    }
}

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& input) {
    require_finite(input.values(), "relu");
    TensorT<T> out = input;
    for (auto& v : out.values()) v = v > T{0} ? v : T{0};
    return out;
}

template <typename T>
void relu_backward(const TensorT<T>& input, const TensorT<T>& grad_out, TensorT<T>& grad_input) {
    for (std::size_t i = 0; i < input.numel(); ++i) {
        if (input[i] > T{0}) grad_input[i] += grad_out[i];
    }
}

template <typename T>
TensorT<T> concat_channels(std::span<const TensorT<T>* const> parts) {
    if (parts.empty()) throw ArgumentError("concat_channels needs at least one part");
    const Shape& first = parts.front()->shape();
    if (first.size() != 4) throw DimensionError("concat_channels expects 4-d parts");
    std::size_t total_c = 0;
    for (const auto* p : parts) {
        const Shape& s = p->shape();
        if (s.size() != 4 || s[0] != first[0] || s[2] != first[2] || s[3] != first[3]) {
            throw DimensionError("concat_channels part " + shape_str(s) + " does not match " + shape_str(first));
        }
        total_c += s[1];
    }
    const std::size_t N = first[0], HW = first[2] * first[3];
    TensorT<T> out(Shape{N, total_c, first[2], first[3]});
    for (std::size_t n = 0; n < N; ++n) {
        T* dst = out.data() + n * total_c * HW;
        for (const auto* p : parts) {
            const std::size_t block = p->dim(1) * HW;
            const T* src = p->data() + n * block;
            std::copy(src, src + block, dst);
            dst += block;
        }
    }
    return out;
}

template <typename T>
TensorT<T> slice_channels(const TensorT<T>& input, std::size_t begin, std::size_t end) {
    if (input.rank() != 4) throw DimensionError("slice_channels expects a 4-d input");
    if (begin >= end || end > input.dim(1)) {
        throw DimensionError("channel slice [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") out of range for " + shape_str(input.shape()));
    }
    const std::size_t N = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
    TensorT<T> out(Shape{N, end - begin, input.dim(2), input.dim(3)});
    for (std::size_t n = 0; n < N; ++n) {
        const T* src = input.data() + (n * C + begin) * HW;
        std::copy(src, src + (end - begin) * HW, out.data() + n * (end - begin) * HW);
    }
    return out;
}

template <typename T>
void slice_channels_backward(const TensorT<T>& grad_out, std::size_t begin, TensorT<T>& grad_input) {
    const std::size_t N = grad_input.dim(0), C = grad_input.dim(1);
    const std::size_t HW = grad_input.dim(2) * grad_input.dim(3);
    const std::size_t width = grad_out.dim(1);
    for (std::size_t n = 0; n < N; ++n) {
        const T* src = grad_out.data() + n * width * HW;
        T* dst = grad_input.data() + (n * C + begin) * HW;
        for (std::size_t i = 0; i < width * HW; ++i) dst[i] += src[i];
    }
}

template <typename T>
TensorT<T> global_avg_pool_forward(const TensorT<T>& input) {
    if (input.rank() != 4) throw DimensionError("global_avg_pool expects a 4-d input");
    require_finite(input.values(), "global_avg_pool");
    const std::size_t NC = input.dim(0) * input.dim(1), HW = input.dim(2) * input.dim(3);
    TensorT<T> out(Shape{input.dim(0), input.dim(1)});
    for (std::size_t i = 0; i < NC; ++i) {
        double acc = 0.0;
        const T* src = input.data() + i * HW;
        for (std::size_t j = 0; j < HW; ++j) acc += src[j];
        out[i] = static_cast<T>(acc / static_cast<double>(HW));
    }
    return out;
}

template <typename T>
void global_avg_pool_backward(const TensorT<T>& grad_out, TensorT<T>& grad_input) {
    const std::size_t NC = grad_input.dim(0) * grad_input.dim(1);
    const std::size_t HW = grad_input.dim(2) * grad_input.dim(3);
    for (std::size_t i = 0; i < NC; ++i) {
        const T share = grad_out[i] / static_cast<T>(HW);
        T* dst = grad_input.data() + i * HW;
        for (std::size_t j = 0; j < HW; ++j) dst[j] += share;
    }
}

template <typename T>
TensorT<T> linear_forward(const TensorT<T>& input, const TensorT<T>& weight, const TensorT<T>& bias) {
    if (input.rank() != 2 || weight.rank() != 2 || input.dim(1) != weight.dim(1)) {
        throw DimensionError("linear: input " + shape_str(input.shape()) + " incompatible with weight " +
                             shape_str(weight.shape()));
    }
    if (bias.numel() != weight.dim(0)) throw DimensionError("linear: bias length does not match output features");
    require_finite(input.values(), "linear");
    const std::size_t N = input.dim(0), F = input.dim(1), O = weight.dim(0);
    TensorT<T> out(Shape{N, O});
    for (std::size_t n = 0; n < N; ++n) std::copy(bias.data(), bias.data() + O, out.data() + n * O);
    gemm<T>(false, true, N, O, F, T{1}, input.data(), F, weight.data(), F, T{1}, out.data(), O);
    return out;
}

template <typename T>
void linear_backward(const TensorT<T>& input, const TensorT<T>& weight, const TensorT<T>& grad_out,
                     TensorT<T>* grad_input, TensorT<T>* grad_weight, TensorT<T>* grad_bias) {
    const std::size_t N = input.dim(0), F = input.dim(1), O = weight.dim(0);
    if (grad_input) gemm<T>(false, false, N, F, O, T{1}, grad_out.data(), O, weight.data(), F, T{1}, grad_input->data(), F);
    if (grad_weight) gemm<T>(true, false, O, F, N, T{1}, grad_out.data(), O, input.data(), F, T{1}, grad_weight->data(), F);
    if (grad_bias) {
        for (std::size_t o = 0; o < O; ++o) {
            double acc = 0.0;
            for (std::size_t n = 0; n < N; ++n) acc += grad_out[n * O + o];
            (*grad_bias)[o] += static_cast<T>(acc);
        }
    }
}

template <typename T>
TensorT<T> softmax(const TensorT<T>& logits) {
    if (logits.rank() != 2) throw DimensionError("softmax expects [N, K] logits");
    require_finite(logits.values(), "softmax");
    const std::size_t N = logits.dim(0), K = logits.dim(1);
    TensorT<T> probs(logits.shape());
    for (std::size_t n = 0; n < N; ++n) {
        const T* row = logits.data() + n * K;
        const double mx = *std::max_element(row, row + K);
        double z = 0.0;
        for (std::size_t k = 0; k < K; ++k) z += std::exp(static_cast<double>(row[k]) - mx);
        for (std::size_t k = 0; k < K; ++k) probs[n * K + k] = static_cast<T>(std::exp(static_cast<double>(row[k]) - mx) / z);
    }
    return probs;
}

template <typename T>
double cross_entropy(const TensorT<T>& logits, std::span<const int> labels) {
    const std::size_t N = logits.dim(0), K = logits.dim(1);
    if (labels.size() != N) throw DimensionError("cross_entropy: label count does not match batch");
    double total = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= K) throw ArgumentError("label out of range");
        const T* row = logits.data() + n * K;
        const double mx = *std::max_element(row, row + K);
        double z = 0.0;
        for (std::size_t k = 0; k < K; ++k) z += std::exp(static_cast<double>(row[k]) - mx);
        total += mx + std::log(z) - static_cast<double>(row[labels[n]]);
    }
    return total / static_cast<double>(N);
}

template <typename T>
TensorT<T> resize_nearest_forward(const TensorT<T>& input, std::size_t out_h, std::size_t out_w) {
    if (input.rank() != 4) throw DimensionError("resize_nearest expects a 4-d input");
    if (out_h == 0 || out_w == 0) throw DimensionError("resize_nearest target must be non-empty");
    const std::size_t NC = input.dim(0) * input.dim(1), H = input.dim(2), W = input.dim(3);
    TensorT<T> out(Shape{input.dim(0), input.dim(1), out_h, out_w});
    for (std::size_t i = 0; i < NC; ++i) {
        const T* src = input.data() + i * H * W;
        T* dst = out.data() + i * out_h * out_w;
        for (std::size_t y = 0; y < out_h; ++y) {
            const std::size_t sy = y * H / out_h;
            for (std::size_t x = 0; x < out_w; ++x) dst[y * out_w + x] = src[sy * W + x * W / out_w];
        }
    }
    return out;
}

template <typename T>
void resize_nearest_backward(const TensorT<T>& grad_out, TensorT<T>& grad_input) {
    const std::size_t NC = grad_input.dim(0) * grad_input.dim(1), H = grad_input.dim(2), W = grad_input.dim(3);
    const std::size_t out_h = grad_out.dim(2), out_w = grad_out.dim(3);
    for (std::size_t i = 0; i < NC; ++i) {
        const T* src = grad_out.data() + i * out_h * out_w;
        T* dst = grad_input.data() + i * H * W;
        for (std::size_t y = 0; y < out_h; ++y) {
            const std::size_t sy = y * H / out_h;
            for (std::size_t x = 0; x < out_w; ++x) dst[sy * W + x * W / out_w] += src[y * out_w + x];
        }
    }
}

template <typename T>
void add_into(TensorT<T>& dst, const TensorT<T>& src) {
    if (dst.shape() != src.shape()) {
        throw DimensionError("add: shape " + shape_str(src.shape()) + " != " + shape_str(dst.shape()));
    }
    for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
}

#define STMRE_INSTANTIATE_KERNELS(T)                                                                              \
    template TensorT<T> conv2d_forward(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, std::size_t,     \
                                       std::size_t);                                                              \
    template void conv2d_backward(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, std::size_t,          \
                                  std::size_t, TensorT<T>*, TensorT<T>*, TensorT<T>*);                            \
    template TensorT<T> pool2d_forward(const TensorT<T>&, PoolMode, std::size_t, std::size_t, std::size_t,       \
                                       std::vector<std::uint32_t>&);                                              \
    template void pool2d_backward(const Shape&, PoolMode, std::size_t, std::size_t, std::size_t,                 \
                                  const std::vector<std::uint32_t>&, const TensorT<T>&, TensorT<T>&);             \
    template TensorT<T> relu_forward(const TensorT<T>&);                                                          \
    template void relu_backward(const TensorT<T>&, const TensorT<T>&, TensorT<T>&);                               \
    template TensorT<T> concat_channels(std::span<const TensorT<T>* const>);                                      \
    template TensorT<T> slice_channels(const TensorT<T>&, std::size_t, std::size_t);                              \
    template void slice_channels_backward(const TensorT<T>&, std::size_t, TensorT<T>&);                           \
    template TensorT<T> global_avg_pool_forward(const TensorT<T>&);                                               \
    template void global_avg_pool_backward(const TensorT<T>&, TensorT<T>&);                                       \
    template TensorT<T> linear_forward(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&);                  \
    template void linear_backward(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, TensorT<T>*,           \
                                  TensorT<T>*, TensorT<T>*);                                                      \
    template TensorT<T> softmax(const TensorT<T>&);                                                               \
    template double cross_entropy(const TensorT<T>&, std::span<const int>);                                      \
    template TensorT<T> resize_nearest_forward(const TensorT<T>&, std::size_t, std::size_t);                      \
    template void resize_nearest_backward(const TensorT<T>&, TensorT<T>&);                                        \
    template void add_into(TensorT<T>&, const TensorT<T>&);

STMRE_INSTANTIATE_KERNELS(float)
STMRE_INSTANTIATE_KERNELS(double)

}  // namespace stmre::kernels
