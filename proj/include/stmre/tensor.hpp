#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "stmre/error.hpp"

namespace stmre {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

/// Dense row-major tensor. Layouts used by the library are [N, C, H, W] for
/// feature maps and [N, F] for feature vectors.
template <typename T>
class TensorT {
public:
    using value_type = T;

    TensorT() = default;

    explicit TensorT(Shape shape, T fill = T{0})
        : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
        check_shape();
    }

    TensorT(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape();
        if (data_.size() != shape_numel(shape_)) {
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_str(shape_));
        }
    }

    static TensorT zeros(Shape shape) { return TensorT(std::move(shape), T{0}); }
    static TensorT full(Shape shape, T value) { return TensorT(std::move(shape), value); }
    static TensorT scalar(T value) { return TensorT(Shape{1}, value); }

    const Shape& shape() const { return shape_; }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    T& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    /// Same data, new shape with equal element count.
    TensorT reshaped(Shape shape) const {
        if (shape_numel(shape) != numel()) {
            throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        }
        return TensorT(std::move(shape), data_);
    }

    template <typename U>
    TensorT<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return TensorT<U>(shape_, std::move(out));
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    bool operator==(const TensorT& other) const = default;

private:
    void check_shape() const {
        for (auto d : shape_) {
            if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_str(shape_));
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;

inline void require_finite(std::span<const float> v, const char* where) {
    for (float x : v) {
        if (!std::isfinite(x)) throw NumericError(std::string(where) + ": non-finite input value");
    }
}
inline void require_finite(std::span<const double> v, const char* where) {
    for (double x : v) {
        if (!std::isfinite(x)) throw NumericError(std::string(where) + ": non-finite input value");
    }
}

}  // namespace stmre
