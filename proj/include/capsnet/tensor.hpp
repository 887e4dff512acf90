#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "capsnet/errors.hpp"

namespace capsnet {

using Shape = std::vector<std::size_t>;

/// Buffers start on the widest SIMD boundary, so vectorized kernels split
/// their work the same way on every run.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

inline std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

/// Dense row-major array with explicit shape. Every dimension is positive.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
        check_shape();
        data_.assign(shape_size(shape_), fill);
    }

    Tensor(Shape shape, const std::vector<T>& data) : Tensor(std::move(shape), AlignedVector<T>(data.begin(), data.end())) {}

    Tensor(Shape shape, AlignedVector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape();
        if (data_.size() != shape_size(shape_))
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
    }

    static Tensor scalar(T v) { return Tensor(Shape{1}, v); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    T* ptr() noexcept { return data_.data(); }
    const T* ptr() const noexcept { return data_.data(); }
    AlignedVector<T>& storage() noexcept { return data_; }
    const AlignedVector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    T& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    const T& operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    T& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    const T& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    void reshape(Shape shape) {
        if (shape_size(shape) != data_.size())
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        shape_ = std::move(shape);
        check_shape();
    }

    Tensor reshaped(Shape shape) const {
        Tensor t = *this;
        t.reshape(std::move(shape));
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(out));
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    void check_shape() const {
        for (auto d : shape_)
            if (d == 0) throw ShapeError("zero-sized dimension in shape " + shape_str(shape_));
    }

    Shape shape_;
    AlignedVector<T> data_;
};

}  // namespace capsnet
