#pragma once

// Pure forward kernels over dense tensors. The differentiable wrappers in
// ops.hpp call these and add vector-Jacobian rules.

#include <cstddef>
#include <string_view>
#include <vector>

#include "capsnet/tensor.hpp"

namespace capsnet {

enum class Padding { valid, same };
enum class Activation { identity, relu, sigmoid, tanh };

std::string_view to_string(Padding p);
std::string_view to_string(Activation a);
Padding parse_padding(std::string_view s);
Activation parse_activation(std::string_view s);

/// Output extent and leading padding of one spatial axis. 'same' pads
/// symmetrically; an odd total puts the extra pixel at the bottom/right.
struct AxisGeometry {
    std::size_t out = 0;
    std::size_t pad_before = 0;
    std::size_t pad_total = 0;
};

AxisGeometry conv_axis(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding);

struct ConvGeometry {
    std::size_t channels, height, width;
    std::size_t kh, kw, stride;
    AxisGeometry rows, cols;
};

ConvGeometry conv_geometry(const Shape& input, const Shape& kernels, std::size_t stride,
                           Padding padding);

namespace detail {

// cols: (C*kh*kw) x (OH*OW), row-major, zero where the window hits padding.
template <typename T>
void im2col(const T* input, const ConvGeometry& g, T* cols);

// Scatter-add counterpart of im2col.
template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* input_grad);

}  // namespace detail

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias,
                 std::size_t stride, Padding padding);

template <typename T>
struct PoolResult {
    Tensor<T> output;
    std::vector<std::size_t> argmax;  // flat input index per output element
};

/// 2x2 / stride-2 max pooling; ties go to the first element in row-major order.
template <typename T>
PoolResult<T> maxpool2(const Tensor<T>& input);

template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias);

template <typename T>
Tensor<T> apply_activation(const Tensor<T>& input, Activation kind);

/// Softmax over the last axis, max-subtracted.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

}  // namespace capsnet
