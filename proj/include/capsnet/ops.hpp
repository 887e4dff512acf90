#pragma once

#include <cstddef>

#include "capsnet/kernels.hpp"
#include "capsnet/tape.hpp"

namespace capsnet::ops {

template <typename T>
Var conv2d(Tape<T>& tape, Var input, Var kernels, Var bias, std::size_t stride, Padding padding);

/// Gradient is routed to the stored argmax positions only.
template <typename T>
Var maxpool2(Tape<T>& tape, Var input);

/// Flattens `input` before the matrix-vector product.
template <typename T>
Var dense(Tape<T>& tape, Var input, Var weights, Var bias);

template <typename T>
Var activation(Tape<T>& tape, Var input, Activation kind);

template <typename T>
Var softmax(Tape<T>& tape, Var logits);

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b);

template <typename T>
Var scale(Tape<T>& tape, Var a, T factor);

template <typename T>
Var sum(Tape<T>& tape, Var a);

template <typename T>
Var reshape(Tape<T>& tape, Var a, Shape shape);

/// Concatenation of two flattened tensors.
template <typename T>
Var concat(Tape<T>& tape, Var a, Var b);

/// Contiguous range of a flattened tensor.
template <typename T>
Var slice(Tape<T>& tape, Var a, std::size_t offset, std::size_t length);

/// -log softmax(logits)[label], computed through log-sum-exp.
template <typename T>
Var cross_entropy(Tape<T>& tape, Var logits, std::size_t label);

/// Sum of squared differences against a fixed target.
template <typename T>
Var squared_error(Tape<T>& tape, Var prediction, const Tensor<T>& target);

}  // namespace capsnet::ops
