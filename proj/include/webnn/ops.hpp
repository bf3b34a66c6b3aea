#pragma once

// Differentiable tensor operations. Every function here records a backward
// rule on its result when gradients are being tracked.

#include "webnn/tensor.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace webnn {

// Elementwise arithmetic with numpy-style broadcasting of leading axes.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

/// Output shape of broadcasting `a` against `b`; throws DimensionError.
Shape broadcast_shapes(const Shape& a, const Shape& b);

/// Sum of all elements, shape (1).
template <typename T>
Tensor<T> sum(const Tensor<T>& x);
/// Mean of all elements, shape (1).
template <typename T>
Tensor<T> mean(const Tensor<T>& x);
/// Arithmetic mean along `axis`; the axis is removed from the result.
template <typename T>
Tensor<T> mean_over_axis(const Tensor<T>& x, std::size_t axis);

// Layout.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
/// Swaps the last two axes.
template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& x);
/// Slice [start, start + length) along `axis`.
template <typename T>
Tensor<T> narrow(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length);
/// Zero-extends `axis` to `extent` by appending zeros.
template <typename T>
Tensor<T> pad_axis(const Tensor<T>& x, std::size_t axis, std::size_t extent);
/// Picks one index along `axis` and drops that axis.
template <typename T>
Tensor<T> select(const Tensor<T>& x, std::size_t axis, std::size_t index);
/// Stacks equally shaped tensors along a new axis.
template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& parts, std::size_t axis);

/// Batched matrix product over the last two axes; leading axes broadcast.
///
/// When the left operand is broadcast over the batch (a shared stack of
/// matrices applied to many right-hand sides), each left matrix is kept hot
/// while every right-hand side that uses it is processed.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

enum class ActivationKind { leaky_relu, sigmoid };

struct Activation {
    ActivationKind kind = ActivationKind::leaky_relu;
    double alpha = 0.01; // leaky_relu negative slope
};

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation activation);
/// x for x >= 0, alpha * x otherwise. The derivative at 0 is 1.
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, double alpha);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

/// Max-shifted softmax along the last axis.
template <typename T>
Tensor<T> softmax_last_axis(const Tensor<T>& x);

/// Spatial extent of a valid (unpadded) convolution.
std::size_t conv_output_extent(std::size_t input, std::size_t kernel, std::size_t stride);

/// Valid cross-correlation: x (N,C_in,H,W), kernel (C_out,C_in,K,K), bias (C_out).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 std::size_t stride);

/// Mean binary cross-entropy of sigmoid(logit) against 0/1 targets, computed
/// as max(z,0) - z*t + log(1 + exp(-|z|)).
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logit, const Tensor<T>& target);

/// Mean over rows of -log softmax(logits)[label]; logits (N,C).
template <typename T>
Tensor<T> cross_entropy_from_logits(const Tensor<T>& logits, std::span<const int> labels);

} // namespace webnn
