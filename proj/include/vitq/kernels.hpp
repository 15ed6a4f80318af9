#pragma once

#include "vitq/tensor.hpp"

namespace vitq {

// Dense kernels used by the forward pass and the calibration objectives.
// All of them are pure functions over immutable inputs and parallelize over
// independent rows/elements, so results are bit-identical to the serial
// reference regardless of thread count.

// Standard matrix product; accumulation runs in double per output element.
Tensor matmul(const Tensor& a, const Tensor& b);

// Row-wise softmax with per-row max subtraction.
Tensor softmax_rows(const Tensor& a);

// Per-row layer normalization with population variance.
// gamma/beta are length-d vectors, x is (n, d).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps);

// Exact erf-form GELU, elementwise.
Tensor gelu(const Tensor& x);

Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
// Adds a length-c vector to every row of an (r, c) matrix.
Tensor add_rowwise(const Tensor& x, const Tensor& bias);

float max_abs(const Tensor& t);
double sum(const Tensor& t);
double mean(const Tensor& t);

// Serial reference implementations, kept for testing and benchmarking the
// parallel kernels against. Same numerics, plain loops.
namespace serial {
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps);
Tensor gelu(const Tensor& x);
} // namespace serial

} // namespace vitq
