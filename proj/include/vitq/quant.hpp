#pragma once

#include <cstdint>
#include <vector>

#include "vitq/tensor.hpp"

namespace vitq {

// One uniform quantization grid: step delta, signed integer range
// [-2^(bits-1), 2^(bits-1) - 1].
struct QuantParams {
    float delta = 1.0f;
    int bits = 8;

    bool operator==(const QuantParams&) const = default;
};

void validate(const QuantParams& p);

// Largest positive grid index, 2^(bits-1) - 1.
std::int64_t grid_max(int bits);

// Integer grid image of a tensor: round(y/delta) clipped to the signed range.
// Rounding is half-away-from-zero.
struct QuantizedTensor {
    std::vector<std::size_t> shape;
    std::vector<std::int32_t> values;
};

QuantizedTensor quantize(const Tensor& y, const QuantParams& p);

// Quantize-then-rescale in one pass; idempotent on its own output.
Tensor quant_dequant(const Tensor& y, const QuantParams& p);

// In-place variant used by the hot search loops.
void quant_dequant_into(const Tensor& y, const QuantParams& p, Tensor& out);

// Max-based interval initialization: max|y| / (2^(bits-1) - 1), with a
// fallback of 1 for all-zero tensors (any interval is lossless there).
float max_init_delta(const Tensor& y, int bits);
float max_init_delta(float max_abs_value, int bits);

// Interval from the percentile of |y|: percentile in (50, 100], linear
// interpolation between order statistics. Constant-zero input falls back to
// delta = 1.
QuantParams percentile_baseline(const Tensor& y, double percentile, int bits);

// Same, over a pre-pooled set of absolute values (|y| over many tensors).
float percentile_of_abs(std::vector<float> abs_values, double percentile);

} // namespace vitq
