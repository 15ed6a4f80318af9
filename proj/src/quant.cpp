#include "vitq/quant.hpp"

#include <algorithm>
#include <cmath>

#include "vitq/kernels.hpp"

namespace vitq {

void validate(const QuantParams& p) {
    if (!(p.delta > 0.0f) || !std::isfinite(p.delta)) {
        throw ValueError("quantization interval must be positive and finite, got " +
                         std::to_string(p.delta));
    }
    if (p.bits < 2 || p.bits > 16) {
        throw ValueError("bit-width must be in [2, 16], got " + std::to_string(p.bits));
    }
}

std::int64_t grid_max(int bits) {
    return (std::int64_t{1} << (bits - 1)) - 1;
}

QuantizedTensor quantize(const Tensor& y, const QuantParams& p) {
    validate(p);
    const double lo = static_cast<double>(-(grid_max(p.bits) + 1));
    const double hi = static_cast<double>(grid_max(p.bits));
    const double inv = 1.0 / static_cast<double>(p.delta);
    QuantizedTensor out;
    out.shape = y.shape();
    out.values.resize(y.numel());
    for (std::size_t i = 0; i < y.numel(); ++i) {
        const double q = std::round(static_cast<double>(y[i]) * inv);
        out.values[i] = static_cast<std::int32_t>(std::clamp(q, lo, hi));
    }
    return out;
}

void quant_dequant_into(const Tensor& y, const QuantParams& p, Tensor& out) {
    validate(p);
    if (!out.same_shape(y)) out = Tensor(y.shape());
    const double delta = static_cast<double>(p.delta);
    const double lo = static_cast<double>(-(grid_max(p.bits) + 1));
    const double hi = static_cast<double>(grid_max(p.bits));
    const double inv = 1.0 / delta;
    const float* src = y.data();
    float* dst = out.data();
    const std::size_t n = y.numel();
    for (std::size_t i = 0; i < n; ++i) {
        const double q = std::clamp(std::round(static_cast<double>(src[i]) * inv), lo, hi);
        dst[i] = static_cast<float>(q * delta);
    }
}

Tensor quant_dequant(const Tensor& y, const QuantParams& p) {
    Tensor out(y.shape());
    quant_dequant_into(y, p, out);
    return out;
}

float max_init_delta(float max_abs_value, int bits) {
    if (max_abs_value <= 0.0f) return 1.0f;
    return max_abs_value / static_cast<float>(grid_max(bits));
}

float max_init_delta(const Tensor& y, int bits) {
    return max_init_delta(max_abs(y), bits);
}

float percentile_of_abs(std::vector<float> abs_values, double percentile) {
    if (abs_values.empty()) throw ValueError("percentile of empty value set");
    if (!(percentile > 50.0 && percentile <= 100.0)) {
        throw ValueError("percentile must lie in (50, 100], got " + std::to_string(percentile));
    }
    std::sort(abs_values.begin(), abs_values.end());
    const double rank = (percentile / 100.0) * static_cast<double>(abs_values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, abs_values.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return static_cast<float>(abs_values[lo] + (abs_values[hi] - abs_values[lo]) * frac);
}

QuantParams percentile_baseline(const Tensor& y, double percentile, int bits) {
    if (y.numel() == 0) throw ValueError("percentile_baseline: empty tensor");
    std::vector<float> mags(y.numel());
    for (std::size_t i = 0; i < y.numel(); ++i) mags[i] = std::fabs(y[i]);
    const float v = percentile_of_abs(std::move(mags), percentile);
    QuantParams p;
    p.bits = bits;
    p.delta = v > 0.0f ? v / static_cast<float>(grid_max(bits)) : 1.0f;
    validate(p);
    return p;
}

} // namespace vitq
