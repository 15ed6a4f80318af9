#include "vitq/objectives.hpp"

#include <atomic>
#include <cmath>
#include <iostream>

namespace vitq {

namespace {

std::atomic<bool> g_warned_zero_variance{false};

inline double hinge(double p, double theta) {
    const double v = theta - p;
    return v > 0.0 ? v : 0.0;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

} // namespace

double pearson(const Tensor& o, const Tensor& o_hat) {
    require_same_shape(o, o_hat, "pearson");
    const std::size_t n = o.numel();
    if (n < 2) throw ShapeError("pearson needs at least 2 elements");

    double mo = 0.0, mh = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mo += o[i];
        mh += o_hat[i];
    }
    mo /= static_cast<double>(n);
    mh /= static_cast<double>(n);

    double cov = 0.0, vo = 0.0, vh = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = o[i] - mo;
        const double b = o_hat[i] - mh;
        cov += a * b;
        vo += a * a;
        vh += b * b;
    }
    if (vo == 0.0 || vh == 0.0) {
        if (!g_warned_zero_variance.exchange(true)) {
            std::cerr << "[vitq] warning: zero-variance tensor in correlation, treating as 0\n";
        }
        return 0.0;
    }
    return cov / (std::sqrt(vo) * std::sqrt(vh));
}

double ranking_loss(const Tensor& a, const Tensor& a_hat, double theta) {
    require_same_shape(a, a_hat, "ranking_loss");
    const std::size_t rows = a.rows(), cols = a.cols();
    double loss = 0.0;
    for (std::size_t k = 0; k < rows; ++k) {
        const float* ra = a.data() + k * cols;
        const float* rh = a_hat.data() + k * cols;
        for (std::size_t i = 0; i + 1 < cols; ++i) {
            for (std::size_t j = i + 1; j < cols; ++j) {
                const double d = static_cast<double>(ra[i]) - static_cast<double>(ra[j]);
                if (d == 0.0) continue; // tied reference order carries no information
                const double sign = d > 0.0 ? 1.0 : -1.0;
                const double p = (static_cast<double>(rh[i]) - static_cast<double>(rh[j])) * sign;
                loss += hinge(p, theta);
            }
        }
    }
    return loss;
}

double ranking_loss_sampled(const Tensor& a, const Tensor& a_hat, double theta,
                            std::size_t max_pairs_per_row, std::uint64_t seed) {
    require_same_shape(a, a_hat, "ranking_loss");
    const std::size_t cols = a.cols();
    const std::size_t total_pairs = cols * (cols - 1) / 2;
    if (cols <= 64 || total_pairs <= max_pairs_per_row) {
        return ranking_loss(a, a_hat, theta);
    }
    const std::size_t rows = a.rows();
    std::uint64_t state = seed;
    double loss = 0.0;
    for (std::size_t k = 0; k < rows; ++k) {
        const float* ra = a.data() + k * cols;
        const float* rh = a_hat.data() + k * cols;
        for (std::size_t s = 0; s < max_pairs_per_row; ++s) {
            const std::size_t i = splitmix64(state) % cols;
            std::size_t j = splitmix64(state) % (cols - 1);
            if (j >= i) ++j;
            const double d = static_cast<double>(ra[i]) - static_cast<double>(ra[j]);
            if (d == 0.0) continue;
            const double sign = d > 0.0 ? 1.0 : -1.0;
            const double p = (static_cast<double>(rh[i]) - static_cast<double>(rh[j])) * sign;
            loss += hinge(p, theta);
        }
    }
    return loss;
}

std::size_t inversion_count(const Tensor& a, const Tensor& a_hat) {
    require_same_shape(a, a_hat, "inversion_count");
    const std::size_t rows = a.rows(), cols = a.cols();
    std::size_t count = 0;
    for (std::size_t k = 0; k < rows; ++k) {
        const float* ra = a.data() + k * cols;
        const float* rh = a_hat.data() + k * cols;
        for (std::size_t i = 0; i + 1 < cols; ++i) {
            for (std::size_t j = i + 1; j < cols; ++j) {
                const double d = static_cast<double>(ra[i]) - static_cast<double>(ra[j]);
                const double e = static_cast<double>(rh[i]) - static_cast<double>(rh[j]);
                if (d * e < 0.0) ++count;
            }
        }
    }
    return count;
}

} // namespace vitq
