#pragma once

// Test-only reference computations, written independently of the library
// code paths they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "vitq/synthetic.hpp"
#include "vitq/tensor.hpp"

namespace oracles {

// Signed round-half-away-from-zero via floor, then explicit clipping.
inline std::int64_t quantize_scalar(double y, double delta, int bits) {
    const double sign = y < 0.0 ? -1.0 : 1.0;
    std::int64_t q = static_cast<std::int64_t>(sign * std::floor(std::fabs(y) / delta + 0.5));
    const std::int64_t hi = (std::int64_t{1} << (bits - 1)) - 1;
    const std::int64_t lo = -hi - 1;
    if (q > hi) q = hi;
    if (q < lo) q = lo;
    return q;
}

// Correlation exactly as the centered-sum formula reads, in long double.
inline double pearson(const vitq::Tensor& o, const vitq::Tensor& oh) {
    const std::size_t n = o.numel();
    long double mo = 0.0L, mh = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        mo += o[i];
        mh += oh[i];
    }
    mo /= n;
    mh /= n;
    long double num = 0.0L, do_ = 0.0L, dh = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        num += (o[i] - mo) * (oh[i] - mh);
        do_ += (o[i] - mo) * (o[i] - mo);
        dh += (oh[i] - mh) * (oh[i] - mh);
    }
    if (do_ == 0.0L || dh == 0.0L) return 0.0;
    return static_cast<double>(num / (std::sqrt(do_) * std::sqrt(dh)));
}

// Hinge ranking penalty, row by row, every column pair.
inline double ranking_loss(const vitq::Tensor& a, const vitq::Tensor& ah, double theta) {
    const std::size_t rows = a.rows(), cols = a.cols();
    long double loss = 0.0L;
    for (std::size_t k = 0; k < rows; ++k) {
        for (std::size_t i = 0; i + 1 < cols; ++i) {
            for (std::size_t j = i + 1; j < cols; ++j) {
                const double d = static_cast<double>(a.at(k, i)) - a.at(k, j);
                if (d == 0.0) continue;
                const double s = d > 0.0 ? 1.0 : -1.0;
                const double p = (static_cast<double>(ah.at(k, i)) - ah.at(k, j)) * s;
                if (theta - p > 0.0) loss += theta - p;
            }
        }
    }
    return static_cast<double>(loss);
}

// Eigenvalues of a symmetric matrix by classic two-sided Jacobi rotations.
inline std::vector<double> sym_eigenvalues(std::vector<double> a, std::size_t n) {
    for (int sweep = 0; sweep < 200; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
        }
        if (off < 1e-24) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (std::fabs(apq) < 1e-300) continue;
                const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < n; ++i) {
                    const double aip = a[i * n + p], aiq = a[i * n + q];
                    a[i * n + p] = c * aip - s * aiq;
                    a[i * n + q] = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double api = a[p * n + i], aqi = a[q * n + i];
                    a[p * n + i] = c * api - s * aqi;
                    a[q * n + i] = s * api + c * aqi;
                }
            }
        }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a[i * n + i];
    std::sort(eig.begin(), eig.end(), std::greater<double>());
    return eig;
}

// Descending singular values from the eigenvalues of M^T M.
inline std::vector<double> singular_values_via_gram(const vitq::Tensor& m) {
    const std::size_t r = m.rows(), c = m.cols();
    std::vector<double> gram(c * c, 0.0);
    for (std::size_t i = 0; i < c; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < r; ++k) {
                s += static_cast<double>(m.at(k, i)) * m.at(k, j);
            }
            gram[i * c + j] = s;
        }
    }
    std::vector<double> eig = sym_eigenvalues(std::move(gram), c);
    std::vector<double> sv;
    sv.reserve(std::min(r, c));
    for (std::size_t i = 0; i < std::min(r, c); ++i) {
        sv.push_back(std::sqrt(std::max(0.0, eig[i])));
    }
    return sv;
}

// Random orthogonal matrix: modified Gram-Schmidt on a Gaussian matrix.
inline vitq::Tensor random_orthogonal(std::size_t n, vitq::Rng& rng) {
    std::vector<double> a(n * n);
    for (double& v : a) v = rng.normal();
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) dot += a[i * n + j] * a[i * n + k];
            for (std::size_t i = 0; i < n; ++i) a[i * n + j] -= dot * a[i * n + k];
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) norm += a[i * n + j] * a[i * n + j];
        norm = std::sqrt(norm);
        for (std::size_t i = 0; i < n; ++i) a[i * n + j] /= norm;
    }
    vitq::Tensor t({n, n});
    for (std::size_t i = 0; i < n * n; ++i) t[i] = static_cast<float>(a[i]);
    return t;
}

struct KnapsackChoice {
    std::vector<int> bits;
    double omega = 0.0;
    std::uint64_t bytes = 0;
    bool found = false;
};

// Exhaustive enumeration over every configuration; sums accumulate in module
// order, matching the allocator's associativity.
inline KnapsackChoice knapsack_enumerate(
    const std::vector<std::vector<std::pair<double, std::uint64_t>>>& options, // [module][opt]
    const std::vector<std::vector<int>>& bits,                                 // [module][opt]
    std::uint64_t budget) {
    const std::size_t modules = options.size();
    std::vector<std::size_t> idx(modules, 0);
    KnapsackChoice best;
    while (true) {
        double omega = 0.0;
        std::uint64_t bytes = 0;
        for (std::size_t m = 0; m < modules; ++m) {
            omega += options[m][idx[m]].first;
            bytes += options[m][idx[m]].second;
        }
        if (bytes <= budget) {
            const bool better = !best.found || omega < best.omega ||
                                (omega == best.omega && bytes < best.bytes);
            if (better) {
                best.found = true;
                best.omega = omega;
                best.bytes = bytes;
                best.bits.resize(modules);
                for (std::size_t m = 0; m < modules; ++m) best.bits[m] = bits[m][idx[m]];
            }
        }
        std::size_t m = 0;
        while (m < modules && ++idx[m] == options[m].size()) {
            idx[m] = 0;
            ++m;
        }
        if (m == modules) break;
    }
    return best;
}

} // namespace oracles
