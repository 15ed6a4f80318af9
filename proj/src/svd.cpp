#include "vitq/svd.hpp"

#include <algorithm>
#include <cmath>

namespace vitq {

namespace {

constexpr double kOrthoTol = 1e-10;
constexpr int kMaxSweeps = 100;

} // namespace

std::vector<double> singular_values(const Tensor& m) {
    const std::size_t r = m.rows(), c = m.cols();
    // Work on the tall orientation; singular values are transpose-invariant.
    const bool flip = r < c;
    const std::size_t rows = flip ? c : r;
    const std::size_t cols = flip ? r : c;

    // Column-major double copy.
    std::vector<double> a(rows * cols);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            const double v = m.at(i, j);
            if (flip) {
                a[i * rows + j] = v; // column i, row j of the transpose
            } else {
                a[j * rows + i] = v;
            }
        }
    }

    // Cyclic sweeps of pairwise column rotations until all columns are
    // orthogonal within kOrthoTol relative to their norms.
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < cols; ++p) {
            for (std::size_t q = p + 1; q < cols; ++q) {
                double* cp = a.data() + p * rows;
                double* cq = a.data() + q * rows;
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < rows; ++i) {
                    app += cp[i] * cp[i];
                    aqq += cq[i] * cq[i];
                    apq += cp[i] * cq[i];
                }
                if (app == 0.0 || aqq == 0.0) continue;
                if (std::fabs(apq) <= kOrthoTol * std::sqrt(app * aqq)) continue;
                rotated = true;
                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double cs = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = cs * t;
                for (std::size_t i = 0; i < rows; ++i) {
                    const double vp = cp[i], vq = cq[i];
                    cp[i] = cs * vp - sn * vq;
                    cq[i] = sn * vp + cs * vq;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<double> sv(cols);
    for (std::size_t j = 0; j < cols; ++j) {
        double s = 0.0;
        const double* cj = a.data() + j * rows;
        for (std::size_t i = 0; i < rows; ++i) s += cj[i] * cj[i];
        sv[j] = std::sqrt(s);
    }
    std::sort(sv.begin(), sv.end(), std::greater<double>());
    return sv;
}

double nuclear_norm(const Tensor& m) {
    double s = 0.0;
    for (double v : singular_values(m)) s += v;
    return s;
}

} // namespace vitq
