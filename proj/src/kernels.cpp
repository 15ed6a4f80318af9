#include "vitq/kernels.hpp"

#include <cmath>
#include <vector>

namespace vitq {

namespace {

// Below this many multiply-adds the parallel-for fork costs more than it buys.
constexpr std::size_t kParallelGrain = 1u << 15;

void check_matmul_shapes(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2) {
        throw ShapeError("matmul expects matrices, got " + Tensor::shape_str(a.shape()) +
                         " and " + Tensor::shape_str(b.shape()));
    }
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul inner dimensions disagree: " + Tensor::shape_str(a.shape()) +
                         " x " + Tensor::shape_str(b.shape()));
    }
}

// One output row of a @ b, accumulated in double. Shared by the serial and
// parallel versions so they are bit-identical.
inline void matmul_row(const float* a_row, const float* b, std::size_t k, std::size_t p,
                       double* acc, float* out_row) {
    for (std::size_t j = 0; j < p; ++j) acc[j] = 0.0;
    for (std::size_t kk = 0; kk < k; ++kk) {
        const double av = a_row[kk];
        const float* b_row = b + kk * p;
        for (std::size_t j = 0; j < p; ++j) acc[j] += av * b_row[j];
    }
    for (std::size_t j = 0; j < p; ++j) out_row[j] = static_cast<float>(acc[j]);
}

inline void softmax_row(const float* in, std::size_t n, float* out) {
    double m = in[0];
    for (std::size_t j = 1; j < n; ++j) m = std::max(m, static_cast<double>(in[j]));
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(static_cast<double>(in[j]) - m);
    for (std::size_t j = 0; j < n; ++j) {
        out[j] = static_cast<float>(std::exp(static_cast<double>(in[j]) - m) / s);
    }
}

inline void layer_norm_row(const float* in, const float* g, const float* b, std::size_t d,
                           float eps, float* out) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double c = in[j] - mu;
        var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
    for (std::size_t j = 0; j < d; ++j) {
        out[j] = static_cast<float>(((in[j] - mu) * inv) * g[j] + b[j]);
    }
}

inline float gelu_scalar(float x) {
    const double xd = x;
    return static_cast<float>(0.5 * xd * (1.0 + std::erf(xd / std::sqrt(2.0))));
}

void check_layer_norm_shapes(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
    const std::size_t d = x.cols();
    if (gamma.numel() != d || beta.numel() != d) {
        throw ShapeError("layer_norm: gamma/beta length must match row width " +
                         std::to_string(d));
    }
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_matmul_shapes(a, b);
    const std::size_t m = a.rows(), k = a.cols(), p = b.cols();
    Tensor out({m, p});
    const bool par = m * k * p >= kParallelGrain;
#pragma omp parallel if (par)
    {
        std::vector<double> acc(p);
#pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
            matmul_row(a.data() + i * k, b.data(), k, p, acc.data(), out.data() + i * p);
        }
    }
    return out;
}

Tensor softmax_rows(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out({m, n});
#pragma omp parallel for schedule(static) if (m * n >= kParallelGrain)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        softmax_row(a.data() + i * n, n, out.data() + i * n);
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
    check_layer_norm_shapes(x, gamma, beta);
    const std::size_t m = x.rows(), d = x.cols();
    Tensor out({m, d});
#pragma omp parallel for schedule(static) if (m * d >= kParallelGrain)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        layer_norm_row(x.data() + i * d, gamma.data(), beta.data(), d, eps, out.data() + i * d);
    }
    return out;
}

Tensor gelu(const Tensor& x) {
    Tensor out(x.shape());
    const std::size_t n = x.numel();
#pragma omp parallel for schedule(static) if (n >= kParallelGrain)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        out[i] = gelu_scalar(x[i]);
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out({n, m});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
    return out;
}

Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
    const std::size_t m = x.rows(), d = x.cols();
    if (bias.numel() != d) {
        throw ShapeError("add_rowwise: bias length " + std::to_string(bias.numel()) +
                         " does not match row width " + std::to_string(d));
    }
    Tensor out(x.shape());
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x[i * d + j] + bias[j];
    }
    return out;
}

float max_abs(const Tensor& t) {
    float m = 0.0f;
    for (float v : t.values()) m = std::max(m, std::fabs(v));
    return m;
}

double sum(const Tensor& t) {
    double s = 0.0;
    for (float v : t.values()) s += v;
    return s;
}

double mean(const Tensor& t) {
    if (t.numel() == 0) throw ShapeError("mean of empty tensor");
    return sum(t) / static_cast<double>(t.numel());
}

namespace serial {

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_matmul_shapes(a, b);
    const std::size_t m = a.rows(), k = a.cols(), p = b.cols();
    Tensor out({m, p});
    std::vector<double> acc(p);
    for (std::size_t i = 0; i < m; ++i) {
        matmul_row(a.data() + i * k, b.data(), k, p, acc.data(), out.data() + i * p);
    }
    return out;
}

Tensor softmax_rows(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) softmax_row(a.data() + i * n, n, out.data() + i * n);
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
    check_layer_norm_shapes(x, gamma, beta);
    const std::size_t m = x.rows(), d = x.cols();
    Tensor out({m, d});
    for (std::size_t i = 0; i < m; ++i) {
        layer_norm_row(x.data() + i * d, gamma.data(), beta.data(), d, eps, out.data() + i * d);
    }
    return out;
}

Tensor gelu(const Tensor& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = gelu_scalar(x[i]);
    return out;
}

} // namespace serial

} // namespace vitq
