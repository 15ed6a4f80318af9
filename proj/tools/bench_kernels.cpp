// Times the OpenMP kernels against the serial reference and checks that the
// two produce identical bytes. Sizes are chosen so the parallel path engages.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include <omp.h>

#include "vitq/kernels.hpp"
#include "vitq/synthetic.hpp"

namespace {

using vitq::Tensor;

double time_ms(const std::function<void()>& fn, int reps) {
    fn(); // warm-up
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

float max_diff(const Tensor& a, const Tensor& b) {
    float m = 0.0f;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

void report(const char* name, double serial_ms, double parallel_ms, float diff) {
    std::printf("%-12s serial %8.3f ms   parallel %8.3f ms   speedup %5.2fx   max|diff| %g\n",
                name, serial_ms, parallel_ms, serial_ms / parallel_ms, diff);
}

} // namespace

int main(int argc, char** argv) {
    int reps = 5;
    std::size_t n = 512;
    if (argc > 1) n = static_cast<std::size_t>(std::stoul(argv[1]));
    if (argc > 2) reps = std::stoi(argv[2]);

    std::printf("threads: %d, size: %zu, reps: %d\n", omp_get_max_threads(), n, reps);

    vitq::Rng rng(42);
    const Tensor a = rng.normal_tensor({n, n}, 1.0);
    const Tensor b = rng.normal_tensor({n, n}, 1.0);
    const Tensor gamma = rng.normal_tensor({n}, 0.05, 1.0);
    const Tensor beta = rng.normal_tensor({n}, 0.02);

    {
        Tensor out_s, out_p;
        const double ts = time_ms([&] { out_s = vitq::serial::matmul(a, b); }, reps);
        const double tp = time_ms([&] { out_p = vitq::matmul(a, b); }, reps);
        report("matmul", ts, tp, max_diff(out_s, out_p));
    }
    {
        Tensor out_s, out_p;
        const double ts = time_ms([&] { out_s = vitq::serial::softmax_rows(a); }, reps);
        const double tp = time_ms([&] { out_p = vitq::softmax_rows(a); }, reps);
        report("softmax", ts, tp, max_diff(out_s, out_p));
    }
    {
        Tensor out_s, out_p;
        const double ts =
            time_ms([&] { out_s = vitq::serial::layer_norm(a, gamma, beta, 1e-6f); }, reps);
        const double tp = time_ms([&] { out_p = vitq::layer_norm(a, gamma, beta, 1e-6f); }, reps);
        report("layer_norm", ts, tp, max_diff(out_s, out_p));
    }
    {
        Tensor out_s, out_p;
        const double ts = time_ms([&] { out_s = vitq::serial::gelu(a); }, reps);
        const double tp = time_ms([&] { out_p = vitq::gelu(a); }, reps);
        report("gelu", ts, tp, max_diff(out_s, out_p));
    }
    return 0;
}
