#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vitq/kernels.hpp"
#include "vitq/synthetic.hpp"

using namespace vitq;

TEST_CASE("matmul identity and hand product") {
    const Tensor a({2, 2}, {1, 2, 3, 4});
    const Tensor eye({2, 2}, {1, 0, 0, 1});
    CHECK(matmul(a, eye) == a);

    const Tensor b({2, 2}, {5, 6, 7, 8});
    const Tensor c = matmul(a, b);
    CHECK(c.at(0, 0) == 19.0f);
    CHECK(c.at(0, 1) == 22.0f);
    CHECK(c.at(1, 0) == 43.0f);
    CHECK(c.at(1, 1) == 50.0f);

    const Tensor zero({2, 3});
    const Tensor az = matmul(a, zero);
    for (float v : az.values()) CHECK(v == 0.0f);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), ShapeError);
    CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({4})), ShapeError);
}

TEST_CASE("matmul associativity on random triples") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor a = rng.normal_tensor({4, 4}, 1.0);
        const Tensor b = rng.normal_tensor({4, 4}, 1.0);
        const Tensor c = rng.normal_tensor({4, 4}, 1.0);
        const Tensor l = matmul(matmul(a, b), c);
        const Tensor r = matmul(a, matmul(b, c));
        for (std::size_t i = 0; i < l.numel(); ++i) {
            CHECK(l[i] == doctest::Approx(r[i]).epsilon(0).scale(1).epsilon(1e-4));
        }
    }
}

TEST_CASE("softmax rows") {
    const Tensor flat = softmax_rows(Tensor({1, 2}, {0, 0}));
    CHECK(flat[0] == doctest::Approx(0.5));
    CHECK(flat[1] == doctest::Approx(0.5));

    const Tensor v = softmax_rows(Tensor({1, 2}, {std::log(2.0f), 0.0f}));
    CHECK(v[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
    CHECK(v[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-6));

    const Tensor big = softmax_rows(Tensor({1, 2}, {1000.0f, 0.0f}));
    CHECK(big.all_finite());
    CHECK(big[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(big[1] < 1e-6f);
}

TEST_CASE("softmax rows sum to one and shift invariance") {
    Rng rng(3);
    const Tensor x = rng.normal_tensor({6, 9}, 2.0);
    const Tensor s = softmax_rows(x);
    for (std::size_t i = 0; i < s.rows(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < s.cols(); ++j) sum += s.at(i, j);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
    Tensor shifted = x;
    for (float& v : shifted.values()) v += 7.5f;
    const Tensor s2 = softmax_rows(shifted);
    for (std::size_t i = 0; i < s.numel(); ++i) {
        CHECK(std::fabs(s[i] - s2[i]) < 1e-6f);
    }
}

TEST_CASE("layer_norm") {
    const Tensor gamma1({3}, {1, 1, 1});
    const Tensor beta0({3}, {0, 0, 0});

    const Tensor constant = layer_norm(Tensor({1, 3}, {4, 4, 4}), gamma1, beta0, 1e-6f);
    for (float v : constant.values()) CHECK(v == doctest::Approx(0.0));

    // population variance of [1,2,3] is 2/3
    const Tensor r = layer_norm(Tensor({1, 3}, {1, 2, 3}), gamma1, beta0, 0.0f);
    CHECK(r[0] == doctest::Approx(-1.224745).epsilon(1e-6));
    CHECK(r[1] == doctest::Approx(0.0));
    CHECK(r[2] == doctest::Approx(1.224745).epsilon(1e-6));

    const Tensor gamma0({3}, {0, 0, 0});
    const Tensor betac({3}, {2.5f, 2.5f, 2.5f});
    const Tensor c = layer_norm(Tensor({1, 3}, {1, 2, 3}), gamma0, betac, 1e-6f);
    for (float v : c.values()) CHECK(v == 2.5f);

    CHECK_THROWS_AS(layer_norm(Tensor({1, 3}), Tensor({2}), beta0, 1e-6f), ShapeError);
}

TEST_CASE("gelu exact erf form") {
    const Tensor z = gelu(Tensor({1}, {0.0f}));
    CHECK(z[0] == 0.0f);

    const Tensor one = gelu(Tensor({1}, {1.0f}));
    CHECK(one[0] == doctest::Approx(0.841345).epsilon(1e-6));

    const Tensor tail = gelu(Tensor({1}, {-10.0f}));
    CHECK(std::fabs(tail[0]) < 1e-8f);
}

TEST_CASE("parallel kernels match the serial reference bit for bit") {
    Rng rng(99);
    const Tensor a = rng.normal_tensor({37, 53}, 1.3);
    const Tensor b = rng.normal_tensor({53, 29}, 0.8);
    CHECK(matmul(a, b) == serial::matmul(a, b));
    CHECK(softmax_rows(a) == serial::softmax_rows(a));
    const Tensor gamma = rng.normal_tensor({53}, 0.05, 1.0);
    const Tensor beta = rng.normal_tensor({53}, 0.02);
    CHECK(layer_norm(a, gamma, beta, 1e-6f) == serial::layer_norm(a, gamma, beta, 1e-6f));
    CHECK(gelu(a) == serial::gelu(a));
}

TEST_CASE("small helpers") {
    const Tensor x({2, 2}, {1, -5, 3, 2});
    CHECK(max_abs(x) == 5.0f);
    CHECK(sum(x) == doctest::Approx(1.0));
    CHECK(mean(x) == doctest::Approx(0.25));
    const Tensor t = transpose(x);
    CHECK(t.at(0, 1) == 3.0f);
    CHECK(t.at(1, 0) == -5.0f);

    const Tensor bias({2}, {10, 20});
    const Tensor shifted = add_rowwise(x, bias);
    CHECK(shifted.at(0, 0) == 11.0f);
    CHECK(shifted.at(1, 1) == 22.0f);
    CHECK_THROWS_AS(add_rowwise(x, Tensor({3})), ShapeError);
    CHECK_THROWS_AS(add(x, Tensor({2, 3})), ShapeError);
}
