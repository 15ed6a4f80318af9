#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "vitq/kernels.hpp"
#include "vitq/svd.hpp"
#include "vitq/synthetic.hpp"

using namespace vitq;

TEST_CASE("diagonal and identity matrices") {
    const Tensor d({2, 2}, {3, 0, 0, -4});
    const auto sv = singular_values(d);
    REQUIRE(sv.size() == 2);
    CHECK(sv[0] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(sv[1] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(nuclear_norm(d) == doctest::Approx(7.0).epsilon(1e-12));

    Tensor eye({5, 5});
    for (std::size_t i = 0; i < 5; ++i) eye.at(i, i) = 1.0f;
    for (double s : singular_values(eye)) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero and rank-deficient input") {
    CHECK(nuclear_norm(Tensor({4, 4})) == 0.0);

    // rank-1: outer product of two vectors
    Tensor m({3, 3});
    const float u[3] = {1, 2, 3}, v[3] = {4, 5, 6};
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) m.at(i, j) = u[i] * v[j];
    }
    const auto sv = singular_values(m);
    CHECK(sv[0] == doctest::Approx(std::sqrt(14.0) * std::sqrt(77.0)).epsilon(1e-9));
    CHECK(sv[1] == doctest::Approx(0.0).scale(sv[0]).epsilon(1e-9));
    CHECK(sv[2] == doctest::Approx(0.0).scale(sv[0]).epsilon(1e-9));
}

TEST_CASE("matches eigenvalues of the Gram matrix") {
    Rng rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t r = 2 + rng.next_u64() % 15;
        const std::size_t c = 2 + rng.next_u64() % 15;
        const Tensor m = rng.normal_tensor({r, c}, 1.0);
        const auto sv = singular_values(m);
        const auto ref = oracles::singular_values_via_gram(m);
        REQUIRE(sv.size() == ref.size());
        for (std::size_t i = 0; i < sv.size(); ++i) {
            CHECK(sv[i] == doctest::Approx(ref[i]).epsilon(1e-6));
        }
    }
}

TEST_CASE("transpose invariance") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor m = rng.normal_tensor({11, 7}, 1.0);
        const auto a = singular_values(m);
        const auto b = singular_values(transpose(m));
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-6));
        }
    }
}

TEST_CASE("nuclear norm is unitarily invariant") {
    Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 4 + rng.next_u64() % 13;
        const Tensor m = rng.normal_tensor({n, n}, 1.0);
        const Tensor u = oracles::random_orthogonal(n, rng);
        const Tensor v = oracles::random_orthogonal(n, rng);
        const double base = nuclear_norm(m);
        const double rotated = nuclear_norm(matmul(matmul(u, m), v));
        CHECK(std::fabs(rotated - base) / base < 1e-5);
    }
}

TEST_CASE("nuclear norm against the Gram oracle on 8x8") {
    Rng rng(31);
    const Tensor m = rng.normal_tensor({8, 8}, 1.0);
    double ref = 0.0;
    for (double s : oracles::singular_values_via_gram(m)) ref += s;
    CHECK(std::fabs(nuclear_norm(m) - ref) / ref < 1e-6);
}
