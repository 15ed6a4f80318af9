#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "vitq/kernels.hpp"
#include "vitq/search.hpp"
#include "vitq/synthetic.hpp"
#include "vitq/vit.hpp"

using namespace vitq;

namespace {

SearchConfig quick_cfg() {
    SearchConfig cfg;
    cfg.candidates = 16;
    cfg.max_iter = 8;
    return cfg;
}

SiteGroup random_linear_group(Rng& rng, int bits, std::size_t samples = 4) {
    const Tensor w = rng.normal_tensor({8, 6}, 1.0);
    std::vector<Tensor> xs;
    for (std::size_t s = 0; s < samples; ++s) xs.push_back(rng.normal_tensor({5, 8}, 1.0));
    return SiteGroup::linear("g", "w", "x", w, std::move(xs), bits);
}

} // namespace

TEST_CASE("candidate grid") {
    SearchConfig cfg;
    cfg.alpha = 0.5;
    cfg.beta = 1.2;
    cfg.candidates = 1;
    auto one = candidate_deltas(2.0f, cfg);
    REQUIRE(one.size() == 1);
    CHECK(one[0] == doctest::Approx(1.0));

    cfg.candidates = 8;
    auto grid = candidate_deltas(1.0f, cfg);
    REQUIRE(grid.size() == 8);
    CHECK(grid.front() == doctest::Approx(0.5));
    CHECK(grid.back() == doctest::Approx(1.2));
    for (std::size_t i = 1; i < 8; ++i) {
        CHECK(grid[i] - grid[i - 1] == doctest::Approx(0.1).epsilon(1e-6));
    }

    cfg.candidates = 0;
    CHECK_THROWS_AS(candidate_deltas(1.0f, cfg), ValueError);
}

TEST_CASE("search config validation") {
    SearchConfig cfg;
    cfg.alpha = 1.3; // above beta
    CHECK_THROWS_AS(cfg.validate(), ValueError);
    cfg = SearchConfig{};
    cfg.gamma = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ValueError);
}

TEST_CASE("search_interval finds a constructed grid fixed point") {
    // Weights sit on a 0.1 grid with max 12.7, so the initialization is
    // delta0 ~= 0.1 and the candidate at t=5 (0.5 + 5*0.1) reproduces them
    // exactly; every other candidate either clips the max or misses the grid.
    Rng rng(31);
    Tensor w({4, 4});
    for (std::size_t i = 0; i < w.numel(); ++i) {
        w[i] = 0.1f * static_cast<float>(static_cast<int>(rng.next_u64() % 255) - 127);
    }
    w[0] = 12.7f;

    // inputs on the fixed side's exact grid
    std::vector<Tensor> xs;
    Tensor x({3, 4});
    for (std::size_t i = 0; i < x.numel(); ++i) {
        x[i] = 0.5f * static_cast<float>(static_cast<int>(rng.next_u64() % 9) - 4);
    }
    xs.push_back(x);
    const SiteGroup g = SiteGroup::linear("g", "w", "x", w, xs, 8);

    SearchConfig cfg;
    cfg.candidates = 8;
    const float delta0 = g.init_delta(Side::Weight);
    CHECK(delta0 == doctest::Approx(0.1).epsilon(1e-6));

    const QuantParams fixed_x{0.5f, 8};
    const IntervalChoice best = search_interval(g, Side::Weight, delta0, fixed_x, cfg);
    const auto grid = candidate_deltas(delta0, cfg);
    CHECK(best.delta == grid[5]);
    CHECK(best.objective == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("search_interval equals an exhaustive scan with smaller-delta ties") {
    Rng rng(5);
    const SiteGroup g = random_linear_group(rng, 6);
    const SearchConfig cfg = quick_cfg();
    const QuantParams fixed{g.init_delta(Side::Input), 6};
    const float delta0 = g.init_delta(Side::Weight);

    const auto grid = candidate_deltas(delta0, cfg);
    const auto scores = g.sweep(Side::Weight, grid, fixed, cfg);
    std::size_t best = 0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    const IntervalChoice got = search_interval(g, Side::Weight, delta0, fixed, cfg);
    CHECK(got.delta == grid[best]);
    CHECK(got.objective == scores[best]);
}

TEST_CASE("alternating search: monotone accepted trace, bounded iterations") {
    Rng rng(6);
    const SearchConfig cfg = quick_cfg();
    for (int trial = 0; trial < 8; ++trial) {
        const SiteGroup g = random_linear_group(rng, 4 + trial % 3);
        const SearchOutcome out = alternating_search(g, cfg);
        CHECK(out.iterations <= cfg.max_iter);
        REQUIRE(!out.trace.empty());
        CHECK(out.trace.front() == out.initial_objective);
        CHECK(out.trace.back() == out.final_objective);
        for (std::size_t i = 1; i < out.trace.size(); ++i) {
            CHECK(out.trace[i] >= out.trace[i - 1]);
        }
        CHECK(out.final_objective >= out.initial_objective);
    }
}

TEST_CASE("lossless group converges immediately at objective one") {
    // both sides grid-aligned at their initialization
    Tensor w({2, 2}, {0.5f, -1.0f, 1.5f, 6.35f});
    w[3] = 0.05f * 127.0f; // max maps exactly onto the top grid point
    std::vector<Tensor> xs;
    xs.push_back(Tensor({2, 2}, {0.25f, -0.5f, 0.75f, 31.75f})); // 0.25 grid, max 127*0.25
    const SiteGroup g = SiteGroup::linear("g", "w", "x", w, xs, 8);

    SearchConfig cfg;
    cfg.candidates = 15; // (1 - alpha)/(beta - alpha)*14 = 10: delta0 is on the grid
    const SearchOutcome out = alternating_search(g, cfg);
    CHECK(out.initial_objective == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(out.final_objective == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(out.iterations == 1);
}

TEST_CASE("gamma of zero reduces the ranked objective to plain similarity") {
    Rng rng(7);
    const std::size_t heads = 2, t = 4, d = 6;
    const Tensor wq = rng.normal_tensor({d, d}, 0.5);
    const Tensor wk = rng.normal_tensor({d, d}, 0.5);
    std::vector<Tensor> xs, ref, sib;
    for (int s = 0; s < 3; ++s) {
        const Tensor x = rng.normal_tensor({t, d}, 1.0);
        ref.push_back(attention_scores(matmul(x, wq), matmul(x, wk), heads));
        sib.push_back(quant_dequant(matmul(x, wk), QuantParams{0.05f, 8}));
        xs.push_back(x);
    }
    SiteGroup g = SiteGroup::linear("q", "w", "x", wq, xs, 8);
    g.attach_ranking(ref, sib, true, heads);

    SearchConfig cfg;
    const QuantParams pw{g.init_delta(Side::Weight), 8};
    const QuantParams px{g.init_delta(Side::Input), 8};
    cfg.gamma = 0.0;
    CHECK(g.objective(pw, px, cfg) == g.mean_pearson(pw, px));
    cfg.gamma = 0.1;
    CHECK(g.objective(pw, px, cfg) ==
          g.mean_pearson(pw, px) - 0.1 * g.mean_ranking(pw, px, cfg));
}

TEST_CASE("ranked objective matches a brute-force recomputation") {
    Rng rng(8);
    const std::size_t heads = 2, t = 4, d = 6;
    const Tensor wq = rng.normal_tensor({d, d}, 0.6);
    const Tensor wk = rng.normal_tensor({d, d}, 0.6);
    const QuantParams sib_p{0.04f, 6};

    std::vector<Tensor> xs, ref, sib;
    for (int s = 0; s < 2; ++s) {
        const Tensor x = rng.normal_tensor({t, d}, 1.0);
        ref.push_back(attention_scores(matmul(x, wq), matmul(x, wk), heads));
        sib.push_back(quant_dequant(matmul(quant_dequant(x, sib_p), wk), sib_p));
        xs.push_back(x);
    }
    SiteGroup g = SiteGroup::linear("q", "w", "x", wq, xs, 6);
    g.attach_ranking(ref, sib, true, heads);

    SearchConfig cfg;
    cfg.gamma = 0.1;
    cfg.theta = 0.2;
    const QuantParams pw{0.05f, 6}, px{0.3f, 6};
    const double got = g.objective(pw, px, cfg);

    double pear = 0.0, rank = 0.0;
    for (int s = 0; s < 2; ++s) {
        const Tensor q_hat = matmul(quant_dequant(xs[s], px), quant_dequant(wq, pw));
        pear += oracles::pearson(matmul(xs[s], wq), q_hat);
        const Tensor maps = attention_scores(q_hat, sib[s], heads);
        rank += oracles::ranking_loss(ref[s].reshaped({heads * t, t}),
                                      maps.reshaped({heads * t, t}), cfg.theta);
    }
    const double expect = pear / 2.0 - cfg.gamma * (rank / 2.0);
    CHECK(got == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("activation-activation groups") {
    Rng rng(9);
    const std::size_t heads = 2, t = 4, d = 6;
    std::vector<Tensor> qs, ks;
    for (int s = 0; s < 3; ++s) {
        qs.push_back(rng.normal_tensor({t, d}, 1.0));
        ks.push_back(rng.normal_tensor({t, d}, 1.0));
    }
    const SiteGroup g = SiteGroup::act_act("qk", "q", "k", SiteGroup::Product::Scores, heads,
                                           qs, ks, 8);
    SearchConfig cfg;
    const QuantParams pw{g.init_delta(Side::Weight), 8};
    const QuantParams px{g.init_delta(Side::Input), 8};
    // brute-force the mean correlation over the stacked per-head score maps
    double pear = 0.0;
    for (int s = 0; s < 3; ++s) {
        const Tensor o = attention_scores(qs[s], ks[s], heads);
        const Tensor oh =
            attention_scores(quant_dequant(qs[s], pw), quant_dequant(ks[s], px), heads);
        pear += oracles::pearson(o, oh);
    }
    CHECK(g.objective(pw, px, cfg) == doctest::Approx(pear / 3.0).epsilon(1e-9));

    const SearchOutcome out = alternating_search(g, cfg);
    CHECK(out.final_objective >= out.initial_objective);
}
