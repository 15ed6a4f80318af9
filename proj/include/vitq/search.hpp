#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vitq/quant.hpp"
#include "vitq/tensor.hpp"

namespace vitq {

struct SearchConfig {
    double alpha = 0.5;
    double beta = 1.2;
    int candidates = 100;
    int max_iter = 20;
    double gamma = 0.1;
    double theta = 0.2;
    double convergence_tol = 1e-5;
    std::size_t ranking_max_pairs_per_row = 2048;
    std::uint64_t seed = 1;

    void validate() const;
};

// The two intervals a group alternates over. For weight-times-activation
// products Weight is the parameter tensor; for the two activation-activation
// products inside attention it is the first operand.
enum class Side { Weight, Input };

// One quantization site group with its cached calibration state: per-sample
// operands as they arrive under the already-quantized prefix of the network,
// the full-precision product, and (for query/key projections) everything the
// ranking term needs. Pure reads after construction, safe to evaluate from
// multiple threads.
class SiteGroup {
public:
    enum class Product { Matmul, Scores, AttnValue };

    // O = X W with a shared weight tensor.
    static SiteGroup linear(std::string id, std::string weight_site, std::string input_site,
                            Tensor weight, std::vector<Tensor> inputs, int bits);

    // Both operands are per-sample activations (score and attention-value
    // products); `product` selects the head-wise multiply.
    static SiteGroup act_act(std::string id, std::string first_site, std::string second_site,
                             Product product, std::size_t heads, std::vector<Tensor> first,
                             std::vector<Tensor> second, int bits);

    // Makes the group ranking-aware. reference_maps are the full-precision
    // per-head score maps {h, T, T}; sibling_projection is the other
    // projection (already quantized at its current parameters); when
    // candidate_is_query the candidate projection forms the query rows.
    void attach_ranking(std::vector<Tensor> reference_maps, std::vector<Tensor> sibling_projection,
                        bool candidate_is_query, std::size_t heads);

    const std::string& id() const { return id_; }
    const std::string& weight_site() const { return weight_site_; }
    const std::string& input_site() const { return input_site_; }
    int bits() const { return bits_; }
    bool ranked() const { return ranked_; }
    std::size_t sample_count() const { return inputs_.size(); }
    float init_delta(Side side) const { return side == Side::Weight ? init_w_ : init_x_; }

    // For percentile-style interval selection: all |values| of one side
    // pooled over samples (the weight tensor itself for Matmul groups).
    std::vector<float> pooled_abs(Side side) const;

    // Cached per-sample input-side operands (bias correction reuses them).
    const std::vector<Tensor>& input_operands() const { return inputs_; }

    // Mean Pearson between the cached full-precision product and the product
    // at these intervals.
    double mean_pearson(const QuantParams& w, const QuantParams& x) const;

    // Mean per-sample ranking loss (heads summed); 0 for non-ranked groups.
    double mean_ranking(const QuantParams& w, const QuantParams& x,
                        const SearchConfig& cfg) const;

    // mean_pearson - gamma * mean_ranking (the gamma term only where ranked).
    double objective(const QuantParams& w, const QuantParams& x, const SearchConfig& cfg) const;

    // Objective at every candidate interval for one side, the other side
    // fixed. Candidates are independent and evaluate in parallel.
    std::vector<double> sweep(Side side, const std::vector<float>& deltas,
                              const QuantParams& fixed_other, const SearchConfig& cfg) const;

private:
    SiteGroup() = default;

    Tensor product_at(const QuantParams& w, const QuantParams& x, std::size_t sample) const;

    std::string id_, weight_site_, input_site_;
    Product product_ = Product::Matmul;
    std::size_t heads_ = 1;
    int bits_ = 8;
    float init_w_ = 1.0f, init_x_ = 1.0f;

    Tensor weight_;                     // Matmul only
    std::vector<Tensor> first_;         // per-sample first operands (non-Matmul)
    std::vector<Tensor> inputs_;        // per-sample input-side operands
    std::vector<Tensor> fp_outputs_;    // per-sample full-precision product

    bool ranked_ = false;
    bool candidate_is_query_ = false;
    std::size_t ranking_heads_ = 1;
    std::vector<Tensor> ranking_ref_;   // per-sample {h, T, T}
    std::vector<Tensor> sibling_;       // per-sample quantized sibling projection
};

// Candidate grid: alpha*delta0 .. beta*delta0, `candidates` points inclusive
// (a single candidate sits at alpha*delta0).
std::vector<float> candidate_deltas(float delta0, const SearchConfig& cfg);

struct IntervalChoice {
    float delta;
    double objective;
};

// Best candidate for one side with the other fixed; ties go to the smaller
// interval.
IntervalChoice search_interval(const SiteGroup& group, Side side, float delta0,
                               const QuantParams& fixed_other, const SearchConfig& cfg);

struct SearchOutcome {
    QuantParams weight;
    QuantParams input;
    double initial_objective = 0.0;
    double final_objective = 0.0;
    std::vector<double> trace; // accepted objective: initial, then one entry per half-step
    int iterations = 0;
};

// Coordinate ascent on (delta_w, delta_x): candidates that do not improve the
// accepted objective are rejected, so the trace is non-decreasing. Stops when
// one full iteration gains less than convergence_tol or max_iter is reached.
SearchOutcome alternating_search(const SiteGroup& group, const SearchConfig& cfg);

} // namespace vitq
