#include "vitq/search.hpp"

#include <cmath>

#include "vitq/kernels.hpp"
#include "vitq/objectives.hpp"
#include "vitq/vit.hpp"

namespace vitq {

void SearchConfig::validate() const {
    if (!(alpha > 0.0) || !(beta > alpha)) {
        throw ValueError("search window requires 0 < alpha < beta");
    }
    if (candidates < 1) throw ValueError("candidate count must be at least 1");
    if (max_iter < 1) throw ValueError("max_iter must be at least 1");
    if (gamma < 0.0 || theta < 0.0) throw ValueError("gamma and theta must be non-negative");
    if (!(convergence_tol > 0.0)) throw ValueError("convergence_tol must be positive");
}

SiteGroup SiteGroup::linear(std::string id, std::string weight_site, std::string input_site,
                            Tensor weight, std::vector<Tensor> inputs, int bits) {
    if (inputs.empty()) throw ValueError("site group '" + id + "' has no calibration samples");
    SiteGroup g;
    g.id_ = std::move(id);
    g.weight_site_ = std::move(weight_site);
    g.input_site_ = std::move(input_site);
    g.product_ = Product::Matmul;
    g.bits_ = bits;
    g.weight_ = std::move(weight);
    g.inputs_ = std::move(inputs);
    g.fp_outputs_.reserve(g.inputs_.size());
    float mx = 0.0f;
    for (const Tensor& x : g.inputs_) {
        g.fp_outputs_.push_back(matmul(x, g.weight_));
        mx = std::max(mx, max_abs(x));
    }
    g.init_w_ = max_init_delta(g.weight_, bits);
    g.init_x_ = max_init_delta(mx, bits);
    return g;
}

SiteGroup SiteGroup::act_act(std::string id, std::string first_site, std::string second_site,
                             Product product, std::size_t heads, std::vector<Tensor> first,
                             std::vector<Tensor> second, int bits) {
    if (first.empty() || first.size() != second.size()) {
        throw ValueError("site group '" + id + "' operand sample counts disagree");
    }
    SiteGroup g;
    g.id_ = std::move(id);
    g.weight_site_ = std::move(first_site);
    g.input_site_ = std::move(second_site);
    g.product_ = product;
    g.heads_ = heads;
    g.bits_ = bits;
    g.first_ = std::move(first);
    g.inputs_ = std::move(second);
    g.fp_outputs_.reserve(g.inputs_.size());
    float mw = 0.0f, mx = 0.0f;
    for (std::size_t s = 0; s < g.inputs_.size(); ++s) {
        if (product == Product::Scores) {
            g.fp_outputs_.push_back(attention_scores(g.first_[s], g.inputs_[s], heads));
        } else {
            g.fp_outputs_.push_back(attention_value_product(g.first_[s], g.inputs_[s], heads));
        }
        mw = std::max(mw, max_abs(g.first_[s]));
        mx = std::max(mx, max_abs(g.inputs_[s]));
    }
    g.init_w_ = max_init_delta(mw, bits);
    g.init_x_ = max_init_delta(mx, bits);
    return g;
}

void SiteGroup::attach_ranking(std::vector<Tensor> reference_maps,
                               std::vector<Tensor> sibling_projection, bool candidate_is_query,
                               std::size_t heads) {
    if (reference_maps.size() != inputs_.size() || sibling_projection.size() != inputs_.size()) {
        throw ValueError("ranking caches must cover every calibration sample");
    }
    ranked_ = true;
    candidate_is_query_ = candidate_is_query;
    ranking_heads_ = heads;
    ranking_ref_ = std::move(reference_maps);
    sibling_ = std::move(sibling_projection);
}

std::vector<float> SiteGroup::pooled_abs(Side side) const {
    std::vector<float> out;
    if (side == Side::Weight && product_ == Product::Matmul) {
        out.reserve(weight_.numel());
        for (float v : weight_.values()) out.push_back(std::fabs(v));
        return out;
    }
    const std::vector<Tensor>& ops = side == Side::Weight ? first_ : inputs_;
    for (const Tensor& t : ops) {
        for (float v : t.values()) out.push_back(std::fabs(v));
    }
    return out;
}

Tensor SiteGroup::product_at(const QuantParams& w, const QuantParams& x,
                             std::size_t sample) const {
    const Tensor xq = quant_dequant(inputs_[sample], x);
    switch (product_) {
    case Product::Matmul:
        return matmul(xq, quant_dequant(weight_, w));
    case Product::Scores:
        return attention_scores(quant_dequant(first_[sample], w), xq, heads_);
    case Product::AttnValue:
        return attention_value_product(quant_dequant(first_[sample], w), xq, heads_);
    }
    throw ValueError("unreachable product kind");
}

double SiteGroup::mean_pearson(const QuantParams& w, const QuantParams& x) const {
    double sum = 0.0;
    for (std::size_t s = 0; s < inputs_.size(); ++s) {
        sum += pearson(fp_outputs_[s], product_at(w, x, s));
    }
    return sum / static_cast<double>(inputs_.size());
}

double SiteGroup::mean_ranking(const QuantParams& w, const QuantParams& x,
                               const SearchConfig& cfg) const {
    if (!ranked_) return 0.0;
    double sum = 0.0;
    for (std::size_t s = 0; s < inputs_.size(); ++s) {
        const Tensor proj = product_at(w, x, s); // quantized candidate projection
        const Tensor maps = candidate_is_query_
                                ? attention_scores(proj, sibling_[s], ranking_heads_)
                                : attention_scores(sibling_[s], proj, ranking_heads_);
        const std::size_t t = maps.dim(1);
        // {h, T, T} laid out as (h*T) rows of width T: row pairs per head.
        const Tensor flat_ref = ranking_ref_[s].reshaped({ranking_heads_ * t, t});
        const Tensor flat_maps = maps.reshaped({ranking_heads_ * t, t});
        sum += ranking_loss_sampled(flat_ref, flat_maps, cfg.theta,
                                    cfg.ranking_max_pairs_per_row,
                                    cfg.seed + 0x9E3779B97F4A7C15ull * (s + 1));
    }
    return sum / static_cast<double>(inputs_.size());
}

double SiteGroup::objective(const QuantParams& w, const QuantParams& x,
                            const SearchConfig& cfg) const {
    double obj = mean_pearson(w, x);
    if (ranked_ && cfg.gamma != 0.0) obj -= cfg.gamma * mean_ranking(w, x, cfg);
    return obj;
}

std::vector<double> SiteGroup::sweep(Side side, const std::vector<float>& deltas,
                                     const QuantParams& fixed_other,
                                     const SearchConfig& cfg) const {
    std::vector<double> out(deltas.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(deltas.size()); ++i) {
        QuantParams moving{deltas[static_cast<std::size_t>(i)], bits_};
        if (side == Side::Weight) {
            out[static_cast<std::size_t>(i)] = objective(moving, fixed_other, cfg);
        } else {
            out[static_cast<std::size_t>(i)] = objective(fixed_other, moving, cfg);
        }
    }
    return out;
}

std::vector<float> candidate_deltas(float delta0, const SearchConfig& cfg) {
    cfg.validate();
    std::vector<float> out;
    out.reserve(static_cast<std::size_t>(cfg.candidates));
    if (cfg.candidates == 1) {
        out.push_back(static_cast<float>(cfg.alpha * delta0));
        return out;
    }
    const double step = (cfg.beta - cfg.alpha) / static_cast<double>(cfg.candidates - 1);
    for (int t = 0; t < cfg.candidates; ++t) {
        out.push_back(static_cast<float>((cfg.alpha + step * t) * delta0));
    }
    return out;
}

IntervalChoice search_interval(const SiteGroup& group, Side side, float delta0,
                               const QuantParams& fixed_other, const SearchConfig& cfg) {
    const std::vector<float> deltas = candidate_deltas(delta0, cfg);
    const std::vector<double> scores = group.sweep(side, deltas, fixed_other, cfg);
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i; // first strict max: smallest delta wins ties
    }
    return {deltas[best], scores[best]};
}

SearchOutcome alternating_search(const SiteGroup& group, const SearchConfig& cfg) {
    cfg.validate();
    SearchOutcome out;
    const float init_w = group.init_delta(Side::Weight);
    const float init_x = group.init_delta(Side::Input);
    out.weight = QuantParams{init_w, group.bits()};
    out.input = QuantParams{init_x, group.bits()};

    double current = group.objective(out.weight, out.input, cfg);
    out.initial_objective = current;
    out.trace.push_back(current);

    for (int iter = 0; iter < cfg.max_iter; ++iter) {
        const double before = current;

        IntervalChoice w = search_interval(group, Side::Weight, init_w, out.input, cfg);
        if (w.objective > current) {
            out.weight.delta = w.delta;
            current = w.objective;
        }
        out.trace.push_back(current);

        IntervalChoice x = search_interval(group, Side::Input, init_x, out.weight, cfg);
        if (x.objective > current) {
            out.input.delta = x.delta;
            current = x.objective;
        }
        out.trace.push_back(current);

        out.iterations = iter + 1;
        if (current - before < cfg.convergence_tol) break;
    }
    out.final_objective = current;
    return out;
}

} // namespace vitq
