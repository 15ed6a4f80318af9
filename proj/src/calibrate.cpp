#include "vitq/calibrate.hpp"

#include <atomic>
#include <cmath>
#include <iostream>

#include "vitq/kernels.hpp"

namespace vitq {

namespace {

std::atomic<bool> g_warned_no_bias{false};

QuantParams site_params_or_init(const QuantHooks& hooks, const std::string& id, float fallback,
                                int bits) {
    auto it = hooks.find(id);
    if (it != hooks.end()) return it->second;
    return QuantParams{fallback, bits};
}

} // namespace

std::vector<GroupSpec> enumerate_groups(const ViTConfig& cfg) {
    using K = GroupSpec::Kind;
    std::vector<GroupSpec> out;
    out.push_back({"embed", K::Embed, 0, site::embed_w(), site::embed_in()});
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        out.push_back({p + "msa.q", K::Q, l, site::msa(l, "q.w"), site::msa(l, "q.in")});
        out.push_back({p + "msa.k", K::K, l, site::msa(l, "k.w"), site::msa(l, "k.in")});
        out.push_back({p + "msa.v", K::V, l, site::msa(l, "v.w"), site::msa(l, "v.in")});
        out.push_back({p + "msa.qk", K::QK, l, site::msa(l, "qk.q"), site::msa(l, "qk.k")});
        out.push_back({p + "msa.av", K::AV, l, site::msa(l, "av.s"), site::msa(l, "av.v")});
        out.push_back({p + "msa.o", K::O, l, site::msa(l, "o.w"), site::msa(l, "o.in")});
        out.push_back({p + "mlp.fc1", K::FC1, l, site::mlp(l, "fc1.w"), site::mlp(l, "fc1.in")});
        out.push_back({p + "mlp.fc2", K::FC2, l, site::mlp(l, "fc2.w"), site::mlp(l, "fc2.in")});
    }
    out.push_back({"head", K::Head, 0, site::head_w(), site::head_in()});
    return out;
}

std::map<std::string, int> uniform_site_bits(const ViTConfig& cfg, int bits) {
    std::map<std::string, int> out;
    for (const std::string& id : enumerate_sites(cfg)) out[id] = bits;
    return out;
}

SiteGroup build_site_group(const GroupSpec& spec, const ViTModel& model,
                           const QuantHooks& prefix_hooks, const std::vector<Tensor>& calib,
                           int bits, const SearchConfig& cfg) {
    using K = GroupSpec::Kind;
    const std::size_t l = spec.layer;

    // Collect the operands arriving at this group under the current hooks.
    ActivationTap tap;
    tap.wanted.insert(spec.input_site);
    if (spec.kind == K::QK || spec.kind == K::AV) tap.wanted.insert(spec.weight_site);

    std::vector<Tensor> inputs, firsts;
    inputs.reserve(calib.size());
    for (const Tensor& image : calib) {
        tap.captured.clear();
        model_forward(image, model, &prefix_hooks, &tap, HookMode::Prefix);
        inputs.push_back(tap.captured.at(spec.input_site));
        if (spec.kind == K::QK || spec.kind == K::AV) {
            firsts.push_back(tap.captured.at(spec.weight_site));
        }
    }

    switch (spec.kind) {
    case K::Embed:
        return SiteGroup::linear(spec.id, spec.weight_site, spec.input_site, model.patch_embed_w,
                                 std::move(inputs), bits);
    case K::V:
        return SiteGroup::linear(spec.id, spec.weight_site, spec.input_site, model.layers[l].wv,
                                 std::move(inputs), bits);
    case K::O:
        return SiteGroup::linear(spec.id, spec.weight_site, spec.input_site, model.layers[l].wo,
                                 std::move(inputs), bits);
    case K::FC1:
        return SiteGroup::linear(spec.id, spec.weight_site, spec.input_site, model.layers[l].w1,
                                 std::move(inputs), bits);
    case K::FC2:
        return SiteGroup::linear(spec.id, spec.weight_site, spec.input_site, model.layers[l].w2,
                                 std::move(inputs), bits);
    case K::Head:
        return SiteGroup::linear(spec.id, spec.weight_site, spec.input_site, model.head_w,
                                 std::move(inputs), bits);
    case K::QK:
        return SiteGroup::act_act(spec.id, spec.weight_site, spec.input_site,
                                  SiteGroup::Product::Scores, model.config.num_heads,
                                  std::move(firsts), std::move(inputs), bits);
    case K::AV:
        return SiteGroup::act_act(spec.id, spec.weight_site, spec.input_site,
                                  SiteGroup::Product::AttnValue, model.config.num_heads,
                                  std::move(firsts), std::move(inputs), bits);
    case K::Q:
    case K::K:
        break;
    }

    // Query/key projections: ranking-aware. The reference maps come from the
    // full-precision projections of the arriving input; the sibling
    // projection is quantized at its current parameters (max-initialized when
    // it has not been searched yet).
    const bool is_query = spec.kind == K::Q;
    const LayerWeights& lw = model.layers[l];
    const Tensor& own_w = is_query ? lw.wq : lw.wk;
    const Tensor& sib_w = is_query ? lw.wk : lw.wq;
    const std::string sib_w_site = site::msa(l, is_query ? "k.w" : "q.w");
    const std::string sib_in_site = site::msa(l, is_query ? "k.in" : "q.in");

    float max_in = 0.0f;
    for (const Tensor& x : inputs) max_in = std::max(max_in, max_abs(x));
    const QuantParams sib_pw =
        site_params_or_init(prefix_hooks, sib_w_site, max_init_delta(sib_w, bits), bits);
    const QuantParams sib_px =
        site_params_or_init(prefix_hooks, sib_in_site, max_init_delta(max_in, bits), bits);

    std::vector<Tensor> ref_maps, sibling;
    ref_maps.reserve(inputs.size());
    sibling.reserve(inputs.size());
    const std::size_t heads = model.config.num_heads;
    const Tensor sib_wq = quant_dequant(sib_w, sib_pw);
    for (const Tensor& x : inputs) {
        const Tensor own_fp = matmul(x, own_w);
        const Tensor sib_fp = matmul(x, sib_w);
        ref_maps.push_back(is_query ? attention_scores(own_fp, sib_fp, heads)
                                    : attention_scores(sib_fp, own_fp, heads));
        sibling.push_back(matmul(quant_dequant(x, sib_px), sib_wq));
    }

    SiteGroup g = SiteGroup::linear(spec.id, spec.weight_site, spec.input_site, own_w,
                                    std::move(inputs), bits);
    if (cfg.gamma != 0.0) {
        g.attach_ranking(std::move(ref_maps), std::move(sibling), is_query, heads);
    }
    return g;
}

BiasCorrectionResult bias_correct(const std::string& group_id, Tensor* bias,
                                  const std::vector<Tensor>& inputs, const Tensor& weight,
                                  const QuantParams& pw, const QuantParams& px) {
    BiasCorrectionResult r;
    r.group = group_id;
    if (bias == nullptr) {
        r.status = BiasCorrectionResult::Status::NoBias;
        if (!g_warned_no_bias.exchange(true)) {
            std::cerr << "[vitq] warning: bias correction requested for '" << group_id
                      << "', which has no bias parameter; skipping\n";
        }
        return r;
    }
    if (inputs.empty()) throw ValueError("bias correction needs calibration inputs");
    const std::size_t units = weight.cols();
    if (bias->numel() != units) {
        throw ShapeError("bias length " + std::to_string(bias->numel()) +
                         " does not match output width " + std::to_string(units));
    }

    std::vector<double> err(units, 0.0);
    std::size_t total_rows = 0;
    const Tensor wq = quant_dequant(weight, pw);
    for (const Tensor& x : inputs) {
        const Tensor o = matmul(x, weight);
        const Tensor oh = matmul(quant_dequant(x, px), wq);
        const std::size_t rows = x.rows();
        total_rows += rows;
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < units; ++j) {
                err[j] += static_cast<double>(oh[i * units + j]) - o[i * units + j];
            }
        }
    }

    r.status = BiasCorrectionResult::Status::Corrected;
    double pre_max = 0.0, pre_sum = 0.0, post_max = 0.0, post_sum = 0.0;
    for (std::size_t j = 0; j < units; ++j) {
        err[j] /= static_cast<double>(total_rows);
        pre_max = std::max(pre_max, std::fabs(err[j]));
        pre_sum += std::fabs(err[j]);

        const double old_b = (*bias)[j];
        (*bias)[j] = static_cast<float>(old_b - err[j]);
        // Residual after the float32 store; identical to re-measuring the
        // mean output error with the corrected bias.
        const double post = err[j] + (static_cast<double>((*bias)[j]) - old_b);
        post_max = std::max(post_max, std::fabs(post));
        post_sum += std::fabs(post);
    }
    r.pre_max_abs_unit_error = pre_max;
    r.pre_mean_abs_unit_error = pre_sum / static_cast<double>(units);
    r.post_max_abs_unit_error = post_max;
    r.post_mean_abs_unit_error = post_sum / static_cast<double>(units);
    return r;
}

namespace {

QuantParams percentile_params(const SiteGroup& group, Side side, double percentile, int bits) {
    const float v = percentile_of_abs(group.pooled_abs(side), percentile);
    QuantParams p;
    p.bits = bits;
    p.delta = v > 0.0f ? v / static_cast<float>(grid_max(bits)) : 1.0f;
    return p;
}

} // namespace

CalibrationOutcome calibrate_model(const ViTModel& model, const std::vector<Tensor>& calib,
                                   const std::map<std::string, int>& site_bits,
                                   const CalibrationOptions& opts) {
    opts.search.validate();
    model.validate();
    if (calib.empty()) throw ValueError("calibration set is empty");
    for (const std::string& id : enumerate_sites(model.config)) {
        if (!site_bits.count(id)) {
            throw ValueError("no bit-width assigned to site '" + id + "'");
        }
    }

    CalibrationOutcome out;
    out.model = model;

    for (const GroupSpec& spec : enumerate_groups(model.config)) {
        const int bits_w = site_bits.at(spec.weight_site);
        const int bits_x = site_bits.at(spec.input_site);
        if (bits_w != bits_x) {
            throw ValueError("site group '" + spec.id + "' has mismatched bit-widths");
        }

        const SiteGroup group =
            build_site_group(spec, out.model, out.hooks, calib, bits_w, opts.search);

        GroupOutcome g;
        g.id = spec.id;
        g.bits = bits_w;
        if (opts.mode == IntervalMode::Search) {
            const SearchOutcome s = alternating_search(group, opts.search);
            g.weight = s.weight;
            g.input = s.input;
            g.initial_objective = s.initial_objective;
            g.final_objective = s.final_objective;
            g.trace = s.trace;
            g.iterations = s.iterations;
        } else {
            g.weight = percentile_params(group, Side::Weight, opts.percentile, bits_w);
            g.input = percentile_params(group, Side::Input, opts.percentile, bits_x);
            const double obj = group.objective(g.weight, g.input, opts.search);
            g.initial_objective = obj;
            g.final_objective = obj;
            g.trace = {obj};
            g.iterations = 0;
        }
        g.final_pearson = group.mean_pearson(g.weight, g.input);
        g.final_ranking = group.ranked() ? group.mean_ranking(g.weight, g.input, opts.search) : 0.0;

        out.hooks[spec.weight_site] = g.weight;
        out.hooks[spec.input_site] = g.input;
        out.groups.push_back(std::move(g));

        if (opts.bias_correction && spec.has_bias()) {
            Tensor* bias = nullptr;
            const Tensor* weight = nullptr;
            if (spec.kind == GroupSpec::Kind::FC1) {
                bias = &out.model.layers[spec.layer].b1;
                weight = &out.model.layers[spec.layer].w1;
            } else if (spec.kind == GroupSpec::Kind::FC2) {
                bias = &out.model.layers[spec.layer].b2;
                weight = &out.model.layers[spec.layer].w2;
            } else {
                bias = &out.model.head_b;
                weight = &out.model.head_w;
            }
            out.bias.push_back(bias_correct(spec.id, bias, group.input_operands(), *weight,
                                            out.hooks.at(spec.weight_site),
                                            out.hooks.at(spec.input_site)));
        }
    }
    return out;
}

} // namespace vitq
