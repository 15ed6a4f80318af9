#include "vitq/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "vitq/container.hpp"
#include "vitq/kernels.hpp"
#include "vitq/objectives.hpp"

namespace vitq {

using nlohmann::json;

void RunConfig::validate() const {
    if (model_path.empty()) throw ConfigError("config is missing 'model'");
    if (calib_path.empty()) throw ConfigError("config is missing 'calibration'");
    if (base_bits < 2 || base_bits > 16) {
        throw ConfigError("bits must be in [2, 16], got " + std::to_string(base_bits));
    }
    if (!(percentile > 50.0 && percentile <= 100.0)) {
        throw ConfigError("percentile must lie in (50, 100]");
    }
    for (int b : bit_set) {
        if (b < 2 || b > 16) throw ConfigError("bit_set entries must lie in [2, 16]");
    }
    if (mixed) {
        if (budget_bytes.has_value() == target_avg_bits.has_value()) {
            throw ConfigError(
                "mixed runs need exactly one of 'budget_bytes' and 'target_avg_bits'");
        }
    }
    try {
        search.validate();
    } catch (const ValueError& e) {
        throw ConfigError(e.what());
    }
}

std::vector<int> RunConfig::effective_bit_set() const {
    if (!bit_set.empty()) return bit_set;
    std::vector<int> out;
    for (int b = base_bits - 2; b <= base_bits + 2; ++b) {
        if (b >= 2 && b <= 16) out.push_back(b);
    }
    return out;
}

RunConfig run_config_from_json(const json& j) {
    RunConfig cfg;
    try {
        cfg.model_path = j.value("model", "");
        cfg.calib_path = j.value("calibration", "");
        cfg.base_bits = j.value("bits", 8);
        cfg.mixed = j.value("mixed", false);
        if (j.contains("bit_set")) cfg.bit_set = j.at("bit_set").get<std::vector<int>>();
        if (j.contains("budget_bytes") && !j.at("budget_bytes").is_null()) {
            cfg.budget_bytes = j.at("budget_bytes").get<std::uint64_t>();
        }
        if (j.contains("target_avg_bits") && !j.at("target_avg_bits").is_null()) {
            cfg.target_avg_bits = j.at("target_avg_bits").get<double>();
        }
        cfg.percentile = j.value("percentile", 99.9);
        cfg.seed = j.value("seed", std::uint64_t{1});
        if (j.contains("search")) {
            const json& s = j.at("search");
            cfg.search.alpha = s.value("alpha", cfg.search.alpha);
            cfg.search.beta = s.value("beta", cfg.search.beta);
            cfg.search.candidates = s.value("candidates", cfg.search.candidates);
            cfg.search.max_iter = s.value("max_iter", cfg.search.max_iter);
            cfg.search.gamma = s.value("gamma", cfg.search.gamma);
            cfg.search.theta = s.value("theta", cfg.search.theta);
            cfg.search.convergence_tol = s.value("convergence_tol", cfg.search.convergence_tol);
            cfg.search.ranking_max_pairs_per_row =
                s.value("ranking_max_pairs_per_row", cfg.search.ranking_max_pairs_per_row);
        }
        cfg.out_model = j.value("out_model", cfg.out_model);
        cfg.out_hooks = j.value("out_hooks", cfg.out_hooks);
        cfg.out_report = j.value("out_report", cfg.out_report);
        cfg.out_sensitivity = j.value("out_sensitivity", cfg.out_sensitivity);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config: ") + e.what());
    }
    cfg.search.seed = cfg.seed;
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open config '" + path + "'");
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

namespace {

std::size_t argmax(const Tensor& t) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < t.numel(); ++i) {
        if (t[i] > t[best]) best = i;
    }
    return best;
}

void check_finite_numbers(const json& j) {
    if (j.is_number_float() && !std::isfinite(j.get<double>())) {
        throw NumericError("report contains a non-finite number");
    }
    if (j.is_object() || j.is_array()) {
        for (const json& v : j) check_finite_numbers(v);
    }
}

void write_json_file(const json& doc, const std::string& path) {
    check_finite_numbers(doc);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << doc.dump(2) << "\n";
    if (!f) throw IoError("failed writing '" + path + "'");
}

json config_echo(const RunConfig& cfg) {
    return json{{"model", cfg.model_path},
                {"calibration", cfg.calib_path},
                {"bits", cfg.base_bits},
                {"mixed", cfg.mixed},
                {"bit_set", cfg.effective_bit_set()},
                {"budget_bytes", cfg.budget_bytes ? json(*cfg.budget_bytes) : json(nullptr)},
                {"target_avg_bits",
                 cfg.target_avg_bits ? json(*cfg.target_avg_bits) : json(nullptr)},
                {"percentile", cfg.percentile},
                {"seed", cfg.seed},
                {"search", json{{"alpha", cfg.search.alpha},
                                {"beta", cfg.search.beta},
                                {"candidates", cfg.search.candidates},
                                {"max_iter", cfg.search.max_iter},
                                {"gamma", cfg.search.gamma},
                                {"theta", cfg.search.theta},
                                {"convergence_tol", cfg.search.convergence_tol},
                                {"ranking_max_pairs_per_row",
                                 cfg.search.ranking_max_pairs_per_row}}}};
}

json sites_to_json(const QuantHooks& hooks) {
    json out = json::object();
    for (const auto& [id, p] : hooks) {
        out[id] = json{{"delta", static_cast<double>(p.delta)}, {"bits", p.bits}};
    }
    return out;
}

json groups_to_json(const std::vector<GroupOutcome>& groups) {
    json out = json::array();
    for (const GroupOutcome& g : groups) {
        out.push_back(json{{"id", g.id},
                           {"bits", g.bits},
                           {"delta_w", static_cast<double>(g.weight.delta)},
                           {"delta_x", static_cast<double>(g.input.delta)},
                           {"initial_objective", g.initial_objective},
                           {"final_objective", g.final_objective},
                           {"final_pearson", g.final_pearson},
                           {"final_ranking", g.final_ranking},
                           {"iterations", g.iterations},
                           {"trace", g.trace}});
    }
    return out;
}

json bias_to_json(const std::vector<BiasCorrectionResult>& bias) {
    json out = json::array();
    for (const BiasCorrectionResult& b : bias) {
        out.push_back(json{
            {"group", b.group},
            {"status",
             b.status == BiasCorrectionResult::Status::Corrected ? "corrected" : "no_bias"},
            {"pre_max_abs_unit_error", b.pre_max_abs_unit_error},
            {"post_max_abs_unit_error", b.post_max_abs_unit_error},
            {"pre_mean_abs_unit_error", b.pre_mean_abs_unit_error},
            {"post_mean_abs_unit_error", b.post_mean_abs_unit_error}});
    }
    return out;
}

json per_layer_pearson(const std::vector<GroupOutcome>& groups, std::size_t num_layers,
                       double* mean_out) {
    json out = json::array();
    double total = 0.0;
    for (std::size_t l = 0; l < num_layers; ++l) {
        const std::string prefix = "layer" + std::to_string(l) + ".";
        double sum = 0.0;
        std::size_t count = 0;
        for (const GroupOutcome& g : groups) {
            if (g.id.rfind(prefix, 0) == 0) {
                sum += g.final_pearson;
                ++count;
            }
        }
        const double mean = count ? sum / static_cast<double>(count) : 0.0;
        total += mean;
        out.push_back(json{{"layer", l}, {"mean_pearson", mean}});
    }
    *mean_out = num_layers ? total / static_cast<double>(num_layers) : 0.0;
    return out;
}

json metrics_to_json(const EvalMetrics& m) {
    return json{{"samples", m.samples},
                {"top1_agreement", m.top1_agreement},
                {"mean_abs_logit_error", m.mean_abs_logit_error},
                {"max_abs_logit_error", m.max_abs_logit_error},
                {"attention_inversions", m.attention_inversions},
                {"inversions_per_layer", m.inversions_per_layer}};
}

json sensitivity_to_json(const SensitivityTable& table) {
    json records = json::array();
    for (const SensitivityRecord& r : table.records) {
        records.push_back(json{{"module", r.module_id},
                               {"bits", r.bits},
                               {"omega", r.omega},
                               {"weight_bytes", r.weight_bytes}});
    }
    json norms = json::array();
    for (const auto& [id, value] : table.nuclear_norms) {
        norms.push_back(json{{"module", id}, {"value", value}});
    }
    return json{{"records", records}, {"nuclear_norms", norms}};
}

json allocation_to_json(const BitAllocation& alloc, std::uint64_t budget) {
    json modules = json::array();
    for (const auto& [id, bits] : alloc.bits_per_module) {
        modules.push_back(json{{"module", id}, {"bits", bits}});
    }
    return json{{"modules", modules},
                {"total_omega", alloc.total_omega},
                {"total_weight_bytes", alloc.total_weight_bytes},
                {"budget_bytes", budget}};
}

// Shared by quantize and baseline; they differ only in interval selection
// and bias correction.
json run_pipeline(const RunConfig& cfg, IntervalMode mode) {
    cfg.validate();
    const ViTModel model = load_model(cfg.model_path);
    const std::vector<Tensor> calib = load_calibration(cfg.calib_path);
    if (!calib.front().same_shape(
            Tensor({model.config.image_height, model.config.image_width,
                    model.config.channels}))) {
        throw ManifestShapeError("calibration sample shape does not match the model");
    }

    json sensitivity = nullptr;
    json allocation = nullptr;
    std::map<std::string, int> site_bits;
    if (cfg.mixed) {
        const std::vector<int> bit_set = cfg.effective_bit_set();
        const SensitivityTable table = compute_sensitivity(model, calib, bit_set);
        const std::uint64_t budget =
            cfg.budget_bytes ? *cfg.budget_bytes
                             : budget_from_avg_bits(model.config, *cfg.target_avg_bits);
        const BitAllocation alloc = allocate_bits(table.records, bit_set, budget);
        site_bits = allocation_site_bits(model.config, alloc, cfg.base_bits);
        sensitivity = sensitivity_to_json(table);
        allocation = allocation_to_json(alloc, budget);
    } else {
        site_bits = uniform_site_bits(model.config, cfg.base_bits);
    }

    CalibrationOptions opts;
    opts.search = cfg.search;
    opts.mode = mode;
    opts.percentile = cfg.percentile;
    opts.bias_correction = mode == IntervalMode::Search;

    const CalibrationOutcome outcome = calibrate_model(model, calib, site_bits, opts);
    const EvalMetrics metrics = evaluate_quantized(model, outcome.model, outcome.hooks, calib);
    const SizeBreakdown size = model_size_bytes(outcome.model, outcome.hooks);

    double mean_layer = 0.0;
    const json per_layer = per_layer_pearson(outcome.groups, model.config.num_layers, &mean_layer);

    json report{{"format", "vitq-report"},
                {"version", 1},
                {"mode", mode == IntervalMode::Search ? "quantize" : "baseline"},
                {"config", config_echo(cfg)},
                {"sites", sites_to_json(outcome.hooks)},
                {"groups", groups_to_json(outcome.groups)},
                {"bias_correction", bias_to_json(outcome.bias)},
                {"per_layer", per_layer},
                {"mean_layer_pearson", mean_layer},
                {"sensitivity", sensitivity},
                {"allocation", allocation},
                {"metrics", metrics_to_json(metrics)},
                {"size", json{{"full_precision_bytes", size.full_bytes},
                              {"quantized_bytes", size.quantized_bytes},
                              {"full_precision_mb", static_cast<double>(size.full_bytes) / 1e6},
                              {"quantized_mb", static_cast<double>(size.quantized_bytes) / 1e6}}}};

    save_model(outcome.model, cfg.out_model);
    save_hooks(outcome.hooks, cfg.out_hooks);
    write_json_file(report, cfg.out_report);
    return report;
}

} // namespace

EvalMetrics evaluate_quantized(const ViTModel& fp_model, const ViTModel& q_model,
                               const QuantHooks& hooks, const std::vector<Tensor>& calib) {
    if (calib.empty()) throw ValueError("evaluation needs at least one sample");
    if (fp_model.config != q_model.config) {
        throw ValueError("model configurations differ between the two forward passes");
    }
    validate_hooks(hooks, q_model.config);

    const std::size_t num_layers = fp_model.config.num_layers;
    const std::size_t heads = fp_model.config.num_heads;
    const std::size_t t = fp_model.config.seq_len();

    ActivationTap fp_tap, q_tap;
    for (std::size_t l = 0; l < num_layers; ++l) {
        fp_tap.wanted.insert(scores_tap_id(l));
        q_tap.wanted.insert(scores_tap_id(l));
    }

    EvalMetrics m;
    m.samples = calib.size();
    m.inversions_per_layer.assign(num_layers, 0);
    std::size_t agree = 0;
    double abs_sum = 0.0, abs_max = 0.0;
    std::size_t logit_count = 0;

    for (const Tensor& image : calib) {
        fp_tap.captured.clear();
        q_tap.captured.clear();
        const Tensor fp_logits = model_forward(image, fp_model, nullptr, &fp_tap);
        const Tensor q_logits = model_forward(image, q_model, &hooks, &q_tap);
        if (!fp_logits.all_finite() || !q_logits.all_finite()) {
            throw NumericError("non-finite logits during evaluation");
        }
        if (argmax(fp_logits) == argmax(q_logits)) ++agree;
        for (std::size_t j = 0; j < fp_logits.numel(); ++j) {
            const double d = std::fabs(static_cast<double>(fp_logits[j]) - q_logits[j]);
            abs_sum += d;
            abs_max = std::max(abs_max, d);
            ++logit_count;
        }
        for (std::size_t l = 0; l < num_layers; ++l) {
            const Tensor a = fp_tap.captured.at(scores_tap_id(l)).reshaped({heads * t, t});
            const Tensor b = q_tap.captured.at(scores_tap_id(l)).reshaped({heads * t, t});
            m.inversions_per_layer[l] += inversion_count(a, b);
        }
    }
    for (std::size_t c : m.inversions_per_layer) m.attention_inversions += c;
    m.top1_agreement = static_cast<double>(agree) / static_cast<double>(calib.size());
    m.mean_abs_logit_error = abs_sum / static_cast<double>(logit_count);
    m.max_abs_logit_error = abs_max;
    return m;
}

SizeBreakdown model_size_bytes(const ViTModel& m, const QuantHooks& hooks) {
    validate_hooks(hooks, m.config);
    SizeBreakdown out;
    auto full = [&](const Tensor& t) {
        out.full_bytes += t.numel() * 4;
        out.quantized_bytes += t.numel() * 4;
    };
    auto quantized = [&](const Tensor& t, const std::string& site) {
        out.full_bytes += t.numel() * 4;
        const int bits = hooks.at(site).bits;
        out.quantized_bytes +=
            (static_cast<std::uint64_t>(t.numel()) * static_cast<std::uint64_t>(bits) + 7) / 8;
    };

    quantized(m.patch_embed_w, site::embed_w());
    full(m.pos_embed);
    full(m.class_token);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const LayerWeights& lw = m.layers[l];
        quantized(lw.wq, site::msa(l, "q.w"));
        quantized(lw.wk, site::msa(l, "k.w"));
        quantized(lw.wv, site::msa(l, "v.w"));
        quantized(lw.wo, site::msa(l, "o.w"));
        quantized(lw.w1, site::mlp(l, "fc1.w"));
        quantized(lw.w2, site::mlp(l, "fc2.w"));
        full(lw.b1);
        full(lw.b2);
        full(lw.ln1_gamma);
        full(lw.ln1_beta);
        full(lw.ln2_gamma);
        full(lw.ln2_beta);
    }
    quantized(m.head_w, site::head_w());
    full(m.head_b);
    return out;
}

std::uint64_t budget_from_avg_bits(const ViTConfig& cfg, double avg_bits) {
    if (!(avg_bits >= 2.0 && avg_bits <= 16.0)) {
        throw ConfigError("target_avg_bits must lie in [2, 16]");
    }
    std::uint64_t params = 0;
    for (const ModuleRef& m : enumerate_modules(cfg)) {
        params += module_param_count(cfg, m.kind);
    }
    return static_cast<std::uint64_t>(static_cast<double>(params) * avg_bits / 8.0);
}

std::map<std::string, int> allocation_site_bits(const ViTConfig& cfg, const BitAllocation& alloc,
                                                int base_bits) {
    std::map<std::string, int> out = uniform_site_bits(cfg, base_bits);
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        const int msa_bits = alloc.bits_for("layer" + std::to_string(l) + ".msa");
        const int mlp_bits = alloc.bits_for("layer" + std::to_string(l) + ".mlp");
        for (const char* leaf : {"q.in", "q.w", "k.in", "k.w", "v.in", "v.w", "qk.q", "qk.k",
                                 "av.s", "av.v", "o.in", "o.w"}) {
            out[site::msa(l, leaf)] = msa_bits;
        }
        for (const char* leaf : {"fc1.in", "fc1.w", "fc2.in", "fc2.w"}) {
            out[site::mlp(l, leaf)] = mlp_bits;
        }
    }
    return out;
}

nlohmann::json run_quantize(const RunConfig& cfg) {
    return run_pipeline(cfg, IntervalMode::Search);
}

nlohmann::json run_baseline(const RunConfig& cfg) {
    return run_pipeline(cfg, IntervalMode::Percentile);
}

nlohmann::json run_sensitivity(const RunConfig& cfg) {
    cfg.validate();
    const ViTModel model = load_model(cfg.model_path);
    const std::vector<Tensor> calib = load_calibration(cfg.calib_path);
    const SensitivityTable table = compute_sensitivity(model, calib, cfg.effective_bit_set());
    save_sensitivity(table, cfg.out_sensitivity);
    json doc{{"format", "vitq-sensitivity"},
             {"config", config_echo(cfg)},
             {"records", sensitivity_to_json(table)["records"]},
             {"nuclear_norms", sensitivity_to_json(table)["nuclear_norms"]}};
    check_finite_numbers(doc);
    return doc;
}

nlohmann::json run_eval(const EvalPaths& paths) {
    if (paths.model.empty() || paths.hooks.empty() || paths.calib.empty()) {
        throw ConfigError("eval needs --model, --hooks and --calib");
    }
    const ViTModel fp_model = load_model(paths.model);
    const ViTModel q_model =
        paths.quantized_model.empty() ? fp_model : load_model(paths.quantized_model);
    const QuantHooks hooks = load_hooks(paths.hooks);
    const std::vector<Tensor> calib = load_calibration(paths.calib);

    const EvalMetrics m = evaluate_quantized(fp_model, q_model, hooks, calib);
    json doc{{"format", "vitq-eval"},
             {"model", paths.model},
             {"quantized_model",
              paths.quantized_model.empty() ? paths.model : paths.quantized_model},
             {"metrics", metrics_to_json(m)}};
    if (!paths.out_report.empty()) write_json_file(doc, paths.out_report);
    check_finite_numbers(doc);
    return doc;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const InfeasibleBudgetError*>(&e)) return 4;
    if (dynamic_cast<const NumericError*>(&e)) return 5;
    if (dynamic_cast<const ContainerError*>(&e)) return 3;
    if (dynamic_cast<const IoError*>(&e)) return 3;
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const ValueError*>(&e)) return 2;
    if (dynamic_cast<const MissingSiteError*>(&e)) return 2;
    if (dynamic_cast<const ShapeError*>(&e)) return 3;
    return 1;
}

} // namespace vitq
