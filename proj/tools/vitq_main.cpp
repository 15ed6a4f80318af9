#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "vitq/container.hpp"
#include "vitq/pipeline.hpp"
#include "vitq/synthetic.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<int> bits;
    bool mixed = false;
    std::optional<std::uint64_t> budget_bytes;
    std::optional<std::uint64_t> seed;
    std::optional<double> percentile;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON run configuration")->required();
    cmd->add_option("--bits", f.bits, "override base bit-width");
    cmd->add_flag("--mixed", f.mixed, "enable mixed-precision allocation");
    cmd->add_option("--budget-bytes", f.budget_bytes, "weight-byte budget for mixed runs");
    cmd->add_option("--seed", f.seed, "override the run seed");
    cmd->add_option("--percentile", f.percentile, "override the baseline percentile");
    cmd->add_option("--out", f.out_dir,
                    "directory for artifacts (replaces configured output paths)");
}

vitq::RunConfig resolve_config(const CommonFlags& f) {
    vitq::RunConfig cfg = vitq::load_run_config(f.config_path);
    if (f.bits) cfg.base_bits = *f.bits;
    if (f.mixed) cfg.mixed = true;
    if (f.budget_bytes) {
        cfg.budget_bytes = *f.budget_bytes;
        cfg.target_avg_bits.reset();
    }
    if (f.seed) {
        cfg.seed = *f.seed;
        cfg.search.seed = *f.seed;
    }
    if (f.percentile) cfg.percentile = *f.percentile;
    if (!f.out_dir.empty()) {
        std::filesystem::create_directories(f.out_dir);
        const std::filesystem::path dir(f.out_dir);
        cfg.out_model = (dir / "quantized.vitm").string();
        cfg.out_hooks = (dir / "hooks.json").string();
        cfg.out_report = (dir / "report.json").string();
        cfg.out_sensitivity = (dir / "sensitivity.json").string();
    }
    return cfg;
}

void print_summary(const nlohmann::json& report) {
    if (report.contains("metrics")) {
        const auto& m = report.at("metrics");
        std::cout << "top-1 agreement: " << m.at("top1_agreement").get<double>()
                  << "  mean |logit err|: " << m.at("mean_abs_logit_error").get<double>()
                  << "\n";
    }
    if (report.contains("size")) {
        const auto& s = report.at("size");
        std::cout << "size: " << s.at("full_precision_mb").get<double>() << " MB -> "
                  << s.at("quantized_mb").get<double>() << " MB\n";
    }
}

int run_gen(const std::string& out_model, const std::string& out_calib, std::size_t image,
            std::size_t patch, std::size_t channels, std::size_t embed_dim, std::size_t layers,
            std::size_t heads, std::size_t mlp_dim, std::size_t classes, std::size_t samples,
            std::uint64_t seed) {
    vitq::ViTConfig cfg;
    cfg.image_height = image;
    cfg.image_width = image;
    cfg.channels = channels;
    cfg.patch_size = patch;
    cfg.embed_dim = embed_dim;
    cfg.num_layers = layers;
    cfg.num_heads = heads;
    cfg.mlp_dim = mlp_dim;
    cfg.num_classes = classes;
    const vitq::ViTModel model = vitq::make_toy_model(cfg, seed);
    vitq::save_model(model, out_model);
    vitq::save_calibration(vitq::make_calibration(cfg, samples, seed + 1), out_calib);
    std::cout << "wrote " << out_model << " and " << out_calib << " (" << samples
              << " samples)\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"post-training quantization for a small vision transformer"};
    app.require_subcommand(1);

    CommonFlags quantize_flags, baseline_flags, sensitivity_flags;
    CLI::App* quantize = app.add_subcommand("quantize", "search intervals and quantize a model");
    add_common(quantize, quantize_flags);
    CLI::App* baseline =
        app.add_subcommand("baseline", "quantize with percentile intervals, no search");
    add_common(baseline, baseline_flags);
    CLI::App* sensitivity =
        app.add_subcommand("sensitivity", "emit the per-module sensitivity table");
    add_common(sensitivity, sensitivity_flags);

    vitq::EvalPaths eval_paths;
    CLI::App* eval = app.add_subcommand("eval", "compare quantized and full-precision passes");
    eval->add_option("--model", eval_paths.model, "full-precision model (.vitm)")->required();
    eval->add_option("--quantized", eval_paths.quantized_model,
                     "quantized model (.vitm); defaults to --model");
    eval->add_option("--hooks", eval_paths.hooks, "quantization hooks (.json)")->required();
    eval->add_option("--calib", eval_paths.calib, "evaluation samples (.vitt)")->required();
    eval->add_option("--out", eval_paths.out_report, "write metrics JSON here");

    std::string gen_model = "toy.vitm", gen_calib = "calib.vitt";
    std::size_t gen_image = 16, gen_patch = 4, gen_channels = 3, gen_embed = 32, gen_layers = 2,
                gen_heads = 4, gen_mlp = 64, gen_classes = 10, gen_samples = 64;
    std::uint64_t gen_seed = 7;
    CLI::App* gen = app.add_subcommand("gen", "generate a toy model and calibration set");
    gen->add_option("--out-model", gen_model, "model output path");
    gen->add_option("--out-calib", gen_calib, "calibration output path");
    gen->add_option("--image-size", gen_image, "square image side");
    gen->add_option("--patch-size", gen_patch, "patch side");
    gen->add_option("--channels", gen_channels, "image channels");
    gen->add_option("--embed-dim", gen_embed, "embedding dimension");
    gen->add_option("--layers", gen_layers, "transformer layers");
    gen->add_option("--heads", gen_heads, "attention heads");
    gen->add_option("--mlp-dim", gen_mlp, "MLP hidden dimension");
    gen->add_option("--classes", gen_classes, "number of classes");
    gen->add_option("--samples", gen_samples, "calibration samples");
    gen->add_option("--seed", gen_seed, "generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (quantize->parsed()) {
            print_summary(vitq::run_quantize(resolve_config(quantize_flags)));
        } else if (baseline->parsed()) {
            print_summary(vitq::run_baseline(resolve_config(baseline_flags)));
        } else if (sensitivity->parsed()) {
            const auto doc = vitq::run_sensitivity(resolve_config(sensitivity_flags));
            std::cout << doc.at("records").size() << " sensitivity records written\n";
        } else if (eval->parsed()) {
            const auto doc = vitq::run_eval(eval_paths);
            std::cout << doc.at("metrics").dump(2) << "\n";
        } else if (gen->parsed()) {
            return run_gen(gen_model, gen_calib, gen_image, gen_patch, gen_channels, gen_embed,
                           gen_layers, gen_heads, gen_mlp, gen_classes, gen_samples, gen_seed);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return vitq::exit_code_for(e);
    }
    return 0;
}
