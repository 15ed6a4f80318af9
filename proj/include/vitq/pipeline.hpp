#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vitq/allocate.hpp"
#include "vitq/calibrate.hpp"
#include "vitq/sensitivity.hpp"

namespace vitq {

struct RunConfig {
    std::string model_path;
    std::string calib_path;
    int base_bits = 8;
    bool mixed = false;
    std::vector<int> bit_set; // empty: {base_bits-2 .. base_bits+2} clamped to [2,16]
    std::optional<std::uint64_t> budget_bytes;
    std::optional<double> target_avg_bits;
    SearchConfig search;
    double percentile = 99.9;
    std::uint64_t seed = 1;
    std::string out_model = "quantized.vitm";
    std::string out_hooks = "hooks.json";
    std::string out_report = "report.json";
    std::string out_sensitivity = "sensitivity.json";

    void validate() const;
    std::vector<int> effective_bit_set() const;
};

RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

struct EvalMetrics {
    std::size_t samples = 0;
    double top1_agreement = 0.0;
    double mean_abs_logit_error = 0.0;
    double max_abs_logit_error = 0.0;
    std::size_t attention_inversions = 0;
    std::vector<std::size_t> inversions_per_layer;
};

// Full-precision vs quantized forward passes over the calibration set:
// argmax agreement, logit deviations, and the count of attention-score pairs
// whose relative order flips.
EvalMetrics evaluate_quantized(const ViTModel& fp_model, const ViTModel& q_model,
                               const QuantHooks& hooks, const std::vector<Tensor>& calib);

struct SizeBreakdown {
    std::uint64_t full_bytes = 0;
    std::uint64_t quantized_bytes = 0;
};

// Quantized weight bytes at each site's bit-width plus full-precision bytes
// for everything that stays unquantized (LN parameters, biases, positional
// embedding, class token).
SizeBreakdown model_size_bytes(const ViTModel& m, const QuantHooks& hooks);

std::uint64_t budget_from_avg_bits(const ViTConfig& cfg, double avg_bits);

// Bit-width per site under a mixed allocation; embedding and head stay at
// base_bits.
std::map<std::string, int> allocation_site_bits(const ViTConfig& cfg, const BitAllocation& alloc,
                                                int base_bits);

// The four commands, as library calls. Each writes its artifacts and returns
// the report document.
nlohmann::json run_quantize(const RunConfig& cfg);
nlohmann::json run_baseline(const RunConfig& cfg);
nlohmann::json run_sensitivity(const RunConfig& cfg);

struct EvalPaths {
    std::string model;           // full-precision reference
    std::string quantized_model; // empty: same as model
    std::string hooks;
    std::string calib;
    std::string out_report; // empty: do not write
};

nlohmann::json run_eval(const EvalPaths& paths);

// Exit codes: 0 success, 2 config error, 3 I/O or malformed input, 4
// infeasible budget, 5 numeric failure.
int exit_code_for(const std::exception& e);

} // namespace vitq
