#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vitq/search.hpp"
#include "vitq/vit.hpp"

namespace vitq {

// Static description of one searchable site group, in topological order.
struct GroupSpec {
    enum class Kind { Embed, Q, K, V, QK, AV, O, FC1, FC2, Head };

    std::string id;
    Kind kind;
    std::size_t layer = 0; // meaningful for per-layer kinds
    std::string weight_site, input_site;

    bool ranking_aware() const { return kind == Kind::Q || kind == Kind::K; }
    bool has_bias() const {
        return kind == Kind::FC1 || kind == Kind::FC2 || kind == Kind::Head;
    }
};

std::vector<GroupSpec> enumerate_groups(const ViTConfig& cfg);

// Bit-width per site id.
std::map<std::string, int> uniform_site_bits(const ViTConfig& cfg, int bits);

struct BiasCorrectionResult {
    std::string group;
    enum class Status { Corrected, NoBias } status;
    double pre_max_abs_unit_error = 0.0;  // max over units of |mean output error|
    double post_max_abs_unit_error = 0.0;
    double pre_mean_abs_unit_error = 0.0;
    double post_mean_abs_unit_error = 0.0;
};

// Subtracts the calibration-mean output error per unit from the bias so the
// quantized output mean matches the full-precision one. `bias` may be null
// (site without a bias parameter): no-op with a warning status.
// inputs are the cached per-sample activations, outputs O = X W + bias.
BiasCorrectionResult bias_correct(const std::string& group_id, Tensor* bias,
                                  const std::vector<Tensor>& inputs, const Tensor& weight,
                                  const QuantParams& pw, const QuantParams& px);

struct GroupOutcome {
    std::string id;
    int bits = 8;
    QuantParams weight, input;
    double initial_objective = 0.0;
    double final_objective = 0.0;
    double final_pearson = 0.0;
    double final_ranking = 0.0;
    std::vector<double> trace;
    int iterations = 0;
};

enum class IntervalMode { Search, Percentile };

struct CalibrationOptions {
    SearchConfig search;
    IntervalMode mode = IntervalMode::Search;
    double percentile = 99.9;   // percentile mode only
    bool bias_correction = true;
};

struct CalibrationOutcome {
    ViTModel model; // biases corrected
    QuantHooks hooks;
    std::vector<GroupOutcome> groups;
    std::vector<BiasCorrectionResult> bias;
};

// Processes site groups in topological order. Each group caches the operands
// produced by the already-quantized prefix of the network, picks its
// intervals (alternating search, or a percentile of the cached values), and
// groups with a bias parameter then absorb the mean output error.
CalibrationOutcome calibrate_model(const ViTModel& model, const std::vector<Tensor>& calib,
                                   const std::map<std::string, int>& site_bits,
                                   const CalibrationOptions& opts);

// Builds a SiteGroup with freshly cached operands for one spec; exposed for
// tests and the sensitivity probe.
SiteGroup build_site_group(const GroupSpec& spec, const ViTModel& model,
                           const QuantHooks& prefix_hooks, const std::vector<Tensor>& calib,
                           int bits, const SearchConfig& cfg);

} // namespace vitq
