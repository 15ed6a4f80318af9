#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vitq/vit.hpp"

namespace vitq {

// One MSA or MLP module of a transformer layer; bit-widths are assigned at
// this granularity so every operation inside a module shares them.
struct ModuleRef {
    enum class Kind { MSA, MLP };
    std::size_t layer = 0;
    Kind kind = Kind::MSA;

    std::string id() const;
};

std::vector<ModuleRef> enumerate_modules(const ViTConfig& cfg);
ModuleRef parse_module_id(const std::string& id);

// Quantized parameter count of one module (weights only; biases and LN stay
// full precision).
std::uint64_t module_param_count(const ViTConfig& cfg, ModuleRef::Kind kind);
std::uint64_t module_weight_bytes(const ViTConfig& cfg, ModuleRef::Kind kind, int bits);

struct SensitivityRecord {
    std::string module_id;
    int bits = 8;
    double omega = 0.0;
    std::uint64_t weight_bytes = 0;
};

struct SensitivityTable {
    std::vector<SensitivityRecord> records; // module-major, bits ascending
    // Mean nuclear norm of each module's probed quantity (attention map for
    // MSA, output feature for MLP), for plotting.
    std::vector<std::pair<std::string, double>> nuclear_norms;
};

// Perturbation metric for one module at one bit-width: the nuclear norm of
// the full-precision quantity times the squared error of its quantized
// counterpart, averaged over calibration samples (and heads for MSA). The
// probe quantizes only this module's sites, at max-initialized intervals.
SensitivityRecord module_sensitivity(const ViTModel& model, const std::vector<Tensor>& calib,
                                     const ModuleRef& module, int bits);

SensitivityTable compute_sensitivity(const ViTModel& model, const std::vector<Tensor>& calib,
                                     const std::vector<int>& bit_set);

void save_sensitivity(const SensitivityTable& table, const std::string& path);
SensitivityTable load_sensitivity(const std::string& path);

} // namespace vitq
