#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vitq/sensitivity.hpp"

namespace vitq {

struct BitAllocation {
    std::vector<std::pair<std::string, int>> bits_per_module; // module order
    double total_omega = 0.0;
    std::uint64_t total_weight_bytes = 0;

    int bits_for(const std::string& module_id) const;
};

// Picks one bit-width per module from bit_set, minimizing the summed
// perturbation metric subject to total weight bytes <= budget. Exact dynamic
// program over byte-discretized sizes; ties prefer the smaller total size.
// Throws InfeasibleBudgetError when even the minimum-bit assignment does not
// fit.
BitAllocation allocate_bits(const std::vector<SensitivityRecord>& records,
                            const std::vector<int>& bit_set, std::uint64_t budget_bytes);

// Uniform-assignment size at the given bits, the usual budget reference.
std::uint64_t uniform_assignment_bytes(const ViTConfig& cfg, int bits);

} // namespace vitq
