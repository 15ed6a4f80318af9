#include "vitq/allocate.hpp"

#include <algorithm>
#include <limits>
#include <map>

#include "vitq/errors.hpp"

namespace vitq {

int BitAllocation::bits_for(const std::string& module_id) const {
    for (const auto& [id, bits] : bits_per_module) {
        if (id == module_id) return bits;
    }
    throw ValueError("module '" + module_id + "' is not in the allocation");
}

namespace {

struct Option {
    int bits;
    double omega;
    std::uint64_t bytes;
};

struct Cell {
    double omega = 0.0;
    std::uint64_t bytes = 0;
    bool ok = false;
};

// Lexicographic (omega, bytes): the cheapest perturbation, smaller size on
// ties.
bool better(const Cell& a, const Cell& b) {
    if (!b.ok) return a.ok;
    if (!a.ok) return false;
    if (a.omega != b.omega) return a.omega < b.omega;
    return a.bytes < b.bytes;
}

} // namespace

BitAllocation allocate_bits(const std::vector<SensitivityRecord>& records,
                            const std::vector<int>& bit_set, std::uint64_t budget_bytes) {
    if (bit_set.empty()) throw ValueError("bit set is empty");

    // Group records by module, preserving first-appearance order.
    std::vector<std::string> modules;
    std::map<std::string, std::map<int, const SensitivityRecord*>> by_module;
    for (const SensitivityRecord& r : records) {
        auto [it, inserted] = by_module.try_emplace(r.module_id);
        if (inserted) modules.push_back(r.module_id);
        if (!it->second.emplace(r.bits, &r).second) {
            throw ValueError("duplicate record for module '" + r.module_id + "' at " +
                             std::to_string(r.bits) + " bits");
        }
    }
    if (modules.empty()) throw ValueError("no sensitivity records");

    std::vector<std::vector<Option>> options(modules.size());
    std::uint64_t min_total = 0, max_total = 0;
    for (std::size_t m = 0; m < modules.size(); ++m) {
        std::uint64_t mn = std::numeric_limits<std::uint64_t>::max(), mx = 0;
        for (int bits : bit_set) {
            auto it = by_module[modules[m]].find(bits);
            if (it == by_module[modules[m]].end()) {
                throw ValueError("module '" + modules[m] + "' has no record at " +
                                 std::to_string(bits) + " bits");
            }
            const SensitivityRecord* r = it->second;
            options[m].push_back({bits, r->omega, r->weight_bytes});
            mn = std::min(mn, r->weight_bytes);
            mx = std::max(mx, r->weight_bytes);
        }
        std::sort(options[m].begin(), options[m].end(),
                  [](const Option& a, const Option& b) { return a.bits < b.bits; });
        min_total += mn;
        max_total += mx;
    }
    if (min_total > budget_bytes) {
        throw InfeasibleBudgetError("budget of " + std::to_string(budget_bytes) +
                                    " bytes is below the minimum-bit size of " +
                                    std::to_string(min_total) + " bytes");
    }

    const std::uint64_t cap = std::min(budget_bytes, max_total);
    std::vector<Cell> dp(cap + 1, Cell{0.0, 0, true});
    std::vector<std::vector<std::int16_t>> choice(modules.size(),
                                                  std::vector<std::int16_t>(cap + 1, -1));

    for (std::size_t m = 0; m < modules.size(); ++m) {
        std::vector<Cell> next(cap + 1);
        for (std::uint64_t c = 0; c <= cap; ++c) {
            Cell best;
            std::int16_t best_opt = -1;
            for (std::size_t o = 0; o < options[m].size(); ++o) {
                const Option& opt = options[m][o];
                if (opt.bytes > c) continue;
                const Cell& prev = dp[c - opt.bytes];
                if (!prev.ok) continue;
                Cell cand{prev.omega + opt.omega, prev.bytes + opt.bytes, true};
                if (better(cand, best)) {
                    best = cand;
                    best_opt = static_cast<std::int16_t>(o);
                }
            }
            next[c] = best;
            choice[m][c] = best_opt;
        }
        dp = std::move(next);
    }
    if (!dp[cap].ok) {
        throw InfeasibleBudgetError("no feasible assignment within " +
                                    std::to_string(budget_bytes) + " bytes");
    }

    BitAllocation alloc;
    alloc.bits_per_module.resize(modules.size());
    std::uint64_t c = cap;
    for (std::size_t m = modules.size(); m-- > 0;) {
        const std::int16_t o = choice[m][c];
        const Option& opt = options[m][static_cast<std::size_t>(o)];
        alloc.bits_per_module[m] = {modules[m], opt.bits};
        c -= opt.bytes;
    }
    for (std::size_t m = 0; m < modules.size(); ++m) {
        const int bits = alloc.bits_per_module[m].second;
        for (const Option& opt : options[m]) {
            if (opt.bits == bits) {
                alloc.total_omega += opt.omega;
                alloc.total_weight_bytes += opt.bytes;
            }
        }
    }
    return alloc;
}

std::uint64_t uniform_assignment_bytes(const ViTConfig& cfg, int bits) {
    std::uint64_t total = 0;
    for (const ModuleRef& m : enumerate_modules(cfg)) {
        total += module_weight_bytes(cfg, m.kind, bits);
    }
    return total;
}

} // namespace vitq
