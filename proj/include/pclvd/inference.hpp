#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pclvd/circuit.hpp"

namespace pclvd {

/// Per-sample leaf values that replace the distribution of selected units.
/// `slot[u]` is the column of unit u in `values` (row-major, one row per
/// dataset row) or -1 when u is evaluated normally.
struct LeafOverrides {
    std::vector<std::int32_t> slot;
    std::size_t num_slots = 0;
    std::span<const double> values;

    double value(std::size_t row, std::int32_t s) const { return values[row * num_slots + static_cast<std::size_t>(s)]; }
};

/// Bottom-up log-space pass. `values` must have c.size() entries; marginalized
/// variables contribute log 1. `row` indexes `overrides` when given.
void forward(const Circuit& c, std::span<const std::int32_t> evidence, std::span<double> values,
             const LeafOverrides* overrides = nullptr, std::size_t row = 0);

/// log p(a) for an assignment that covers the root scope.
double evaluate(const Circuit& c, std::span<const std::int32_t> assignment);

/// log of the sum over all completions of a partial assignment. Requires a
/// smooth and decomposable circuit.
double marginal(const Circuit& c, std::span<const std::int32_t> assignment);

struct StructureViolation {
    UnitId unit;
    std::string what;
};

struct StructureReport {
    bool smooth = true;
    bool decomposable = true;
    std::vector<StructureViolation> violations;
};

StructureReport check_structure(const Circuit& c);

/// Largest number of scope configurations check_deterministic will enumerate.
inline constexpr std::uint64_t kMaxDeterminismConfigs = std::uint64_t{1} << 20;

/// Enumeration oracle: true iff no complete assignment of scope(sum_unit)
/// gives two children non-zero probability.
bool check_deterministic(const Circuit& c, UnitId sum_unit);

/// Calls `fn(assignment)` for every configuration of `vars` (others left as
/// kMarginalized). Last variable varies fastest.
template <class Fn>
void for_each_configuration(const std::vector<std::uint32_t>& cards, const std::vector<VarId>& vars,
                            std::size_t num_vars, Fn&& fn) {
    std::vector<std::int32_t> a(num_vars, kMarginalized);
    for (VarId v : vars) a[v] = 0;
    while (true) {
        fn(std::span<const std::int32_t>(a));
        std::size_t k = vars.size();
        while (k > 0) {
            const VarId v = vars[k - 1];
            if (static_cast<std::uint32_t>(++a[v]) < cards[v]) break;
            a[v] = 0;
            --k;
        }
        if (k == 0) return;
    }
}

std::uint64_t configuration_count(const std::vector<std::uint32_t>& cards, const std::vector<VarId>& vars,
                                  std::uint64_t cap);

} // namespace pclvd
