#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pclvd/scope.hpp"

namespace pclvd {

using UnitId = std::uint32_t;

/// Evidence value meaning "sum this variable out".
inline constexpr std::int32_t kMarginalized = -1;

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

/// Tolerance on |sum of weights - 1| accepted by the Circuit constructor.
inline constexpr double kNormalizationTolerance = 1e-12;

enum class UnitKind : std::uint8_t { Input, Sum, Product };

const char* to_string(UnitKind kind) noexcept;

struct Unit {
    UnitKind kind = UnitKind::Input;
    Scope scope;
    std::vector<UnitId> children;
    std::vector<double> log_weights;  // Sum: log theta_{c|n}, aligned with children
    VarId var = 0;                    // Input
    std::vector<double> log_dist;     // Input: log f_n over the categories of var
    bool indicator = false;           // Input: fixed 0/1 distribution of a materialized LV, not a parameter
};

/// Row-major matrix of evidence. A row assigns every variable of a circuit;
/// kMarginalized entries are summed out.
struct DataMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::int32_t> values;

    DataMatrix() = default;
    DataMatrix(std::size_t r, std::size_t c, std::int32_t fill = kMarginalized)
        : rows(r), cols(c), values(r * c, fill) {}

    std::span<const std::int32_t> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
    std::span<std::int32_t> row(std::size_t i) { return {values.data() + i * cols, cols}; }
    std::int32_t& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
    std::int32_t at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

    /// Copy with extra trailing columns filled with kMarginalized.
    DataMatrix widened(std::size_t new_cols) const;
    DataMatrix select_rows(std::span<const std::size_t> idx) const;
};

/// Immutable probabilistic circuit. Units are stored in topological order
/// (children precede parents); the root is an arbitrary unit from which every
/// other unit is reachable. Observed variables occupy [0, num_observed);
/// materialized latent variables are appended after them.
class Circuit {
public:
    Circuit(std::vector<Unit> units, UnitId root, std::vector<std::uint32_t> var_cards,
            std::size_t num_observed);

    std::size_t size() const noexcept { return units_.size(); }
    const Unit& unit(UnitId id) const { return units_.at(id); }
    const std::vector<Unit>& units() const noexcept { return units_; }
    UnitId root() const noexcept { return root_; }
    const Scope& root_scope() const { return units_[root_].scope; }

    std::size_t num_vars() const noexcept { return var_cards_.size(); }
    std::size_t num_observed() const noexcept { return num_observed_; }
    const std::vector<std::uint32_t>& var_cards() const noexcept { return var_cards_; }
    std::uint32_t card(VarId v) const { return var_cards_.at(v); }

    /// Scope of a unit with latent variables removed.
    Scope observed_scope(UnitId id) const;

    bool is_smooth() const noexcept { return smooth_; }
    bool is_decomposable() const noexcept { return decomposable_; }

    /// Flat parameter layout: every sum contributes its log weights and every
    /// non-indicator input its log distribution, in unit order.
    bool has_parameters(UnitId id) const;
    std::size_t param_offset(UnitId id) const { return param_offset_.at(id); }
    std::size_t param_count(UnitId id) const;
    std::size_t num_parameters() const noexcept { return num_params_; }
    std::size_t num_edges() const noexcept;
    std::vector<double> parameters() const;
    Circuit with_parameters(std::span<const double> log_params) const;

private:
    std::vector<Unit> units_;
    UnitId root_ = 0;
    std::vector<std::uint32_t> var_cards_;
    std::size_t num_observed_ = 0;
    std::vector<std::size_t> param_offset_;
    std::size_t num_params_ = 0;
    bool smooth_ = false;
    bool decomposable_ = false;
};

/// Incremental construction helper. Units must be added children-first.
class CircuitBuilder {
public:
    explicit CircuitBuilder(std::vector<std::uint32_t> var_cards, std::size_t num_observed);
    explicit CircuitBuilder(std::vector<std::uint32_t> var_cards);

    UnitId add_input(VarId var, const std::vector<double>& probs);
    UnitId add_input_log(VarId var, std::vector<double> log_probs);
    UnitId add_indicator(VarId var, std::uint32_t value);
    /// Weights are normalized before being stored.
    UnitId add_sum(std::vector<UnitId> children, const std::vector<double>& weights);
    UnitId add_sum_uniform(std::vector<UnitId> children);
    UnitId add_sum_log(std::vector<UnitId> children, std::vector<double> log_weights);
    UnitId add_product(std::vector<UnitId> children);
    UnitId add_unit(Unit unit);

    std::size_t size() const noexcept { return units_.size(); }
    const std::vector<std::uint32_t>& var_cards() const noexcept { return var_cards_; }
    Circuit build(UnitId root) &&;

private:
    std::vector<std::uint32_t> var_cards_;
    std::size_t num_observed_;
    std::vector<Unit> units_;
};

/// A standalone circuit cut out of a larger one, with the map back to the
/// source unit ids.
struct ExtractedCircuit {
    Circuit circuit;
    std::vector<UnitId> source_of;  // extracted id -> source id
};

/// Copies the sub-DAG below `root`. Units listed in `substitute` are replaced
/// by the unit they map to (which is then copied instead).
ExtractedCircuit extract_subcircuit(const Circuit& c, UnitId root,
                                    const std::unordered_map<UnitId, UnitId>& substitute = {});

/// Writes the parameters of an extracted circuit back into a flat parameter
/// vector of the source circuit.
void write_back_parameters(const Circuit& source, const ExtractedCircuit& part,
                           const Circuit& trained_part, std::vector<double>& source_params);

/// Units reachable from `root` (inclusive), in ascending id order.
std::vector<UnitId> descendants(const Circuit& c, UnitId root);

double log_sum_exp(std::span<const double> xs);

} // namespace pclvd
