#pragma once

#include <cstdint>
#include <vector>

#include "pclvd/circuit.hpp"

namespace pclvd {

/// One materialized latent variable Z.
struct MaterializationRecord {
    VarId z_var = 0;
    Scope scope;                     // W, over observed variables
    std::vector<UnitId> units;       // S_W in topological order; units[j] carries the indicator Z = j
    std::vector<UnitId> indicators;  // indicator input attached to units[j]

    std::uint32_t cardinality() const { return static_cast<std::uint32_t>(units.size()); }
};

/// Disjoint parts {X_i} covering the observed variables, each with the number
/// of categories its LV is expected to take.
struct PartitionSpec {
    std::vector<Scope> parts;
    std::vector<std::uint32_t> categories;
};

struct MaterializeResult {
    Circuit circuit;
    std::vector<MaterializationRecord> records;
    std::vector<UnitId> unit_map;  // source unit id -> augmented unit id
};

/// Throws StructuralError naming the first unit whose observed scope
/// partially overlaps `w` (neither subset, superset nor disjoint).
void check_materialization_scope(const Circuit& c, const Scope& w);

/// Sums whose observed scope equals w.
std::vector<UnitId> scope_sums(const Circuit& c, const Scope& w);

/// Attaches an indicator Z = j to the j-th product unit whose observed scope
/// is w. A sum with scope w that sits directly on input units first gets a
/// single-child product per input. Records in `prior` are remapped into the
/// new circuit and returned ahead of the new record.
MaterializeResult materialize_lv(const Circuit& c, const Scope& w,
                                 const std::vector<MaterializationRecord>& prior = {});

/// Materializes one LV per scope, in order.
MaterializeResult materialize_sequence(const Circuit& c, const std::vector<Scope>& scopes);

MaterializeResult materialize_partition(const Circuit& c, const PartitionSpec& partition);

inline constexpr std::size_t kLemmaOracleMaxVars = 14;

/// Enumeration check that W is independent of every other root-scope
/// variable given Z: |p(w|z) - p(w|z,y)| < 1e-9 wherever p(z,y) > 0.
bool lemma1_oracle(const Circuit& c_aug, const Scope& w, VarId z_var);

} // namespace pclvd
