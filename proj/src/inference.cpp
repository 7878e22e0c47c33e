#include "pclvd/inference.hpp"

#include <algorithm>
#include <cmath>

#include "pclvd/error.hpp"

namespace pclvd {

void forward(const Circuit& c, std::span<const std::int32_t> evidence, std::span<double> values,
             const LeafOverrides* overrides, std::size_t row) {
    if (evidence.size() != c.num_vars()) {
        throw ShapeError("evidence has " + std::to_string(evidence.size()) + " entries, circuit has " +
                         std::to_string(c.num_vars()) + " variables");
    }
    const auto& units = c.units();
    for (std::size_t id = 0; id < units.size(); ++id) {
        const Unit& u = units[id];
        if (overrides && overrides->slot[id] >= 0) {
            values[id] = overrides->value(row, overrides->slot[id]);
            continue;
        }
        switch (u.kind) {
        case UnitKind::Input: {
            const std::int32_t x = evidence[u.var];
            if (x == kMarginalized) {
                values[id] = 0.0;
            } else {
                if (x < 0 || static_cast<std::size_t>(x) >= u.log_dist.size()) {
                    throw DomainError("value " + std::to_string(x) + " out of range for variable " +
                                      std::to_string(u.var));
                }
                values[id] = u.log_dist[static_cast<std::size_t>(x)];
            }
            break;
        }
        case UnitKind::Product: {
            double s = 0.0;
            for (UnitId ch : u.children) s += values[ch];
            values[id] = s;
            break;
        }
        case UnitKind::Sum: {
            double m = kLogZero;
            for (std::size_t k = 0; k < u.children.size(); ++k) {
                m = std::max(m, u.log_weights[k] + values[u.children[k]]);
            }
            if (m == kLogZero) {
                values[id] = kLogZero;
                break;
            }
            double s = 0.0;
            for (std::size_t k = 0; k < u.children.size(); ++k) {
                s += std::exp(u.log_weights[k] + values[u.children[k]] - m);
            }
            values[id] = m + std::log(s);
            break;
        }
        }
    }
}

double evaluate(const Circuit& c, std::span<const std::int32_t> assignment) {
    if (assignment.size() != c.num_vars()) throw ShapeError("assignment size does not match circuit variables");
    for (VarId v : c.root_scope().indices()) {
        if (assignment[v] == kMarginalized) {
            throw PreconditionError("assignment leaves variable " + std::to_string(v) + " unassigned");
        }
    }
    std::vector<double> values(c.size());
    forward(c, assignment, values);
    return values[c.root()];
}

double marginal(const Circuit& c, std::span<const std::int32_t> assignment) {
    if (!c.is_smooth() || !c.is_decomposable()) {
        throw StructuralError("marginal queries need a smooth and decomposable circuit");
    }
    std::vector<double> values(c.size());
    forward(c, assignment, values);
    return values[c.root()];
}

StructureReport check_structure(const Circuit& c) {
    StructureReport r;
    for (UnitId id = 0; id < c.size(); ++id) {
        const Unit& u = c.unit(id);
        if (u.kind == UnitKind::Sum) {
            for (UnitId ch : u.children) {
                if (!(c.unit(ch).scope == u.scope)) {
                    r.smooth = false;
                    r.violations.push_back({id, "sum children have different scopes"});
                    break;
                }
            }
        } else if (u.kind == UnitKind::Product) {
            Scope seen(c.num_vars());
            for (UnitId ch : u.children) {
                if (!seen.is_disjoint_from(c.unit(ch).scope)) {
                    r.decomposable = false;
                    r.violations.push_back({id, "product children have overlapping scopes"});
                    break;
                }
                seen |= c.unit(ch).scope;
            }
        }
    }
    return r;
}

std::uint64_t configuration_count(const std::vector<std::uint32_t>& cards, const std::vector<VarId>& vars,
                                  std::uint64_t cap) {
    std::uint64_t n = 1;
    for (VarId v : vars) {
        n *= cards[v];
        if (n > cap) return cap + 1;
    }
    return n;
}

bool check_deterministic(const Circuit& c, UnitId sum_unit) {
    const Unit& s = c.unit(sum_unit);
    if (s.kind != UnitKind::Sum) throw PreconditionError("unit " + std::to_string(sum_unit) + " is not a sum");
    const auto vars = s.scope.indices();
    if (configuration_count(c.var_cards(), vars, kMaxDeterminismConfigs) > kMaxDeterminismConfigs) {
        throw CapacityError("scope of unit " + std::to_string(sum_unit) + " is too large to enumerate");
    }
    // Only the sub-DAG below the sum matters.
    const auto sub = extract_subcircuit(c, sum_unit);
    std::vector<UnitId> child_ids;
    for (UnitId ch : s.children) {
        auto it = std::lower_bound(sub.source_of.begin(), sub.source_of.end(), ch);
        child_ids.push_back(static_cast<UnitId>(it - sub.source_of.begin()));
    }
    std::vector<double> values(sub.circuit.size());
    bool deterministic = true;
    for_each_configuration(c.var_cards(), vars, c.num_vars(), [&](std::span<const std::int32_t> a) {
        if (!deterministic) return;
        forward(sub.circuit, a, values);
        int nonzero = 0;
        for (UnitId ch : child_ids) {
            if (values[ch] > kLogZero) ++nonzero;
        }
        if (nonzero > 1) deterministic = false;
    });
    return deterministic;
}

} // namespace pclvd
