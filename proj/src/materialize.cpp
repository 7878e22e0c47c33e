#include "pclvd/materialize.hpp"

#include <cmath>
#include <unordered_map>

#include "pclvd/error.hpp"
#include "pclvd/inference.hpp"

namespace pclvd {

void check_materialization_scope(const Circuit& c, const Scope& w) {
    for (UnitId id = 0; id < c.size(); ++id) {
        const Scope s = c.observed_scope(id);
        if (s.is_subset_of(w) || w.is_subset_of(s) || s.is_disjoint_from(w)) continue;
        throw StructuralError(std::string(to_string(c.unit(id).kind)) + " unit " + std::to_string(id) +
                              " has scope " + s.to_string() + " straddling W = " + w.to_string());
    }
}

std::vector<UnitId> scope_sums(const Circuit& c, const Scope& w) {
    std::vector<UnitId> out;
    for (UnitId id = 0; id < c.size(); ++id) {
        if (c.unit(id).kind == UnitKind::Sum && c.observed_scope(id) == w) out.push_back(id);
    }
    return out;
}

MaterializeResult materialize_lv(const Circuit& c, const Scope& w, const std::vector<MaterializationRecord>& prior) {
    if (w.empty()) throw PreconditionError("materialization scope is empty");
    for (VarId v : w.indices()) {
        if (v >= c.num_observed()) throw PreconditionError("materialization scope contains a latent variable");
    }
    const auto sums = scope_sums(c, w);
    if (sums.empty()) throw StructuralError("no sum unit has scope " + w.to_string());
    check_materialization_scope(c, w);

    // Sum units with scope W whose input children need a pass-through product.
    std::vector<char> wrap_inputs(c.size(), 0);
    std::size_t card = 0;
    for (UnitId s : sums) {
        for (UnitId ch : c.unit(s).children) {
            if (c.unit(ch).kind == UnitKind::Input) {
                wrap_inputs[s] = 1;
                ++card;
            }
        }
    }
    std::vector<char> in_sw(c.size(), 0);
    for (UnitId id = 0; id < c.size(); ++id) {
        if (c.unit(id).kind == UnitKind::Product && c.observed_scope(id) == w) {
            in_sw[id] = 1;
            ++card;
        }
    }
    if (card == 0) throw StructuralError("no product unit has scope " + w.to_string());

    auto cards = c.var_cards();
    const auto z = static_cast<VarId>(cards.size());
    cards.push_back(static_cast<std::uint32_t>(card));

    std::vector<Unit> units;
    units.reserve(c.size() + 3 * card);
    std::vector<UnitId> unit_map(c.size(), 0);
    MaterializationRecord rec;
    rec.z_var = z;
    rec.scope = w;

    auto push = [&](Unit u) {
        units.push_back(std::move(u));
        return static_cast<UnitId>(units.size() - 1);
    };
    auto push_indicator = [&] {
        Unit ind;
        ind.kind = UnitKind::Input;
        ind.var = z;
        ind.indicator = true;
        ind.log_dist.assign(card, kLogZero);
        ind.log_dist[rec.units.size()] = 0.0;
        return push(std::move(ind));
    };

    for (UnitId id = 0; id < c.size(); ++id) {
        Unit u = c.unit(id);
        for (UnitId& ch : u.children) ch = unit_map[ch];
        if (wrap_inputs[id]) {
            for (std::size_t k = 0; k < u.children.size(); ++k) {
                if (units[u.children[k]].kind != UnitKind::Input) continue;
                const UnitId ind = push_indicator();
                Unit pass;
                pass.kind = UnitKind::Product;
                pass.children = {u.children[k], ind};
                const UnitId p = push(std::move(pass));
                rec.units.push_back(p);
                rec.indicators.push_back(ind);
                u.children[k] = p;
            }
        } else if (in_sw[id]) {
            const UnitId ind = push_indicator();
            u.children.push_back(ind);
            unit_map[id] = push(std::move(u));
            rec.units.push_back(unit_map[id]);
            rec.indicators.push_back(ind);
            continue;
        }
        unit_map[id] = push(std::move(u));
    }

    Circuit aug(std::move(units), unit_map[c.root()], std::move(cards), c.num_observed());
    if (c.is_smooth() && c.is_decomposable() && !(aug.is_smooth() && aug.is_decomposable())) {
        const auto report = check_structure(aug);
        const UnitId bad = report.violations.empty() ? aug.root() : report.violations.front().unit;
        throw StructuralError("materializing W = " + w.to_string() + " breaks smoothness at augmented unit " +
                              std::to_string(bad) + ": some path reaches W without passing through a unit of S_W");
    }

    MaterializeResult out{std::move(aug), {}, std::move(unit_map)};
    for (auto r : prior) {
        for (UnitId& u : r.units) u = out.unit_map[u];
        for (UnitId& u : r.indicators) u = out.unit_map[u];
        out.records.push_back(std::move(r));
    }
    out.records.push_back(std::move(rec));
    return out;
}

MaterializeResult materialize_sequence(const Circuit& c, const std::vector<Scope>& scopes) {
    if (scopes.empty()) throw PreconditionError("no scopes to materialize");
    std::vector<UnitId> identity(c.size());
    for (UnitId i = 0; i < c.size(); ++i) identity[i] = i;
    MaterializeResult acc{c, {}, std::move(identity)};
    for (const Scope& w : scopes) {
        auto next = materialize_lv(acc.circuit, w, acc.records);
        for (UnitId& u : acc.unit_map) u = next.unit_map[u];
        next.unit_map = std::move(acc.unit_map);
        acc = std::move(next);
    }
    return acc;
}

MaterializeResult materialize_partition(const Circuit& c, const PartitionSpec& partition) {
    if (partition.parts.empty()) throw PreconditionError("partition has no parts");
    if (partition.categories.size() != partition.parts.size()) {
        throw ShapeError("partition needs one category count per part");
    }
    Scope covered(c.num_observed());
    for (const Scope& p : partition.parts) {
        if (!covered.is_disjoint_from(p)) throw PreconditionError("partition parts overlap");
        covered |= p;
    }
    if (!(covered == Scope::range(c.num_observed(), 0, static_cast<VarId>(c.num_observed())))) {
        throw PreconditionError("partition parts do not cover the observed variables");
    }
    auto out = materialize_sequence(c, partition.parts);
    for (std::size_t i = 0; i < partition.parts.size(); ++i) {
        if (out.records[i].cardinality() != partition.categories[i]) {
            throw ShapeError("part " + std::to_string(i) + " yields " + std::to_string(out.records[i].cardinality()) +
                             " LV categories, partition asks for " + std::to_string(partition.categories[i]));
        }
    }
    return out;
}

bool lemma1_oracle(const Circuit& c_aug, const Scope& w, VarId z_var) {
    const Scope& root_scope = c_aug.root_scope();
    if (root_scope.count() > kLemmaOracleMaxVars) {
        throw CapacityError("lemma1_oracle enumerates at most " + std::to_string(kLemmaOracleMaxVars) + " variables");
    }
    if (!root_scope.contains(z_var)) throw PreconditionError("Z is not in the circuit scope");
    Scope y_scope = root_scope - w;
    y_scope.erase(z_var);
    const auto w_vars = w.indices();
    const auto y_vars = y_scope.indices();
    const auto& cards = c_aug.var_cards();
    const std::size_t nv = c_aug.num_vars();
    constexpr double kTol = 1e-9;

    bool holds = true;
    for (std::uint32_t zv = 0; zv < cards[z_var] && holds; ++zv) {
        std::vector<std::int32_t> a(nv, kMarginalized);
        a[z_var] = static_cast<std::int32_t>(zv);
        const double pz = std::exp(marginal(c_aug, a));
        if (pz <= 0.0) continue;

        std::vector<double> p_w_given_z;
        for_each_configuration(cards, w_vars, nv, [&](std::span<const std::int32_t> wa) {
            std::vector<std::int32_t> q(wa.begin(), wa.end());
            q[z_var] = static_cast<std::int32_t>(zv);
            p_w_given_z.push_back(std::exp(marginal(c_aug, q)) / pz);
        });

        for_each_configuration(cards, y_vars, nv, [&](std::span<const std::int32_t> ya) {
            if (!holds) return;
            std::vector<std::int32_t> q(ya.begin(), ya.end());
            q[z_var] = static_cast<std::int32_t>(zv);
            const double pzy = std::exp(marginal(c_aug, q));
            if (pzy <= 0.0) return;
            std::size_t k = 0;
            for_each_configuration(cards, w_vars, nv, [&](std::span<const std::int32_t> wa) {
                if (!holds) return;
                std::vector<std::int32_t> full = q;
                for (VarId v : w_vars) full[v] = wa[v];
                const double p = std::exp(marginal(c_aug, full)) / pzy;
                if (std::abs(p - p_w_given_z[k]) >= kTol) holds = false;
                ++k;
            });
        });
    }
    return holds;
}

} // namespace pclvd
