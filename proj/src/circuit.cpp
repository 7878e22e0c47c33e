#include "pclvd/circuit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pclvd/error.hpp"

namespace pclvd {

const char* to_string(UnitKind kind) noexcept {
    switch (kind) {
    case UnitKind::Input: return "input";
    case UnitKind::Sum: return "sum";
    case UnitKind::Product: return "product";
    }
    return "?";
}

double log_sum_exp(std::span<const double> xs) {
    double m = kLogZero;
    for (double x : xs) m = std::max(m, x);
    if (m == kLogZero) return kLogZero;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

DataMatrix DataMatrix::widened(std::size_t new_cols) const {
    if (new_cols < cols) throw ShapeError("DataMatrix::widened cannot drop columns");
    DataMatrix out(rows, new_cols);
    for (std::size_t i = 0; i < rows; ++i) {
        std::copy(values.begin() + static_cast<std::ptrdiff_t>(i * cols),
                  values.begin() + static_cast<std::ptrdiff_t>((i + 1) * cols),
                  out.values.begin() + static_cast<std::ptrdiff_t>(i * new_cols));
    }
    return out;
}

DataMatrix DataMatrix::select_rows(std::span<const std::size_t> idx) const {
    DataMatrix out(idx.size(), cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        auto src = row(idx[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

namespace {

void check_normalized(std::span<const double> logs, const std::string& what) {
    double total = 0.0;
    for (double l : logs) {
        if (std::isnan(l) || (l > 0.0 && std::isinf(l))) throw DomainError(what + ": invalid log value");
        total += std::exp(l);
    }
    if (std::abs(total - 1.0) > kNormalizationTolerance) {
        throw DomainError(what + ": weights sum to " + std::to_string(total) + ", not 1");
    }
}

std::vector<double> normalized_logs(const std::vector<double>& probs, const std::string& what) {
    double total = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0) || std::isinf(p)) throw DomainError(what + ": negative or non-finite weight");
        total += p;
    }
    if (!(total > 0.0)) throw DomainError(what + ": weights sum to zero");
    std::vector<double> out(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) out[i] = std::log(probs[i] / total);
    return out;
}

} // namespace

Circuit::Circuit(std::vector<Unit> units, UnitId root, std::vector<std::uint32_t> var_cards,
                 std::size_t num_observed)
    : units_(std::move(units)), root_(root), var_cards_(std::move(var_cards)), num_observed_(num_observed) {
    const std::size_t nv = var_cards_.size();
    if (units_.empty()) throw StructuralError("circuit has no units");
    if (root_ >= units_.size()) throw StructuralError("root index out of range");
    if (num_observed_ > nv) throw StructuralError("num_observed exceeds num_vars");
    for (std::size_t v = 0; v < nv; ++v) {
        if (var_cards_[v] == 0) throw DomainError("variable " + std::to_string(v) + " has zero categories");
    }

    param_offset_.assign(units_.size(), 0);
    for (UnitId id = 0; id < units_.size(); ++id) {
        Unit& u = units_[id];
        const std::string where = std::string(to_string(u.kind)) + " unit " + std::to_string(id);
        u.scope = Scope(nv);
        param_offset_[id] = num_params_;
        switch (u.kind) {
        case UnitKind::Input:
            if (!u.children.empty()) throw StructuralError(where + " has children");
            if (u.var >= nv) throw StructuralError(where + " refers to unknown variable");
            if (u.log_dist.size() != var_cards_[u.var]) {
                throw StructuralError(where + " distribution size does not match cardinality");
            }
            check_normalized(u.log_dist, where);
            u.scope.insert(u.var);
            if (!u.indicator) num_params_ += u.log_dist.size();
            break;
        case UnitKind::Sum:
        case UnitKind::Product:
            if (u.children.empty()) throw StructuralError(where + " has no children");
            for (UnitId c : u.children) {
                if (c >= id) throw StructuralError(where + " is not in topological order");
                u.scope |= units_[c].scope;
            }
            if (u.kind == UnitKind::Sum) {
                if (u.log_weights.size() != u.children.size()) {
                    throw StructuralError(where + " weight count does not match children");
                }
                check_normalized(u.log_weights, where);
                num_params_ += u.log_weights.size();
            } else if (!u.log_weights.empty()) {
                throw StructuralError(where + " carries weights");
            }
            break;
        }
    }

    std::vector<char> reached(units_.size(), 0);
    reached[root_] = 1;
    for (std::size_t k = units_.size(); k-- > 0;) {
        if (!reached[k]) continue;
        for (UnitId c : units_[k].children) reached[c] = 1;
    }
    for (UnitId id = 0; id < units_.size(); ++id) {
        if (!reached[id]) throw StructuralError("unit " + std::to_string(id) + " is not reachable from the root");
    }

    smooth_ = true;
    decomposable_ = true;
    for (const Unit& u : units_) {
        if (u.kind == UnitKind::Sum) {
            for (UnitId c : u.children) {
                if (!(units_[c].scope == u.scope)) smooth_ = false;
            }
        } else if (u.kind == UnitKind::Product) {
            Scope seen(nv);
            for (UnitId c : u.children) {
                if (!seen.is_disjoint_from(units_[c].scope)) decomposable_ = false;
                seen |= units_[c].scope;
            }
        }
    }
}

Scope Circuit::observed_scope(UnitId id) const {
    Scope s = units_.at(id).scope;
    for (VarId v = static_cast<VarId>(num_observed_); v < var_cards_.size(); ++v) s.erase(v);
    return s;
}

bool Circuit::has_parameters(UnitId id) const {
    const Unit& u = units_.at(id);
    return u.kind == UnitKind::Sum || (u.kind == UnitKind::Input && !u.indicator);
}

std::size_t Circuit::param_count(UnitId id) const {
    const Unit& u = units_.at(id);
    if (u.kind == UnitKind::Sum) return u.log_weights.size();
    if (u.kind == UnitKind::Input && !u.indicator) return u.log_dist.size();
    return 0;
}

std::size_t Circuit::num_edges() const noexcept {
    std::size_t n = 0;
    for (const Unit& u : units_) n += u.children.size();
    return n;
}

std::vector<double> Circuit::parameters() const {
    std::vector<double> out;
    out.reserve(num_params_);
    for (const Unit& u : units_) {
        if (u.kind == UnitKind::Sum) out.insert(out.end(), u.log_weights.begin(), u.log_weights.end());
        else if (u.kind == UnitKind::Input && !u.indicator) out.insert(out.end(), u.log_dist.begin(), u.log_dist.end());
    }
    return out;
}

Circuit Circuit::with_parameters(std::span<const double> log_params) const {
    if (log_params.size() != num_params_) {
        throw ShapeError("parameter vector has " + std::to_string(log_params.size()) + " entries, circuit needs " +
                         std::to_string(num_params_));
    }
    Circuit out = *this;
    for (UnitId id = 0; id < out.units_.size(); ++id) {
        Unit& u = out.units_[id];
        const std::size_t n = param_count(id);
        if (n == 0) continue;
        auto src = log_params.subspan(param_offset_[id], n);
        auto& dst = u.kind == UnitKind::Sum ? u.log_weights : u.log_dist;
        std::copy(src.begin(), src.end(), dst.begin());
        check_normalized(dst, std::string(to_string(u.kind)) + " unit " + std::to_string(id));
    }
    return out;
}

CircuitBuilder::CircuitBuilder(std::vector<std::uint32_t> var_cards, std::size_t num_observed)
    : var_cards_(std::move(var_cards)), num_observed_(num_observed) {}

CircuitBuilder::CircuitBuilder(std::vector<std::uint32_t> var_cards)
    : var_cards_(std::move(var_cards)), num_observed_(var_cards_.size()) {}

UnitId CircuitBuilder::add_unit(Unit unit) {
    units_.push_back(std::move(unit));
    return static_cast<UnitId>(units_.size() - 1);
}

UnitId CircuitBuilder::add_input(VarId var, const std::vector<double>& probs) {
    return add_input_log(var, normalized_logs(probs, "input distribution"));
}

UnitId CircuitBuilder::add_input_log(VarId var, std::vector<double> log_probs) {
    Unit u;
    u.kind = UnitKind::Input;
    u.var = var;
    u.log_dist = std::move(log_probs);
    return add_unit(std::move(u));
}

UnitId CircuitBuilder::add_indicator(VarId var, std::uint32_t value) {
    if (var >= var_cards_.size() || value >= var_cards_[var]) throw DomainError("indicator value out of range");
    Unit u;
    u.kind = UnitKind::Input;
    u.var = var;
    u.indicator = true;
    u.log_dist.assign(var_cards_[var], kLogZero);
    u.log_dist[value] = 0.0;
    return add_unit(std::move(u));
}

UnitId CircuitBuilder::add_sum(std::vector<UnitId> children, const std::vector<double>& weights) {
    return add_sum_log(std::move(children), normalized_logs(weights, "sum weights"));
}

UnitId CircuitBuilder::add_sum_uniform(std::vector<UnitId> children) {
    std::vector<double> w(children.size(), 1.0);
    return add_sum(std::move(children), w);
}

UnitId CircuitBuilder::add_sum_log(std::vector<UnitId> children, std::vector<double> log_weights) {
    Unit u;
    u.kind = UnitKind::Sum;
    u.children = std::move(children);
    u.log_weights = std::move(log_weights);
    return add_unit(std::move(u));
}

UnitId CircuitBuilder::add_product(std::vector<UnitId> children) {
    Unit u;
    u.kind = UnitKind::Product;
    u.children = std::move(children);
    return add_unit(std::move(u));
}

Circuit CircuitBuilder::build(UnitId root) && {
    return Circuit(std::move(units_), root, std::move(var_cards_), num_observed_);
}

std::vector<UnitId> descendants(const Circuit& c, UnitId root) {
    std::vector<char> reached(c.size(), 0);
    reached[root] = 1;
    for (std::size_t k = root + 1; k-- > 0;) {
        if (!reached[k]) continue;
        for (UnitId ch : c.unit(static_cast<UnitId>(k)).children) reached[ch] = 1;
    }
    std::vector<UnitId> out;
    for (UnitId id = 0; id <= root; ++id) {
        if (reached[id]) out.push_back(id);
    }
    return out;
}

ExtractedCircuit extract_subcircuit(const Circuit& c, UnitId root,
                                    const std::unordered_map<UnitId, UnitId>& substitute) {
    auto resolve = [&](UnitId id) {
        auto it = substitute.find(id);
        return it == substitute.end() ? id : it->second;
    };
    std::vector<char> reached(c.size(), 0);
    const UnitId top = resolve(root);
    reached[top] = 1;
    for (std::size_t k = c.size(); k-- > 0;) {
        if (!reached[k]) continue;
        for (UnitId ch : c.unit(static_cast<UnitId>(k)).children) reached[resolve(ch)] = 1;
    }
    std::vector<UnitId> new_id(c.size(), 0);
    std::vector<Unit> units;
    std::vector<UnitId> source_of;
    for (UnitId id = 0; id < c.size(); ++id) {
        if (!reached[id]) continue;
        Unit u = c.unit(id);
        for (UnitId& ch : u.children) ch = new_id[resolve(ch)];
        new_id[id] = static_cast<UnitId>(units.size());
        units.push_back(std::move(u));
        source_of.push_back(id);
    }
    Circuit sub(std::move(units), new_id[top], c.var_cards(), c.num_observed());
    return {std::move(sub), std::move(source_of)};
}

void write_back_parameters(const Circuit& source, const ExtractedCircuit& part, const Circuit& trained_part,
                           std::vector<double>& source_params) {
    if (source_params.size() != source.num_parameters()) throw ShapeError("source parameter vector size mismatch");
    const auto trained = trained_part.parameters();
    for (UnitId id = 0; id < trained_part.size(); ++id) {
        const std::size_t n = trained_part.param_count(id);
        if (n == 0) continue;
        const UnitId src = part.source_of[id];
        if (source.param_count(src) != n) throw ShapeError("extracted unit does not match its source");
        std::copy_n(trained.begin() + static_cast<std::ptrdiff_t>(trained_part.param_offset(id)), n,
                    source_params.begin() + static_cast<std::ptrdiff_t>(source.param_offset(src)));
    }
}

} // namespace pclvd
