#include "pclvd/serialize.hpp"

#include <cmath>
#include <fstream>

#include "pclvd/error.hpp"

namespace pclvd {

using nlohmann::json;

namespace {

// JSON has no -inf; log 0 is written as null.
json log_array(const std::vector<double>& xs) {
    json a = json::array();
    for (double x : xs) {
        if (x == kLogZero) a.push_back(nullptr);
        else a.push_back(x);
    }
    return a;
}

std::vector<double> read_log_array(const json& a) {
    std::vector<double> out;
    for (const auto& x : a) out.push_back(x.is_null() ? kLogZero : x.get<double>());
    return out;
}

UnitKind kind_from_string(const std::string& s) {
    if (s == "input") return UnitKind::Input;
    if (s == "sum") return UnitKind::Sum;
    if (s == "product") return UnitKind::Product;
    throw DataError("unknown unit kind '" + s + "'");
}

} // namespace

json circuit_to_json(const Circuit& c, const std::vector<MaterializationRecord>& records) {
    json j;
    j["format"] = kCircuitFormat;
    j["version"] = kCircuitVersion;
    j["num_vars"] = c.num_vars();
    j["num_observed"] = c.num_observed();
    j["var_cards"] = c.var_cards();
    j["root"] = c.root();
    json units = json::array();
    for (const Unit& u : c.units()) {
        json ju;
        ju["kind"] = to_string(u.kind);
        ju["scope"] = u.scope.indices();
        ju["children"] = u.children;
        if (u.kind == UnitKind::Sum) ju["log_weights"] = log_array(u.log_weights);
        if (u.kind == UnitKind::Input) {
            ju["var"] = u.var;
            std::vector<double> dist(u.log_dist.size());
            for (std::size_t k = 0; k < dist.size(); ++k) dist[k] = std::exp(u.log_dist[k]);
            ju["dist"] = dist;
            if (u.indicator) ju["indicator"] = true;
        }
        units.push_back(std::move(ju));
    }
    j["units"] = std::move(units);
    if (!records.empty()) {
        json recs = json::array();
        for (const auto& r : records) {
            recs.push_back({{"z_var", r.z_var},
                            {"scope", r.scope.indices()},
                            {"units", r.units},
                            {"indicators", r.indicators}});
        }
        j["lv_records"] = std::move(recs);
    }
    return j;
}

CircuitDocument circuit_from_json(const json& j) {
    try {
        if (j.at("format").get<std::string>() != kCircuitFormat) throw DataError("not a pc-lvd-circuit document");
        if (j.at("version").get<int>() != kCircuitVersion) throw DataError("unsupported circuit version");
        auto cards = j.at("var_cards").get<std::vector<std::uint32_t>>();
        if (j.at("num_vars").get<std::size_t>() != cards.size()) throw DataError("num_vars does not match var_cards");
        const std::size_t num_observed = j.value("num_observed", cards.size());
        std::vector<Unit> units;
        for (const auto& ju : j.at("units")) {
            Unit u;
            u.kind = kind_from_string(ju.at("kind").get<std::string>());
            u.children = ju.value("children", std::vector<UnitId>{});
            if (u.kind == UnitKind::Sum) u.log_weights = read_log_array(ju.at("log_weights"));
            if (u.kind == UnitKind::Input) {
                u.var = ju.at("var").get<VarId>();
                u.indicator = ju.value("indicator", false);
                for (const auto& p : ju.at("dist")) {
                    const double v = p.get<double>();
                    u.log_dist.push_back(v > 0.0 ? std::log(v) : kLogZero);
                }
            }
            units.push_back(std::move(u));
        }
        const auto root = j.contains("root") ? j.at("root").get<UnitId>() : static_cast<UnitId>(units.size() - 1);
        Circuit c(std::move(units), root, cards, num_observed);
        for (UnitId id = 0; id < c.size(); ++id) {
            const auto& declared = j.at("units")[id];
            if (declared.contains("scope") &&
                !(Scope::from_indices(c.num_vars(), declared["scope"].get<std::vector<VarId>>()) == c.unit(id).scope)) {
                throw DataError("declared scope of unit " + std::to_string(id) + " does not match its children");
            }
        }
        std::vector<MaterializationRecord> records;
        if (j.contains("lv_records")) {
            for (const auto& jr : j["lv_records"]) {
                MaterializationRecord r;
                r.z_var = jr.at("z_var").get<VarId>();
                r.scope = Scope::from_indices(num_observed, jr.at("scope").get<std::vector<VarId>>());
                r.units = jr.at("units").get<std::vector<UnitId>>();
                r.indicators = jr.at("indicators").get<std::vector<UnitId>>();
                if (r.units.size() != r.indicators.size() || r.z_var >= cards.size() || cards[r.z_var] != r.units.size()) {
                    throw DataError("inconsistent lv_record for variable " + std::to_string(r.z_var));
                }
                records.push_back(std::move(r));
            }
        }
        return {std::move(c), std::move(records)};
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed circuit JSON: ") + e.what());
    }
}

void save_circuit(const std::filesystem::path& path, const Circuit& c, const std::vector<MaterializationRecord>& records) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << circuit_to_json(c, records).dump() << '\n';
}

CircuitDocument load_circuit(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return circuit_from_json(j);
}

} // namespace pclvd
