#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "pclvd/error.hpp"
#include "pclvd/inference.hpp"
#include "pclvd/serialize.hpp"

using namespace pclvd;

namespace {

double log_sum_exp_of(const std::vector<double>& xs) { return log_sum_exp(xs); }

} // namespace

TEST_CASE("scope set operations") {
    Scope a(130, {0, 5, 64, 129});
    Scope b(130, {5, 64});
    CHECK(a.count() == 4);
    CHECK(b.is_subset_of(a));
    CHECK_FALSE(a.is_subset_of(b));
    CHECK((a - b) == Scope(130, {0, 129}));
    CHECK((a & b) == b);
    CHECK(Scope(130, {1, 2}).is_disjoint_from(a));
    CHECK(a.indices() == std::vector<VarId>{0, 5, 64, 129});
    CHECK(Scope::range(10, 3, 6) == Scope(10, {3, 4, 5}));
    CHECK(Scope(4, {1}) == Scope(200, {1}));
    CHECK_THROWS_AS(a.insert(130), DomainError);
}

TEST_CASE("evaluate: single input and independent product") {
    CircuitBuilder b({2});
    const UnitId x = b.add_input(0, {0.5, 0.5});
    const auto c = std::move(b).build(x);
    CHECK(evaluate(c, std::vector<std::int32_t>{1}) == doctest::Approx(std::log(0.5)).epsilon(1e-15));

    CircuitBuilder b2({2, 2});
    const UnitId p = b2.add_product({b2.add_input(0, {0.5, 0.5}), b2.add_input(1, {0.5, 0.5})});
    const auto c2 = std::move(b2).build(p);
    CHECK(evaluate(c2, std::vector<std::int32_t>{0, 1}) == doctest::Approx(std::log(0.25)).epsilon(1e-15));
}

TEST_CASE("evaluate errors") {
    CircuitBuilder b({2, 3});
    const UnitId p = b.add_product({b.add_input(0, {0.5, 0.5}), b.add_input(1, {0.2, 0.3, 0.5})});
    const auto c = std::move(b).build(p);
    CHECK_THROWS_AS(evaluate(c, std::vector<std::int32_t>{0, kMarginalized}), PreconditionError);
    CHECK_THROWS_AS(evaluate(c, std::vector<std::int32_t>{0, 3}), DomainError);
    CHECK_THROWS_AS(evaluate(c, std::vector<std::int32_t>{0}), ShapeError);
}

TEST_CASE("construction rejects invalid circuits") {
    SUBCASE("unnormalized sum") {
        CircuitBuilder b({2});
        const UnitId i0 = b.add_input(0, {0.5, 0.5});
        const UnitId i1 = b.add_input(0, {0.1, 0.9});
        const UnitId s = b.add_sum_log({i0, i1}, {std::log(0.5), std::log(0.6)});
        CHECK_THROWS_AS(std::move(b).build(s), DomainError);
    }
    SUBCASE("unreachable unit") {
        CircuitBuilder b({2});
        b.add_input(0, {0.5, 0.5});
        const UnitId i1 = b.add_input(0, {0.1, 0.9});
        CHECK_THROWS_AS(std::move(b).build(i1), StructuralError);
    }
    SUBCASE("negative weight") {
        CircuitBuilder b({2});
        const UnitId i0 = b.add_input(0, {0.5, 0.5});
        CHECK_THROWS_AS(b.add_sum({i0}, {-1.0}), DomainError);
    }
}

TEST_CASE("marginal: read-offs and structural guard") {
    CircuitBuilder b({2});
    const UnitId s = b.add_sum({b.add_indicator(0, 0), b.add_indicator(0, 1)}, {0.3, 0.7});
    const auto c = std::move(b).build(s);
    CHECK(marginal(c, std::vector<std::int32_t>{1}) == doctest::Approx(std::log(0.7)).epsilon(1e-15));
    CHECK(marginal(c, std::vector<std::int32_t>{kMarginalized}) == doctest::Approx(0.0));

    CircuitBuilder nb({2, 2});
    const UnitId bad = nb.add_sum({nb.add_input(0, {0.5, 0.5}), nb.add_input(1, {0.5, 0.5})}, {0.5, 0.5});
    const auto nc = std::move(nb).build(bad);
    CHECK_THROWS_AS(marginal(nc, std::vector<std::int32_t>{0, 0}), StructuralError);
}

TEST_CASE("random circuits: normalization and marginals against enumeration") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        oracle::RandomCircuitOptions opts;
        opts.num_vars = 8;
        opts.max_card = seed % 3 == 0 ? 3 : 2;
        opts.split_depth = seed % 2;
        const auto rc = oracle::random_circuit(opts, seed);
        const Circuit& c = rc.circuit;
        REQUIRE(c.is_smooth());
        REQUIRE(c.is_decomposable());
        const auto all = oracle::all_assignments(c.var_cards());
        double total = 0.0;
        for (const auto& a : all) {
            const double lp = evaluate(c, a);
            CHECK(std::exp(lp) == doctest::Approx(oracle::linear_probability(c, a)).epsilon(1e-10));
            total += std::exp(lp);
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
        CHECK(std::abs(marginal(c, std::vector<std::int32_t>(8, kMarginalized))) < 1e-12);

        // Evidence on 3 variables against completion enumeration.
        std::vector<std::int32_t> partial(8, kMarginalized);
        partial[1] = 1;
        partial[4] = 0;
        partial[6] = 1;
        std::vector<double> completions;
        for (const auto& a : all) {
            if (a[1] == 1 && a[4] == 0 && a[6] == 1) completions.push_back(evaluate(c, a));
        }
        CHECK(std::abs(marginal(c, partial) - log_sum_exp_of(completions)) < 1e-9);
    }
}

TEST_CASE("check_structure reports violations") {
    CircuitBuilder b({2, 2});
    const UnitId a0 = b.add_input(0, {0.5, 0.5});
    const UnitId a1 = b.add_input(1, {0.5, 0.5});
    const UnitId a0b = b.add_input(0, {0.2, 0.8});
    const UnitId s = b.add_sum({a0, a1}, {0.5, 0.5});
    const UnitId p = b.add_product({a0b, s});
    const auto c = std::move(b).build(p);
    const auto report = check_structure(c);
    CHECK_FALSE(report.smooth);
    CHECK_FALSE(report.decomposable);
    bool saw_sum = false, saw_product = false;
    for (const auto& v : report.violations) {
        saw_sum |= v.unit == s;
        saw_product |= v.unit == p;
    }
    CHECK(saw_sum);
    CHECK(saw_product);

    const auto hmm = build_hmm({5, 3, 4, false}, 1);
    const auto ok = check_structure(hmm.circuit);
    CHECK(ok.smooth);
    CHECK(ok.decomposable);
    CHECK(ok.violations.empty());
}

TEST_CASE("check_deterministic") {
    CircuitBuilder b({3, 2});
    const UnitId s1 = b.add_sum({b.add_indicator(0, 1), b.add_indicator(0, 2)}, {0.5, 0.5});
    const UnitId s2 = b.add_sum({b.add_input(1, {0.5, 0.5}), b.add_input(1, {0.5, 0.5})}, {0.5, 0.5});
    const auto c = std::move(b).build(b.add_product({s1, s2}));
    CHECK(check_deterministic(c, s1));
    CHECK_FALSE(check_deterministic(c, s2));

    CircuitBuilder big(std::vector<std::uint32_t>(21, 2));
    std::vector<UnitId> leaves;
    for (VarId v = 0; v < 21; ++v) leaves.push_back(big.add_input(v, {0.5, 0.5}));
    const UnitId p1 = big.add_product(leaves);
    const UnitId p2 = big.add_product(leaves);
    const UnitId top = big.add_sum({p1, p2}, {0.5, 0.5});
    const auto bc = std::move(big).build(top);
    CHECK_THROWS_AS(check_deterministic(bc, top), CapacityError);
}

TEST_CASE("re-normalizing normalized weights changes evaluate by < 1e-12") {
    const auto rc = oracle::random_circuit({}, 7);
    const Circuit& c = rc.circuit;
    std::vector<Unit> units = c.units();
    for (auto& u : units) {
        if (u.kind != UnitKind::Sum) continue;
        const double z = log_sum_exp(u.log_weights);
        for (double& w : u.log_weights) w -= z;
    }
    const Circuit c2(units, c.root(), c.var_cards(), c.num_observed());
    for (const auto& a : oracle::all_assignments(c.var_cards())) {
        CHECK(std::abs(evaluate(c, a) - evaluate(c2, a)) < 1e-12);
    }
}

TEST_CASE("two topological orders give bit-identical results") {
    // Same DAG, leaves added in opposite orders.
    auto make = [](bool flip) {
        CircuitBuilder b({2, 3});
        UnitId x0, x1, y0, y1;
        if (flip) {
            y1 = b.add_input(1, {0.1, 0.6, 0.3});
            y0 = b.add_input(1, {0.3, 0.3, 0.4});
            x1 = b.add_input(0, {0.8, 0.2});
            x0 = b.add_input(0, {0.25, 0.75});
        } else {
            x0 = b.add_input(0, {0.25, 0.75});
            x1 = b.add_input(0, {0.8, 0.2});
            y0 = b.add_input(1, {0.3, 0.3, 0.4});
            y1 = b.add_input(1, {0.1, 0.6, 0.3});
        }
        const UnitId p0 = b.add_product({x0, y0});
        const UnitId p1 = b.add_product({x1, y1});
        return std::move(b).build(b.add_sum({p0, p1}, {0.35, 0.65}));
    };
    const auto c1 = make(false);
    const auto c2 = make(true);
    for (const auto& a : oracle::all_assignments({2, 3})) CHECK(evaluate(c1, a) == evaluate(c2, a));
}

TEST_CASE("parameter vectors round-trip") {
    const auto rc = oracle::random_circuit({}, 11);
    const auto params = rc.circuit.parameters();
    CHECK(params.size() == rc.circuit.num_parameters());
    const auto again = rc.circuit.with_parameters(params);
    CHECK(again.parameters() == params);
    std::vector<double> wrong(params.size() + 1, 0.0);
    CHECK_THROWS_AS(rc.circuit.with_parameters(wrong), ShapeError);
}

TEST_CASE("circuit JSON round-trip preserves evaluate") {
    const auto rc = oracle::random_circuit({6, 3, 2, 0, true}, 3);
    const auto dir = std::filesystem::temp_directory_path() / "pclvd_test_json";
    std::filesystem::create_directories(dir);
    save_circuit(dir / "c.json", rc.circuit);
    const auto doc = load_circuit(dir / "c.json");
    for (const auto& a : oracle::all_assignments(rc.circuit.var_cards())) {
        CHECK(std::abs(evaluate(rc.circuit, a) - evaluate(doc.circuit, a)) < 1e-12);
    }
    auto j = circuit_to_json(rc.circuit);
    CHECK(j["format"] == "pc-lvd-circuit");
    CHECK(j["version"] == 1);
    j["version"] = 2;
    CHECK_THROWS_AS(circuit_from_json(j), DataError);
}

TEST_CASE("extract_subcircuit and write_back_parameters") {
    const auto rc = oracle::random_circuit({}, 5);
    const Circuit& c = rc.circuit;
    const UnitId inner = c.unit(c.root()).children.front();
    const auto part = extract_subcircuit(c, inner);
    CHECK(part.circuit.root_scope() == c.unit(inner).scope);
    auto params = c.parameters();
    write_back_parameters(c, part, part.circuit, params);
    CHECK(params == c.parameters());
}
