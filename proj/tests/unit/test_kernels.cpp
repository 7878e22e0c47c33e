#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "pclvd/kernels.hpp"

using namespace pclvd;

namespace {

DataMatrix noisy_data(const Circuit& c, std::size_t n, double missing, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    DataMatrix d(n, c.num_vars());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t v = 0; v < c.num_vars(); ++v) {
            if (std::bernoulli_distribution(missing)(rng)) continue;
            d.at(i, v) = std::uniform_int_distribution<std::int32_t>(0, static_cast<std::int32_t>(c.card(v)) - 1)(rng);
        }
    }
    return d;
}

} // namespace

TEST_CASE("serial, parallel and deterministic log-likelihoods agree") {
    const auto rc = oracle::random_circuit({10, 3, 3, 0, true}, 21);
    const auto data = noisy_data(rc.circuit, 1500, 0.2, 1);
    const auto rows = all_rows(data.rows);
    KernelStats s1, s2;
    const auto a = log_likelihoods(rc.circuit, data, rows, Execution::Serial, nullptr, &s1);
    const auto b = log_likelihoods(rc.circuit, data, rows, Execution::Parallel, nullptr, &s2);
    const auto c = log_likelihoods(rc.circuit, data, rows, Execution::Deterministic);
    REQUIRE(a.size() == 1500);
    // Per-row values do not depend on the schedule.
    CHECK(a == b);
    CHECK(a == c);
    CHECK(s1.unit_evals == s2.unit_evals);
    CHECK(s1.unit_evals == 1500 * rc.circuit.size());
    double total = 0.0;
    for (double x : a) total += x;
    CHECK(total_log_likelihood(rc.circuit, data) == total);
}

TEST_CASE("edge flows equal the derivative oracle") {
    const auto rc = oracle::random_circuit({6, 2, 2, 0, true}, 4);
    const Circuit& c = rc.circuit;
    const auto data = noisy_data(c, 12, 0.25, 2);
    const auto rows = all_rows(data.rows);
    const auto acc = accumulate_flows(c, data, rows, Execution::Serial);
    CHECK(acc.samples == 12);
    for (UnitId id = 0; id < c.size(); ++id) {
        const Unit& u = c.unit(id);
        if (u.kind != UnitKind::Sum) continue;
        for (std::size_t k = 0; k < u.children.size(); ++k) {
            double expected = 0.0;
            for (std::size_t i = 0; i < data.rows; ++i) {
                const std::vector<std::int32_t> x(data.row(i).begin(), data.row(i).end());
                const double p = oracle::linear_probability(c, x);
                const double d = oracle::linear_probability_with_weight(c, x, id, k, 1.0) -
                                 oracle::linear_probability_with_weight(c, x, id, k, 0.0);
                expected += std::exp(u.log_weights[k]) * d / p;
            }
            CHECK(acc.param_flow[c.param_offset(id) + k] == doctest::Approx(expected).epsilon(1e-9));
        }
    }
    // Input counts sum to the unit's flow.
    for (UnitId id = 0; id < c.size(); ++id) {
        const Unit& u = c.unit(id);
        if (u.kind != UnitKind::Input || u.indicator) continue;
        double total = 0.0;
        for (std::size_t k = 0; k < u.log_dist.size(); ++k) total += acc.param_flow[c.param_offset(id) + k];
        CHECK(total == doctest::Approx(acc.unit_flow[id]).epsilon(1e-12));
    }
    CHECK(acc.unit_flow[c.root()] == doctest::Approx(12.0));
}

TEST_CASE("parallel flows match serial; deterministic flows are reproducible") {
    const auto rc = oracle::random_circuit({9, 3, 2, 0, true}, 8);
    const auto data = noisy_data(rc.circuit, 2000, 0.1, 3);
    const auto rows = all_rows(data.rows);
    const auto s = accumulate_flows(rc.circuit, data, rows, Execution::Serial);
    const auto p = accumulate_flows(rc.circuit, data, rows, Execution::Parallel);
    const auto d1 = accumulate_flows(rc.circuit, data, rows, Execution::Deterministic);
    const auto d2 = accumulate_flows(rc.circuit, data, rows, Execution::Deterministic);
    REQUIRE(s.param_flow.size() == p.param_flow.size());
    for (std::size_t k = 0; k < s.param_flow.size(); ++k) {
        CHECK(p.param_flow[k] == doctest::Approx(s.param_flow[k]).epsilon(1e-10));
        CHECK(d1.param_flow[k] == doctest::Approx(s.param_flow[k]).epsilon(1e-10));
    }
    CHECK(d1.param_flow == d2.param_flow);
    CHECK(d1.log_likelihood == d2.log_likelihood);
    CHECK(p.log_likelihood == doctest::Approx(s.log_likelihood).epsilon(1e-12));
    CHECK(s.unit_evals == p.unit_evals);
}

TEST_CASE("zero-probability rows are skipped") {
    CircuitBuilder b({2});
    const auto c = std::move(b).build(b.add_sum({b.add_indicator(0, 0)}, {1.0}));
    DataMatrix d(3, 1, 0);
    d.at(1, 0) = 1;
    const auto acc = accumulate_flows(c, d, all_rows(3), Execution::Serial);
    CHECK(acc.skipped == 1);
    CHECK(acc.samples == 2);
    const auto ll = log_likelihoods(c, d);
    CHECK(std::isinf(ll[1]));
}

TEST_CASE("row subsets select rows in the given order") {
    const auto rc = oracle::random_circuit({5, 2, 2, 0, true}, 2);
    const auto data = noisy_data(rc.circuit, 50, 0.0, 9);
    const auto all = log_likelihoods(rc.circuit, data);
    const std::vector<std::size_t> pick{7, 3, 42};
    const auto some = log_likelihoods(rc.circuit, data, pick, Execution::Parallel);
    const std::vector<double> expected{all[7], all[3], all[42]};
    CHECK(some == expected);
}
