#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "pclvd/error.hpp"
#include "pclvd/induce.hpp"
#include "pclvd/tree.hpp"

using namespace pclvd;

namespace {

EmbeddingMatrix from_points(const std::vector<double>& xs) {
    EmbeddingMatrix e(xs.size(), 1);
    for (std::size_t i = 0; i < xs.size(); ++i) e.values[i] = static_cast<float>(xs[i]);
    return e;
}

struct Blobs {
    EmbeddingMatrix e;
    std::vector<std::uint32_t> labels;
};

Blobs gaussian_blobs(std::size_t n, std::size_t m, std::size_t d, double spread, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> centers(m * d);
    for (double& c : centers) c = 10.0 * g(rng);
    Blobs b{EmbeddingMatrix(n, d), std::vector<std::uint32_t>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::uint32_t>(i % m);
        b.labels[i] = k;
        for (std::size_t j = 0; j < d; ++j) b.e.values[i * d + j] = static_cast<float>(centers[k * d + j] + spread * g(rng));
    }
    return b;
}

} // namespace

TEST_CASE("k-means on two obvious clusters") {
    const auto e = from_points({0.0, 0.1, 10.0, 10.1});
    const auto r = kmeans(e, 2, 1);
    CHECK(r.assignments[0] == r.assignments[1]);
    CHECK(r.assignments[2] == r.assignments[3]);
    CHECK(r.assignments[0] != r.assignments[2]);
    CHECK(r.objective == doctest::Approx(0.01).epsilon(1e-5));
    std::vector<double> c = r.centroids;
    std::sort(c.begin(), c.end());
    CHECK(c[0] == doctest::Approx(0.05).epsilon(1e-6));
    CHECK(c[1] == doctest::Approx(10.05).epsilon(1e-6));
}

TEST_CASE("k-means edge cases") {
    const auto e = from_points({1.0, 2.0, 4.0});
    const auto same = kmeans(e, 3, 5);
    CHECK(same.objective == 0.0);
    const auto one = kmeans(e, 1, 5);
    CHECK(one.centroids[0] == doctest::Approx(7.0 / 3.0));
    CHECK_THROWS_AS(kmeans(e, 0, 1), PreconditionError);
    CHECK_THROWS_AS(kmeans(e, 4, 1), PreconditionError);
    EmbeddingMatrix bad = from_points({1.0, std::nan("")});
    CHECK_THROWS_AS(kmeans(bad, 1, 1), DataError);
    CHECK_THROWS_AS(kmeans(EmbeddingMatrix(), 1, 1), DataError);
}

TEST_CASE("k-means reaches the exhaustive 2-means optimum on small 1-D sets") {
    std::mt19937_64 rng(17);
    for (int rep = 0; rep < 25; ++rep) {
        std::vector<double> xs(9);
        for (double& x : xs) x = std::normal_distribution<double>(0.0, 1.0)(rng) + (rng() % 2 ? 6.0 : 0.0);
        const double best = oracle::exhaustive_two_means(xs);
        double found = std::numeric_limits<double>::infinity();
        for (std::uint64_t s = 0; s < 5; ++s) found = std::min(found, kmeans(from_points(xs), 2, s).objective);
        CHECK(found >= best - 1e-6);
        CHECK(found == doctest::Approx(best).epsilon(1e-5));
    }
}

TEST_CASE("Lloyd objective never increases and runs are reproducible") {
    const auto b = gaussian_blobs(600, 6, 5, 4.0, 3);
    const auto r = kmeans(b.e, 6, 11);
    REQUIRE(!r.history.empty());
    for (std::size_t i = 1; i < r.history.size(); ++i) CHECK(r.history[i] <= r.history[i - 1] * (1 + 1e-12));
    CHECK(r.history.back() == doctest::Approx(r.objective));
    const auto again = kmeans(b.e, 6, 11);
    CHECK(again.assignments == r.assignments);
    CHECK(again.centroids == r.centroids);
    KMeansOptions serial_opts;
    serial_opts.exec = Execution::Serial;
    CHECK(kmeans(b.e, 6, 11, serial_opts).assignments == r.assignments);
}

TEST_CASE("restarts keep the lowest objective") {
    const auto b = gaussian_blobs(400, 12, 3, 1.0, 8);
    KMeansOptions one;
    KMeansOptions many;
    many.restarts = 6;
    const auto r1 = kmeans(b.e, 12, 2, one);
    const auto r6 = kmeans(b.e, 12, 2, many);
    // The first restart is the single run.
    CHECK(r6.objective <= r1.objective);
    for (std::uint64_t s = 0; s < 3; ++s) {
        for (const auto& h : kmeans(b.e, 12, s, many).history) CHECK(std::isfinite(h));
    }
    many.restarts = 0;
    CHECK_THROWS_AS(kmeans(b.e, 12, 2, many), PreconditionError);
}

TEST_CASE("serial and parallel nearest-centroid assignment agree") {
    const auto b = gaussian_blobs(1000, 5, 7, 6.0, 1);
    const auto r = kmeans(b.e, 5, 2);
    std::vector<std::uint32_t> sa, pa;
    const auto sd = serial::assign_nearest(b.e, r.centroids, 5, sa);
    const auto pd = parallel::assign_nearest(b.e, r.centroids, 5, pa);
    CHECK(sa == pa);
    CHECK(sd == pd);
    // Ties go to the lowest index.
    const auto e = from_points({1.0});
    std::vector<std::uint32_t> tie;
    serial::assign_nearest(e, {0.0, 2.0}, 2, tie);
    CHECK(tie[0] == 0);
}

TEST_CASE("planted clusters are recovered") {
    const auto b = gaussian_blobs(800, 4, 8, 1.0, 5);
    const auto r = kmeans(b.e, 4, 3);
    CHECK(oracle::adjusted_rand_index(r.assignments, b.labels) > 0.99);
    CHECK(oracle::best_match_accuracy(r.assignments, b.labels, 4) > 0.99);
}

TEST_CASE("induce_sequence_lvs and induce_patch_lvs shapes") {
    std::vector<EmbeddingMatrix> per;
    for (std::uint64_t t = 0; t < 3; ++t) per.push_back(gaussian_blobs(120, 3, 4, 1.0, t).e);
    const auto z = induce_sequence_lvs(per, 3, 9);
    CHECK(z.rows == 120);
    CHECK(z.cardinalities == std::vector<std::uint32_t>{3, 3, 3});
    CHECK_NOTHROW(z.validate());
    for (std::size_t t = 0; t < 3; ++t) {
        const auto r = kmeans(per[t], 3, 9);
        for (std::size_t i = 0; i < 120; ++i) CHECK(z.at(i, t) == r.assignments[i]);
    }
    const auto zp = induce_patch_lvs(per, {2, 3, 4}, 1);
    CHECK(zp.cardinalities == std::vector<std::uint32_t>{2, 3, 4});
    CHECK_THROWS_AS(induce_patch_lvs(per, {2, 3}, 1), ShapeError);
    per.push_back(gaussian_blobs(50, 3, 4, 1.0, 9).e);
    CHECK_THROWS_AS(induce_sequence_lvs(per, 3, 9), ShapeError);

    LVAssignment bad{2, {2}, {0, 2}};
    CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("maximum spanning tree matches Pruefer enumeration") {
    std::mt19937_64 rng(6);
    for (std::size_t k : {2u, 3u, 5u, 6u}) {
        for (int rep = 0; rep < 10; ++rep) {
            std::vector<double> w(k * k, 0.0);
            for (std::size_t a = 0; a < k; ++a) {
                for (std::size_t b = a + 1; b < k; ++b) w[a * k + b] = w[b * k + a] = std::uniform_real_distribution<double>(-1, 1)(rng);
            }
            const auto t = max_spanning_tree(w, k);
            CHECK(t.edges.size() == k - 1);
            CHECK(std::abs(t.weight - oracle::brute_force_max_tree_weight(w, k)) < 1e-12);
            const auto order = t.ancestor_order();
            std::vector<std::size_t> pos(k);
            for (std::size_t i = 0; i < k; ++i) pos[order[i]] = i;
            for (std::size_t v = 0; v < k; ++v) {
                if (t.parent[v] >= 0) CHECK(pos[static_cast<std::size_t>(t.parent[v])] < pos[v]);
            }
        }
    }
    CHECK(oracle::all_labeled_trees(5).size() == 125);
}

TEST_CASE("patch correlation MST") {
    // Patches 0 and 2 carry the same signal; 1 is unrelated; 3 is all zeros.
    std::mt19937_64 rng(2);
    const std::size_t n = 200;
    std::vector<EmbeddingMatrix> per(4, EmbeddingMatrix(n, 3));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            const float s = static_cast<float>(std::normal_distribution<double>()(rng));
            per[0].values[i * 3 + j] = s;
            per[2].values[i * 3 + j] = s;
            per[1].values[i * 3 + j] = static_cast<float>(std::normal_distribution<double>()(rng));
        }
    }
    const auto m = patch_correlation_mst(per);
    CHECK(m.tree.has_edge(0, 2));
    CHECK(m.correlation[0 * 4 + 2] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(m.excluded_rows == 3 * n);
    CHECK(m.tree.root == 0);
    CHECK(std::abs(m.tree.weight - oracle::brute_force_max_tree_weight(m.correlation, 4)) < 1e-12);
}
