#include "pclvd/induce.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pclvd/error.hpp"

namespace pclvd {

void EmbeddingMatrix::validate() const {
    if (rows == 0 || dims == 0) throw DataError("embedding matrix must have n >= 1 and d >= 1");
    if (values.size() != rows * dims) throw DataError("embedding matrix size does not match n x d");
    for (float x : values) {
        if (!std::isfinite(x)) throw DataError("embedding matrix contains NaN or Inf");
    }
}

void LVAssignment::validate() const {
    if (values.size() != rows * cols()) throw ShapeError("assignment size does not match n x k");
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < cols(); ++i) {
            if (at(r, i) >= cardinalities[i]) throw DomainError("LV value out of range in column " + std::to_string(i));
        }
    }
}

namespace {

double squared_distance(std::span<const float> x, const double* c) {
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double d = static_cast<double>(x[k]) - c[k];
        s += d * d;
    }
    return s;
}

std::uint32_t nearest(std::span<const float> x, const std::vector<double>& centroids, std::size_t m, double& best) {
    const std::size_t d = x.size();
    std::uint32_t arg = 0;
    best = squared_distance(x, centroids.data());
    for (std::size_t j = 1; j < m; ++j) {
        const double dist = squared_distance(x, centroids.data() + j * d);
        if (dist < best) {
            best = dist;
            arg = static_cast<std::uint32_t>(j);
        }
    }
    return arg;
}

std::vector<double> kmeanspp_seed(const EmbeddingMatrix& e, std::size_t m, std::mt19937_64& rng) {
    const std::size_t n = e.rows, d = e.dims;
    std::vector<double> centroids(m * d);
    auto place = [&](std::size_t j, std::size_t row) {
        auto x = e.row(row);
        for (std::size_t k = 0; k < d; ++k) centroids[j * d + k] = x[k];
    };
    place(0, std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
    std::vector<double> closest(n);
    for (std::size_t i = 0; i < n; ++i) closest[i] = squared_distance(e.row(i), centroids.data());
    for (std::size_t j = 1; j < m; ++j) {
        const double total = std::accumulate(closest.begin(), closest.end(), 0.0);
        std::size_t pick = 0;
        if (total > 0.0) {
            double u = std::uniform_real_distribution<double>(0.0, total)(rng);
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                if (closest[i] <= 0.0) continue;
                if (u < closest[i]) {
                    pick = i;
                    break;
                }
                u -= closest[i];
            }
            while (closest[pick] <= 0.0 && pick > 0) --pick;
        } else {
            // Every point coincides with a centroid already.
            pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
        }
        place(j, pick);
        for (std::size_t i = 0; i < n; ++i) {
            closest[i] = std::min(closest[i], squared_distance(e.row(i), centroids.data() + j * d));
        }
    }
    return centroids;
}

} // namespace

namespace serial {

std::vector<double> assign_nearest(const EmbeddingMatrix& e, const std::vector<double>& centroids, std::size_t m,
                                   std::vector<std::uint32_t>& assignments) {
    std::vector<double> dist(e.rows);
    assignments.resize(e.rows);
    for (std::size_t i = 0; i < e.rows; ++i) assignments[i] = nearest(e.row(i), centroids, m, dist[i]);
    return dist;
}

} // namespace serial

namespace parallel {

std::vector<double> assign_nearest(const EmbeddingMatrix& e, const std::vector<double>& centroids, std::size_t m,
                                   std::vector<std::uint32_t>& assignments) {
    std::vector<double> dist(e.rows);
    assignments.resize(e.rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(e.rows); ++i) {
        const auto r = static_cast<std::size_t>(i);
        assignments[r] = nearest(e.row(r), centroids, m, dist[r]);
    }
    return dist;
}

} // namespace parallel

namespace {
KMeansResult lloyd(const EmbeddingMatrix& e, std::size_t m, std::mt19937_64& rng, const KMeansOptions& opts);
} // namespace

KMeansResult kmeans(const EmbeddingMatrix& e, std::size_t m, std::uint64_t seed, const KMeansOptions& opts) {
    e.validate();
    if (m < 1) throw PreconditionError("k-means needs at least one cluster");
    if (m > e.rows) {
        throw PreconditionError("k-means asked for " + std::to_string(m) + " clusters over " + std::to_string(e.rows) +
                                " points");
    }
    if (opts.restarts < 1) throw PreconditionError("k-means needs at least one run");
    std::mt19937_64 rng(seed);
    KMeansResult best;
    for (std::size_t r = 0; r < opts.restarts; ++r) {
        auto res = lloyd(e, m, rng, opts);
        if (r == 0 || res.objective < best.objective) best = std::move(res);
    }
    return best;
}

namespace {

KMeansResult lloyd(const EmbeddingMatrix& e, std::size_t m, std::mt19937_64& rng, const KMeansOptions& opts) {
    const std::size_t n = e.rows, d = e.dims;
    KMeansResult res;
    res.centroids = kmeanspp_seed(e, m, rng);
    res.assignments.assign(n, 0);

    auto assign = [&] {
        return opts.exec == Execution::Serial ? serial::assign_nearest(e, res.centroids, m, res.assignments)
                                              : parallel::assign_nearest(e, res.centroids, m, res.assignments);
    };
    auto objective_of = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            s += squared_distance(e.row(i), res.centroids.data() + res.assignments[i] * d);
        }
        return s;
    };

    double previous = std::numeric_limits<double>::infinity();
    for (std::size_t it = 0; it < opts.max_iterations; ++it) {
        auto dist = assign();

        std::vector<std::size_t> sizes(m, 0);
        for (auto a : res.assignments) ++sizes[a];
        for (std::size_t j = 0; j < m; ++j) {
            if (sizes[j] != 0) continue;
            const auto largest = static_cast<std::uint32_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
            std::size_t far = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (res.assignments[i] == largest && (far == n || dist[i] > dist[far])) far = i;
            }
            res.assignments[far] = static_cast<std::uint32_t>(j);
            dist[far] = 0.0;
            --sizes[largest];
            sizes[j] = 1;
        }

        std::vector<double> sums(m * d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            auto x = e.row(i);
            double* s = sums.data() + res.assignments[i] * d;
            for (std::size_t k = 0; k < d; ++k) s[k] += x[k];
        }
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t k = 0; k < d; ++k) res.centroids[j * d + k] = sums[j * d + k] / static_cast<double>(sizes[j]);
        }

        const double obj = objective_of();
        res.history.push_back(obj);
        res.iterations = it + 1;
        const bool converged = std::isfinite(previous) && previous - obj <= opts.tolerance * std::max(previous, 1e-300);
        previous = obj;
        if (converged || obj == 0.0) break;
    }
    res.objective = previous;
    return res;
}

} // namespace

LVAssignment induce_sequence_lvs(const std::vector<EmbeddingMatrix>& per_position, std::size_t h, std::uint64_t seed,
                                 const KMeansOptions& opts) {
    if (per_position.empty()) throw PreconditionError("no positions to induce");
    const std::size_t n = per_position.front().rows;
    for (const auto& e : per_position) {
        if (e.rows != n) throw ShapeError("positions have different sample counts");
    }
    LVAssignment z;
    z.rows = n;
    z.cardinalities.assign(per_position.size(), static_cast<std::uint32_t>(h));
    z.values.assign(n * per_position.size(), 0);
    for (std::size_t t = 0; t < per_position.size(); ++t) {
        const auto res = kmeans(per_position[t], h, seed, opts);
        for (std::size_t l = 0; l < n; ++l) z.at(l, t) = res.assignments[l];
    }
    return z;
}

LVAssignment induce_patch_lvs(const std::vector<EmbeddingMatrix>& per_patch, const std::vector<std::uint32_t>& counts,
                              std::uint64_t seed, const KMeansOptions& opts) {
    if (per_patch.empty()) throw PreconditionError("no patches to induce");
    if (counts.size() != per_patch.size()) throw ShapeError("need one cluster count per patch");
    const std::size_t n = per_patch.front().rows;
    for (const auto& e : per_patch) {
        if (e.rows != n) throw ShapeError("patches have different sample counts");
    }
    LVAssignment z;
    z.rows = n;
    z.cardinalities = counts;
    z.values.assign(n * per_patch.size(), 0);
    for (std::size_t i = 0; i < per_patch.size(); ++i) {
        const auto res = kmeans(per_patch[i], counts[i], seed, opts);
        for (std::size_t l = 0; l < n; ++l) z.at(l, i) = res.assignments[l];
    }
    return z;
}

PatchMst patch_correlation_mst(const std::vector<EmbeddingMatrix>& per_patch) {
    const std::size_t k = per_patch.size();
    if (k == 0) throw PreconditionError("no patches");
    const std::size_t n = per_patch.front().rows, d = per_patch.front().dims;
    for (const auto& e : per_patch) {
        e.validate();
        if (e.rows != n) throw ShapeError("patches have different sample counts");
        if (e.dims != d) throw ShapeError("patches have different feature dimensions");
    }
    std::vector<double> norms(k * n);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t l = 0; l < n; ++l) {
            double s = 0.0;
            for (float x : per_patch[i].row(l)) s += static_cast<double>(x) * x;
            norms[i * n + l] = std::sqrt(s);
        }
    }
    PatchMst out;
    out.correlation.assign(k * k, 0.0);
    for (std::size_t a = 0; a < k; ++a) {
        out.correlation[a * k + a] = 1.0;
        for (std::size_t b = a + 1; b < k; ++b) {
            double total = 0.0;
            std::size_t used = 0;
            for (std::size_t l = 0; l < n; ++l) {
                const double na = norms[a * n + l], nb = norms[b * n + l];
                if (na == 0.0 || nb == 0.0) {
                    ++out.excluded_rows;
                    continue;
                }
                auto xa = per_patch[a].row(l);
                auto xb = per_patch[b].row(l);
                double dot = 0.0;
                for (std::size_t q = 0; q < d; ++q) dot += static_cast<double>(xa[q]) * xb[q];
                total += dot / (na * nb);
                ++used;
            }
            out.correlation[a * k + b] = out.correlation[b * k + a] = used ? total / static_cast<double>(used) : 0.0;
        }
    }
    out.tree = max_spanning_tree(out.correlation, k, 0);
    return out;
}

} // namespace pclvd
