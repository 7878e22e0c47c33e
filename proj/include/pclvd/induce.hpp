#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pclvd/kernels.hpp"
#include "pclvd/tree.hpp"

namespace pclvd {

/// n x d single-precision embeddings from an external model, row-major.
struct EmbeddingMatrix {
    std::size_t rows = 0;
    std::size_t dims = 0;
    std::vector<float> values;
    std::string provenance;  // model / layer / position or patch id

    EmbeddingMatrix() = default;
    EmbeddingMatrix(std::size_t n, std::size_t d) : rows(n), dims(d), values(n * d, 0.0F) {}

    std::span<const float> row(std::size_t i) const { return {values.data() + i * dims, dims}; }
    std::span<float> row(std::size_t i) { return {values.data() + i * dims, dims}; }
    /// Throws DataError on NaN/Inf or an empty shape.
    void validate() const;
};

/// n x k LV values; column i takes values in [0, cardinalities[i]).
struct LVAssignment {
    std::size_t rows = 0;
    std::vector<std::uint32_t> cardinalities;
    std::vector<std::uint32_t> values;

    std::size_t cols() const { return cardinalities.size(); }
    std::uint32_t at(std::size_t r, std::size_t i) const { return values[r * cols() + i]; }
    std::uint32_t& at(std::size_t r, std::size_t i) { return values[r * cols() + i]; }
    void validate() const;
};

struct KMeansOptions {
    std::size_t max_iterations = 300;
    double tolerance = 1e-6;  // relative objective improvement
    std::size_t restarts = 1;  // independent seedings; the lowest objective wins
    Execution exec = Execution::Deterministic;
};

struct KMeansResult {
    std::vector<double> centroids;  // m x d
    std::vector<std::uint32_t> assignments;
    double objective = 0.0;
    std::size_t iterations = 0;
    std::vector<double> history;  // objective after each Lloyd iteration
};

/// k-means++ seeding followed by Lloyd iterations on squared Euclidean
/// distance. An emptied cluster takes the point of the largest cluster that
/// lies farthest from its centroid. Restarts draw from one RNG stream.
KMeansResult kmeans(const EmbeddingMatrix& e, std::size_t m, std::uint64_t seed, const KMeansOptions& opts = {});

namespace serial {
/// Nearest-centroid assignment (ties -> lowest index); returns squared distances.
std::vector<double> assign_nearest(const EmbeddingMatrix& e, const std::vector<double>& centroids, std::size_t m,
                                   std::vector<std::uint32_t>& assignments);
} // namespace serial

namespace parallel {
std::vector<double> assign_nearest(const EmbeddingMatrix& e, const std::vector<double>& centroids, std::size_t m,
                                   std::vector<std::uint32_t>& assignments);
} // namespace parallel

/// One k-means per position with h clusters, all using the same seed.
LVAssignment induce_sequence_lvs(const std::vector<EmbeddingMatrix>& per_position, std::size_t h, std::uint64_t seed,
                                 const KMeansOptions& opts = {});

/// One k-means per patch with M_i clusters.
LVAssignment induce_patch_lvs(const std::vector<EmbeddingMatrix>& per_patch, const std::vector<std::uint32_t>& counts,
                              std::uint64_t seed, const KMeansOptions& opts = {});

struct PatchMst {
    SpanningTree tree;
    std::vector<double> correlation;  // k x k mean cosine similarity
    std::size_t excluded_rows = 0;    // (pair, sample) terms skipped for zero-norm features
};

/// Maximum spanning tree over patches weighted by mean cosine similarity of
/// their features; rooted at patch 0.
PatchMst patch_correlation_mst(const std::vector<EmbeddingMatrix>& per_patch);

} // namespace pclvd
