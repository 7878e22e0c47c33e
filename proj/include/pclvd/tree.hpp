#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace pclvd {

/// Undirected spanning tree oriented away from `root`.
struct SpanningTree {
    std::size_t num_nodes = 0;
    std::size_t root = 0;
    std::vector<std::pair<std::size_t, std::size_t>> edges;  // (min, max) index pairs
    std::vector<std::int64_t> parent;                        // -1 at the root
    double weight = 0.0;

    std::vector<std::vector<std::size_t>> children() const;
    /// Breadth-first order from the root; every node appears after its parent.
    std::vector<std::size_t> ancestor_order() const;
    /// Post-order (children before parents).
    std::vector<std::size_t> post_order() const;
    /// Path from the root down to, but excluding, `node`.
    std::vector<std::size_t> ancestors(std::size_t node) const;
    bool has_edge(std::size_t a, std::size_t b) const;
};

/// Maximum-weight spanning tree over a dense symmetric weight matrix
/// (row-major n x n). Ties are broken by lexicographic (min, max) edge order.
SpanningTree max_spanning_tree(const std::vector<double>& weights, std::size_t n, std::size_t root = 0);

/// Orients an undirected edge list away from `root`.
SpanningTree tree_from_edges(std::size_t n, std::vector<std::pair<std::size_t, std::size_t>> edges, std::size_t root = 0);

/// Chain 0 - 1 - ... - (n-1) rooted at 0.
SpanningTree chain_tree(std::size_t n);

} // namespace pclvd
