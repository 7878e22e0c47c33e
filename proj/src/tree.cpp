#include "pclvd/tree.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <tuple>

#include "pclvd/error.hpp"

namespace pclvd {

std::vector<std::vector<std::size_t>> SpanningTree::children() const {
    std::vector<std::vector<std::size_t>> ch(num_nodes);
    for (std::size_t v = 0; v < num_nodes; ++v) {
        if (parent[v] >= 0) ch[static_cast<std::size_t>(parent[v])].push_back(v);
    }
    return ch;
}

std::vector<std::size_t> SpanningTree::ancestor_order() const {
    const auto ch = children();
    std::vector<std::size_t> order;
    std::deque<std::size_t> queue{root};
    while (!queue.empty()) {
        const std::size_t v = queue.front();
        queue.pop_front();
        order.push_back(v);
        for (std::size_t c : ch[v]) queue.push_back(c);
    }
    return order;
}

std::vector<std::size_t> SpanningTree::post_order() const {
    auto order = ancestor_order();
    std::reverse(order.begin(), order.end());
    return order;
}

std::vector<std::size_t> SpanningTree::ancestors(std::size_t node) const {
    std::vector<std::size_t> path;
    for (std::int64_t p = parent.at(node); p >= 0; p = parent[static_cast<std::size_t>(p)]) {
        path.push_back(static_cast<std::size_t>(p));
    }
    std::reverse(path.begin(), path.end());
    return path;
}

bool SpanningTree::has_edge(std::size_t a, std::size_t b) const {
    const auto e = std::minmax(a, b);
    return std::find(edges.begin(), edges.end(), std::pair{e.first, e.second}) != edges.end();
}

SpanningTree tree_from_edges(std::size_t n, std::vector<std::pair<std::size_t, std::size_t>> edges, std::size_t root) {
    if (n == 0) throw PreconditionError("tree needs at least one node");
    if (edges.size() + 1 != n) throw PreconditionError("a spanning tree over n nodes has n-1 edges");
    if (root >= n) throw PreconditionError("tree root out of range");
    SpanningTree t;
    t.num_nodes = n;
    t.root = root;
    std::vector<std::vector<std::size_t>> adj(n);
    for (auto& [a, b] : edges) {
        if (a >= n || b >= n || a == b) throw PreconditionError("invalid tree edge");
        if (a > b) std::swap(a, b);
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    t.edges = std::move(edges);
    t.parent.assign(n, -2);
    t.parent[root] = -1;
    std::deque<std::size_t> queue{root};
    std::size_t seen = 1;
    while (!queue.empty()) {
        const std::size_t v = queue.front();
        queue.pop_front();
        for (std::size_t u : adj[v]) {
            if (t.parent[u] != -2) continue;
            t.parent[u] = static_cast<std::int64_t>(v);
            queue.push_back(u);
            ++seen;
        }
    }
    if (seen != n) throw PreconditionError("edges do not form a spanning tree");
    return t;
}

SpanningTree chain_tree(std::size_t n) {
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t v = 1; v < n; ++v) edges.emplace_back(v - 1, v);
    return tree_from_edges(n, std::move(edges), 0);
}

SpanningTree max_spanning_tree(const std::vector<double>& weights, std::size_t n, std::size_t root) {
    if (weights.size() != n * n) throw ShapeError("weight matrix must be n x n");
    // Kruskal with union-find.
    std::vector<std::tuple<double, std::size_t, std::size_t>> cand;
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) cand.emplace_back(weights[a * n + b], a, b);
    }
    std::sort(cand.begin(), cand.end(), [](const auto& x, const auto& y) {
        if (std::get<0>(x) != std::get<0>(y)) return std::get<0>(x) > std::get<0>(y);
        return std::tie(std::get<1>(x), std::get<2>(x)) < std::tie(std::get<1>(y), std::get<2>(y));
    });
    std::vector<std::size_t> comp(n);
    std::iota(comp.begin(), comp.end(), std::size_t{0});
    auto find = [&](std::size_t v) {
        while (comp[v] != v) v = comp[v] = comp[comp[v]];
        return v;
    };
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    double total = 0.0;
    for (const auto& [w, a, b] : cand) {
        const std::size_t ra = find(a), rb = find(b);
        if (ra == rb) continue;
        comp[std::max(ra, rb)] = std::min(ra, rb);
        edges.emplace_back(a, b);
        total += w;
        if (edges.size() + 1 == n) break;
    }
    auto t = tree_from_edges(n, std::move(edges), root);
    t.weight = total;
    return t;
}

} // namespace pclvd
