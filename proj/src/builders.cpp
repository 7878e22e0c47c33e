#include "pclvd/builders.hpp"

#include <algorithm>
#include <cmath>

#include <omp.h>

#include "pclvd/error.hpp"

namespace pclvd {

std::vector<double> jittered_uniform(std::size_t k, std::mt19937_64& rng) {
    std::gamma_distribution<double> gamma(1.1, 1.0);
    std::vector<double> d(k);
    double total = 0.0;
    for (auto& x : d) total += (x = gamma(rng));
    for (auto& x : d) x = 0.5 / static_cast<double>(k) + 0.5 * x / total;
    return d;
}

// ---------------------------------------------------------------------------
// HMM

void HmmSpec::validate() const {
    if (seq_len < 1 || hidden_states < 1 || vocab_size < 1) {
        throw PreconditionError("HMM needs seq_len, hidden_states and vocab_size >= 1");
    }
}

HmmParams random_hmm_params(const HmmSpec& spec, std::uint64_t seed) {
    spec.validate();
    const std::size_t h = spec.hidden_states, v = spec.vocab_size, t_len = spec.seq_len;
    std::mt19937_64 rng(seed);
    HmmParams p;
    p.initial = jittered_uniform(h, rng);
    auto table = [&](std::size_t rows, std::size_t cols) {
        std::vector<double> out;
        for (std::size_t r = 0; r < rows; ++r) {
            auto row = jittered_uniform(cols, rng);
            out.insert(out.end(), row.begin(), row.end());
        }
        return out;
    };
    if (spec.homogeneous) {
        const auto trans = table(h, h);
        const auto emit = table(h, v);
        p.transition.assign(t_len - 1, trans);
        p.emission.assign(t_len, emit);
    } else {
        for (std::size_t t = 0; t + 1 < t_len; ++t) p.transition.push_back(table(h, h));
        for (std::size_t t = 0; t < t_len; ++t) p.emission.push_back(table(h, v));
    }
    return p;
}

HmmCircuit build_hmm(const HmmSpec& spec, const HmmParams& params) {
    spec.validate();
    const std::size_t h = spec.hidden_states, v = spec.vocab_size, t_len = spec.seq_len;
    if (params.initial.size() != h || params.transition.size() + 1 != t_len || params.emission.size() != t_len) {
        throw ShapeError("HMM parameter tables do not match the spec");
    }
    CircuitBuilder b(std::vector<std::uint32_t>(t_len, static_cast<std::uint32_t>(v)));
    HmmLayout layout;
    layout.emission.assign(t_len, {});
    layout.transition.assign(t_len > 0 ? t_len - 1 : 0, {});
    layout.product.assign(t_len, {});
    for (std::size_t t = t_len; t-- > 0;) {
        if (params.emission[t].size() != h * v) throw ShapeError("emission table has the wrong size");
        for (std::size_t s = 0; s < h; ++s) {
            std::vector<double> row(params.emission[t].begin() + static_cast<std::ptrdiff_t>(s * v),
                                    params.emission[t].begin() + static_cast<std::ptrdiff_t>((s + 1) * v));
            layout.emission[t].push_back(b.add_input(static_cast<VarId>(t), row));
        }
        if (t + 1 < t_len) {
            if (params.transition[t].size() != h * h) throw ShapeError("transition table has the wrong size");
            for (std::size_t s = 0; s < h; ++s) {
                std::vector<double> row(params.transition[t].begin() + static_cast<std::ptrdiff_t>(s * h),
                                        params.transition[t].begin() + static_cast<std::ptrdiff_t>((s + 1) * h));
                layout.transition[t].push_back(b.add_sum(layout.product[t + 1], row));
            }
        }
        for (std::size_t s = 0; s < h; ++s) {
            std::vector<UnitId> ch{layout.emission[t][s]};
            if (t + 1 < t_len) ch.push_back(layout.transition[t][s]);
            layout.product[t].push_back(b.add_product(std::move(ch)));
        }
    }
    layout.root = b.add_sum(layout.product[0], params.initial);
    return {std::move(b).build(layout.root), std::move(layout)};
}

HmmCircuit build_hmm(const HmmSpec& spec, std::uint64_t seed) { return build_hmm(spec, random_hmm_params(spec, seed)); }

HmmParams extract_hmm_params(const Circuit& c, const HmmLayout& layout) {
    auto probs = [](const std::vector<double>& logs) {
        std::vector<double> out(logs.size());
        std::transform(logs.begin(), logs.end(), out.begin(), [](double l) { return std::exp(l); });
        return out;
    };
    HmmParams p;
    p.initial = probs(c.unit(layout.root).log_weights);
    for (const auto& row : layout.transition) {
        std::vector<double> table;
        for (UnitId s : row) {
            auto w = probs(c.unit(s).log_weights);
            table.insert(table.end(), w.begin(), w.end());
        }
        p.transition.push_back(std::move(table));
    }
    for (const auto& row : layout.emission) {
        std::vector<double> table;
        for (UnitId s : row) {
            auto w = probs(c.unit(s).log_dist);
            table.insert(table.end(), w.begin(), w.end());
        }
        p.emission.push_back(std::move(table));
    }
    return p;
}

std::vector<Scope> hmm_suffix_scopes(const HmmSpec& spec) {
    std::vector<Scope> out;
    for (std::size_t t = 0; t < spec.seq_len; ++t) {
        out.push_back(Scope::range(spec.seq_len, static_cast<VarId>(t), static_cast<VarId>(spec.seq_len)));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Chow-Liu

namespace {

double pair_mutual_information(const DataMatrix& data, std::size_t a, std::size_t b, std::uint32_t ca, std::uint32_t cb) {
    std::vector<double> joint(static_cast<std::size_t>(ca) * cb, 1.0);
    for (std::size_t r = 0; r < data.rows; ++r) {
        joint[static_cast<std::size_t>(data.at(r, a)) * cb + static_cast<std::size_t>(data.at(r, b))] += 1.0;
    }
    const double total = static_cast<double>(data.rows) + static_cast<double>(joint.size());
    std::vector<double> pa(ca, 0.0), pb(cb, 0.0);
    for (std::size_t i = 0; i < ca; ++i) {
        for (std::size_t j = 0; j < cb; ++j) {
            const double p = joint[i * cb + j] / total;
            pa[i] += p;
            pb[j] += p;
        }
    }
    double mi = 0.0;
    for (std::size_t i = 0; i < ca; ++i) {
        for (std::size_t j = 0; j < cb; ++j) {
            const double p = joint[i * cb + j] / total;
            mi += p * std::log(p / (pa[i] * pb[j]));
        }
    }
    return mi;
}

} // namespace

std::vector<double> mutual_information(const DataMatrix& data, const std::vector<std::uint32_t>& var_cards,
                                       Execution exec) {
    const std::size_t n = var_cards.size();
    if (data.cols != n) throw ShapeError("data columns do not match variable count");
    for (std::int32_t x : data.values) {
        if (x < 0) throw DataError("mutual information needs fully observed data");
    }
    for (std::size_t r = 0; r < data.rows; ++r) {
        for (std::size_t v = 0; v < n; ++v) {
            if (static_cast<std::uint32_t>(data.at(r, v)) >= var_cards[v]) throw DomainError("data value out of range");
        }
    }
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) pairs.emplace_back(a, b);
    }
    std::vector<double> mi(n * n, 0.0);
    auto one = [&](std::size_t k) {
        const auto [a, b] = pairs[k];
        mi[a * n + b] = mi[b * n + a] = pair_mutual_information(data, a, b, var_cards[a], var_cards[b]);
    };
    if (exec == Execution::Serial) {
        for (std::size_t k = 0; k < pairs.size(); ++k) one(k);
    } else {
#pragma omp parallel for schedule(dynamic, 4)
        for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(pairs.size()); ++k) one(static_cast<std::size_t>(k));
    }
    return mi;
}

SpanningTree chow_liu_tree(const DataMatrix& data, const std::vector<std::uint32_t>& var_cards, Execution exec) {
    if (data.rows < 2) throw PreconditionError("Chow-Liu tree needs at least 2 samples");
    if (var_cards.size() < 2) throw PreconditionError("Chow-Liu tree needs at least 2 variables");
    return max_spanning_tree(mutual_information(data, var_cards, exec), var_cards.size(), 0);
}

// ---------------------------------------------------------------------------
// HCLT

void HcltSpec::validate() const {
    if (num_vars == 0) throw PreconditionError("HCLT needs at least one variable");
    if (var_cards.size() != num_vars) throw ShapeError("HCLT var_cards size does not match num_vars");
    if (hidden_size == 0) throw PreconditionError("HCLT hidden size must be positive");
    if (backbone.num_nodes != num_vars) throw PreconditionError("HCLT backbone must span all variables");
}

std::vector<UnitId> add_hclt_fragment(CircuitBuilder& b, const std::vector<VarId>& vars, const SpanningTree& tree,
                                      std::size_t hidden_size, std::size_t root_hidden_size, std::mt19937_64& rng) {
    if (tree.num_nodes != vars.size()) throw PreconditionError("HCLT backbone size does not match its variables");
    const auto kids = tree.children();
    std::vector<std::vector<UnitId>> products(tree.num_nodes);
    for (std::size_t v : tree.post_order()) {
        const std::size_t hv = v == tree.root ? root_hidden_size : hidden_size;
        const std::uint32_t card = b.var_cards().at(vars[v]);
        // upward[c][h]: p(subtree of c | hidden of v = h)
        std::vector<std::vector<UnitId>> upward(kids[v].size());
        for (std::size_t k = 0; k < kids[v].size(); ++k) {
            const auto& below = products[kids[v][k]];
            for (std::size_t hs = 0; hs < hv; ++hs) upward[k].push_back(b.add_sum(below, jittered_uniform(below.size(), rng)));
        }
        for (std::size_t hs = 0; hs < hv; ++hs) {
            std::vector<UnitId> ch{b.add_input(vars[v], jittered_uniform(card, rng))};
            for (const auto& up : upward) ch.push_back(up[hs]);
            products[v].push_back(b.add_product(std::move(ch)));
        }
    }
    return products[tree.root];
}

Circuit build_hclt(const HcltSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    CircuitBuilder b(spec.var_cards);
    std::vector<VarId> vars(spec.num_vars);
    for (std::size_t v = 0; v < spec.num_vars; ++v) vars[v] = static_cast<VarId>(v);
    const auto top = add_hclt_fragment(b, vars, spec.backbone, spec.hidden_size, spec.hidden_size, rng);
    const UnitId root = b.add_sum(top, jittered_uniform(top.size(), rng));
    return std::move(b).build(root);
}

// ---------------------------------------------------------------------------
// Patch PC

std::size_t PatchPcSpec::num_patches() const {
    if (patch_size == 0) return 0;
    return (height / patch_size) * (width / patch_size);
}

std::uint32_t PatchPcSpec::categories_of(std::size_t patch) const {
    return categories.size() == 1 ? categories[0] : categories.at(patch);
}

void PatchPcSpec::validate() const {
    if (height == 0 || width == 0 || patch_size == 0) throw PreconditionError("image and patch sizes must be positive");
    if (height % patch_size != 0 || width % patch_size != 0) {
        throw PreconditionError("patch size must divide both image dimensions");
    }
    if (pixel_card == 0) throw PreconditionError("pixel cardinality must be positive");
    const std::size_t k = num_patches();
    if (categories.size() != 1 && categories.size() != k) throw ShapeError("need one category count per patch");
    for (auto m : categories) {
        if (m == 0) throw PreconditionError("every patch needs at least one LV category");
    }
    if (sub_hidden_size == 0) throw PreconditionError("sub-circuit hidden size must be positive");
    if (!patch_trees.empty()) {
        if (patch_trees.size() != k) throw ShapeError("need one backbone per patch");
        for (const auto& t : patch_trees) {
            if (t.num_nodes != patch_size * patch_size) throw ShapeError("patch backbone must span the patch pixels");
        }
    }
    if (latent_tree.num_nodes != 0 && latent_tree.num_nodes != k) throw ShapeError("latent backbone must span the patches");
}

std::vector<VarId> patch_variables(const PatchPcSpec& spec, std::size_t patch) {
    const std::size_t per_row = spec.width / spec.patch_size;
    const std::size_t py = patch / per_row, px = patch % per_row;
    std::vector<VarId> out;
    for (std::size_t dy = 0; dy < spec.patch_size; ++dy) {
        for (std::size_t dx = 0; dx < spec.patch_size; ++dx) {
            const std::size_t y = py * spec.patch_size + dy, x = px * spec.patch_size + dx;
            out.push_back(static_cast<VarId>(y * spec.width + x));
        }
    }
    return out;
}

PartitionSpec patch_partition(const PatchPcSpec& spec) {
    PartitionSpec p;
    const std::size_t nv = spec.height * spec.width;
    for (std::size_t i = 0; i < spec.num_patches(); ++i) {
        p.parts.push_back(Scope::from_indices(nv, patch_variables(spec, i)));
        p.categories.push_back(spec.categories_of(i));
    }
    return p;
}

PatchPc build_patch_pc(const PatchPcSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    const std::size_t k = spec.num_patches();
    const std::size_t pixels = spec.patch_size * spec.patch_size;
    std::size_t hz = spec.latent_hidden_size;
    if (hz == 0) {
        for (std::size_t i = 0; i < k; ++i) hz = std::max<std::size_t>(hz, spec.categories_of(i));
    }
    const SpanningTree latent = spec.latent_tree.num_nodes == k ? spec.latent_tree : chain_tree(k);
    const auto kids = latent.children();

    CircuitBuilder b(std::vector<std::uint32_t>(spec.height * spec.width, spec.pixel_card));
    std::vector<std::vector<UnitId>> conditionals(k);
    std::vector<std::vector<UnitId>> node_products(k);

    auto offer = [&](std::size_t child) {
        // p(subtree below child | parent's hidden state): a fresh mixture per
        // parent state. Leaves of the latent tree mix their Z categories
        // directly so no extra product carries the patch scope.
        const auto& below = kids[child].empty() ? conditionals[child] : node_products[child];
        return b.add_sum(below, jittered_uniform(below.size(), rng));
    };

    for (std::size_t i : latent.post_order()) {
        const auto vars = patch_variables(spec, i);
        const SpanningTree tree = spec.patch_trees.empty() ? chain_tree(pixels) : spec.patch_trees[i];
        for (std::uint32_t j = 0; j < spec.categories_of(i); ++j) {
            conditionals[i].push_back(add_hclt_fragment(b, vars, tree, spec.sub_hidden_size, 1, rng).front());
        }
        if (kids[i].empty()) continue;
        for (std::size_t h = 0; h < hz; ++h) {
            const auto& cond = conditionals[i];
            std::vector<UnitId> ch{b.add_sum(cond, jittered_uniform(cond.size(), rng))};
            for (std::size_t c : kids[i]) ch.push_back(offer(c));
            node_products[i].push_back(b.add_product(std::move(ch)));
        }
    }
    const std::size_t r = latent.root;
    const auto& top = kids[r].empty() ? conditionals[r] : node_products[r];
    const UnitId root = b.add_sum(top, jittered_uniform(top.size(), rng));
    return {std::move(b).build(root), patch_partition(spec), std::move(conditionals)};
}

} // namespace pclvd
