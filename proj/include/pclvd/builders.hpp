#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "pclvd/circuit.hpp"
#include "pclvd/kernels.hpp"
#include "pclvd/materialize.hpp"
#include "pclvd/tree.hpp"

namespace pclvd {

// ---------------------------------------------------------------------------
// Hidden Markov models

struct HmmSpec {
    std::size_t seq_len = 32;
    std::size_t hidden_states = 1;
    std::size_t vocab_size = 1;
    /// Only affects initialization (every position starts from the same
    /// tables); the circuit itself never ties parameters.
    bool homogeneous = false;

    void validate() const;
};

/// Linear-space HMM tables for positions 0..T-1.
struct HmmParams {
    std::vector<double> initial;                  // [h]
    std::vector<std::vector<double>> transition;  // [T-1][from * h + to]
    std::vector<std::vector<double>> emission;    // [T][state * V + token]
};

/// Unit ids of the HMM circuit. product[t][s] has scope {X_t..X_{T-1}} and
/// represents "hidden state s at position t"; transition[t][s] mixes
/// product[t+1][*] with weights p(z_{t+1} | z_t = s).
struct HmmLayout {
    UnitId root = 0;
    std::vector<std::vector<UnitId>> emission;
    std::vector<std::vector<UnitId>> transition;
    std::vector<std::vector<UnitId>> product;
};

struct HmmCircuit {
    Circuit circuit;
    HmmLayout layout;
};

/// Uniform tables blended with Dirichlet(1.1) draws.
HmmParams random_hmm_params(const HmmSpec& spec, std::uint64_t seed);
HmmCircuit build_hmm(const HmmSpec& spec, const HmmParams& params);
HmmCircuit build_hmm(const HmmSpec& spec, std::uint64_t seed);
HmmParams extract_hmm_params(const Circuit& c, const HmmLayout& layout);

/// Suffix scopes {X_t..X_{T-1}} for t = 0..T-1, the materialization scopes
/// of the per-position hidden states.
std::vector<Scope> hmm_suffix_scopes(const HmmSpec& spec);

// ---------------------------------------------------------------------------
// Chow-Liu trees and HCLTs

/// Pairwise mutual information (nats) with Laplace pseudocount 1, as a dense
/// n x n matrix with a zero diagonal.
std::vector<double> mutual_information(const DataMatrix& data, const std::vector<std::uint32_t>& var_cards,
                                       Execution exec = Execution::Deterministic);

/// Maximum-MI spanning tree rooted at variable 0.
SpanningTree chow_liu_tree(const DataMatrix& data, const std::vector<std::uint32_t>& var_cards,
                           Execution exec = Execution::Deterministic);

struct HcltSpec {
    std::size_t num_vars = 0;
    std::vector<std::uint32_t> var_cards;
    std::size_t hidden_size = 16;
    SpanningTree backbone;

    void validate() const;
};

Circuit build_hclt(const HcltSpec& spec, std::uint64_t seed);

/// Adds an HCLT fragment over `vars` (tree node i <-> vars[i]) to `b` and
/// returns the products of the root node, one per root hidden state.
std::vector<UnitId> add_hclt_fragment(CircuitBuilder& b, const std::vector<VarId>& vars, const SpanningTree& tree,
                                      std::size_t hidden_size, std::size_t root_hidden_size, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Patch-structured image PC

struct PatchPcSpec {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t patch_size = 1;
    std::uint32_t pixel_card = 256;
    std::vector<std::uint32_t> categories;  // M_i per patch (a single entry is broadcast)
    std::size_t sub_hidden_size = 16;
    std::size_t latent_hidden_size = 0;     // 0 -> max_i M_i
    std::vector<SpanningTree> patch_trees;  // per patch, over local pixel indices; empty -> chains
    SpanningTree latent_tree;               // over patches; num_nodes == 0 -> chain

    std::size_t num_patches() const;
    std::uint32_t categories_of(std::size_t patch) const;
    void validate() const;
};

/// Global pixel variables of a patch, row-major inside the patch. Patches are
/// numbered row-major over the patch grid.
std::vector<VarId> patch_variables(const PatchPcSpec& spec, std::size_t patch);
PartitionSpec patch_partition(const PatchPcSpec& spec);

struct PatchPc {
    Circuit circuit;
    PartitionSpec partition;
    std::vector<std::vector<UnitId>> conditionals;  // [i][j]: root product of p(X_i | Z_i = j)
};

/// p(z) * prod_i p(x_i | z_i): an HCLT over the patch LVs whose Z_i-category
/// sums select between independent per-(i, j) HCLT sub-circuits.
PatchPc build_patch_pc(const PatchPcSpec& spec, std::uint64_t seed);

/// Dirichlet(1.1) draw blended 50/50 with the uniform distribution.
std::vector<double> jittered_uniform(std::size_t k, std::mt19937_64& rng);

} // namespace pclvd
