#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "pclvd/builders.hpp"
#include "pclvd/induce.hpp"
#include "pclvd/io.hpp"

namespace pclvd {

/// Sequences drawn from an HMM together with the hidden states.
struct SampledSequences {
    Dataset tokens;
    std::vector<std::uint32_t> states;  // n x T
};

SampledSequences sample_hmm(const HmmParams& params, std::size_t seq_len, std::size_t vocab_size, std::size_t n,
                            std::uint64_t seed);

/// A two-level hidden chain: `coarse` states, each split into `fine`
/// sub-states. Coarse states own disjoint token blocks; a sub-state prefers
/// its own slice of the block. Sub-states are sticky, so telling them apart
/// needs the full coarse x fine state space.
struct PlantedHmmSpec {
    std::size_t seq_len = 8;
    std::size_t vocab_size = 64;
    std::size_t coarse = 8;
    std::size_t fine = 2;
    double coarse_advance = 0.6;  // p(c_{t+1} = c_t + 1 mod coarse)
    double fine_stay = 0.9;
    double in_slice = 0.85;  // emission mass on the sub-state's slice
    double in_block = 0.97;  // ... on the coarse block overall

    std::size_t num_states() const { return coarse * fine; }
    void validate() const;
};

HmmParams planted_hmm_params(const PlantedHmmSpec& spec, std::uint64_t seed);

/// Embeddings that reveal the hidden state: coarse centroid + sub-state
/// offset + isotropic noise, one matrix per position.
struct OracleEmbeddingSpec {
    std::size_t dims = 16;
    double coarse_scale = 10.0;
    double fine_scale = 3.0;
    double noise = 0.5;
};

std::vector<EmbeddingMatrix> oracle_state_embeddings(const SampledSequences& seqs, std::size_t fine,
                                                     const OracleEmbeddingSpec& spec, std::uint64_t seed);

/// Embedding of the suffix window x_t..x_{t+w-1}: geometrically decayed sum
/// of fixed random token vectors.
std::vector<EmbeddingMatrix> suffix_embeddings(const Dataset& tokens, std::size_t window, std::size_t dims,
                                               std::uint64_t seed, double decay = 0.5);

struct PlantedImageSpec {
    std::size_t height = 4;
    std::size_t width = 4;
    std::size_t patch_size = 2;
    std::uint32_t pixel_card = 2;
    std::uint32_t clusters = 4;
    double stay = 0.7;   // p(z_i = z_{i-1})
    double noise = 0.1;  // p(pixel redrawn uniformly)
};

struct PlantedImages {
    Dataset images;
    LVAssignment planted;
};

/// Prototypes come from `model_seed`, the draws from `sample_seed`; splits of
/// one dataset share the model seed.
PlantedImages sample_planted_images(const PlantedImageSpec& spec, std::size_t n, std::uint64_t model_seed,
                                    std::uint64_t sample_seed);

/// Raw pixel values of each patch as float features.
std::vector<EmbeddingMatrix> patch_pixel_features(const Dataset& images, const PatchPcSpec& spec);

} // namespace pclvd
