#include "pclvd/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "pclvd/error.hpp"

namespace pclvd {

namespace {

std::size_t draw(const std::vector<double>& probs, std::size_t offset, std::size_t count, std::mt19937_64& rng) {
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    for (std::size_t k = 0; k < count; ++k) {
        u -= probs[offset + k];
        if (u < 0.0) return k;
    }
    // Rounding left a sliver; fall back to the last category with mass.
    for (std::size_t k = count; k-- > 0;) {
        if (probs[offset + k] > 0.0) return k;
    }
    return count - 1;
}

std::vector<double> gaussian_vector(std::size_t d, double scale, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, scale);
    std::vector<double> v(d);
    for (double& x : v) x = g(rng);
    return v;
}

} // namespace

SampledSequences sample_hmm(const HmmParams& params, std::size_t seq_len, std::size_t vocab_size, std::size_t n,
                            std::uint64_t seed) {
    const std::size_t h = params.initial.size();
    if (params.emission.size() != seq_len || params.transition.size() + 1 != seq_len) {
        throw ShapeError("HMM tables do not match the sequence length");
    }
    std::mt19937_64 rng(seed);
    SampledSequences out;
    out.tokens.kind = DatasetKind::Tokens;
    out.tokens.rows = n;
    out.tokens.dims = seq_len;
    out.tokens.num_categories = static_cast<std::uint32_t>(vocab_size);
    out.tokens.values.resize(n * seq_len);
    out.states.resize(n * seq_len);
    for (std::size_t l = 0; l < n; ++l) {
        std::size_t s = draw(params.initial, 0, h, rng);
        for (std::size_t t = 0; t < seq_len; ++t) {
            if (t > 0) s = draw(params.transition[t - 1], s * h, h, rng);
            out.states[l * seq_len + t] = static_cast<std::uint32_t>(s);
            out.tokens.values[l * seq_len + t] =
                static_cast<std::uint32_t>(draw(params.emission[t], s * vocab_size, vocab_size, rng));
        }
    }
    return out;
}

void PlantedHmmSpec::validate() const {
    if (seq_len < 1) throw ConfigError("planted HMM needs seq_len >= 1");
    if (coarse < 1 || fine < 1) throw ConfigError("planted HMM needs at least one coarse and one fine state");
    if (vocab_size < coarse * fine) throw ConfigError("planted HMM needs vocab_size >= coarse * fine");
    for (double p : {coarse_advance, fine_stay, in_slice, in_block}) {
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("planted HMM probabilities must lie in [0, 1]");
    }
}

HmmParams planted_hmm_params(const PlantedHmmSpec& spec, std::uint64_t seed) {
    spec.validate();
    const std::size_t C = spec.coarse, F = spec.fine, h = C * F, V = spec.vocab_size;
    std::mt19937_64 rng(seed);
    HmmParams p;
    p.initial = jittered_uniform(h, rng);

    std::vector<double> trans(h * h, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        const auto other = jittered_uniform(C, rng);
        for (std::size_t f = 0; f < F; ++f) {
            for (std::size_t c2 = 0; c2 < C; ++c2) {
                double pc = (1.0 - spec.coarse_advance) * other[c2];
                if (c2 == (c + 1) % C) pc += spec.coarse_advance;
                for (std::size_t f2 = 0; f2 < F; ++f2) {
                    const double pf = F == 1 ? 1.0 : (f2 == f ? spec.fine_stay : (1.0 - spec.fine_stay) / double(F - 1));
                    trans[(c * F + f) * h + c2 * F + f2] = pc * pf;
                }
            }
        }
    }
    p.transition.assign(spec.seq_len - 1, trans);

    // Token block of coarse state c: [c*B, (c+1)*B); slice of sub-state f inside it.
    const std::size_t B = V / C;
    std::vector<double> emit(h * V, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        const std::size_t S = std::max<std::size_t>(1, B / F);
        for (std::size_t f = 0; f < F; ++f) {
            double* row = emit.data() + (c * F + f) * V;
            const std::size_t lo = c * B + f * S, hi = std::min(c * B + (f + 1) * S, (c + 1) * B);
            const auto w = jittered_uniform(V, rng);
            double slice_w = 0.0, block_w = 0.0, rest_w = 0.0;
            for (std::size_t v = 0; v < V; ++v) {
                if (v >= lo && v < hi) {
                    slice_w += w[v];
                } else if (v >= c * B && v < (c + 1) * B) {
                    block_w += w[v];
                } else {
                    rest_w += w[v];
                }
            }
            const double in_block_rest = block_w > 0.0 ? spec.in_block - spec.in_slice : 0.0;
            const double slice_mass = block_w > 0.0 ? spec.in_slice : spec.in_block;
            for (std::size_t v = 0; v < V; ++v) {
                if (v >= lo && v < hi) {
                    row[v] = slice_mass * w[v] / slice_w;
                } else if (v >= c * B && v < (c + 1) * B) {
                    row[v] = in_block_rest * w[v] / block_w;
                } else {
                    row[v] = rest_w > 0.0 ? (1.0 - spec.in_block) * w[v] / rest_w : 0.0;
                }
            }
            double total = 0.0;
            for (std::size_t v = 0; v < V; ++v) total += row[v];
            for (std::size_t v = 0; v < V; ++v) row[v] /= total;
        }
    }
    p.emission.assign(spec.seq_len, emit);
    return p;
}

std::vector<EmbeddingMatrix> oracle_state_embeddings(const SampledSequences& seqs, std::size_t fine,
                                                     const OracleEmbeddingSpec& spec, std::uint64_t seed) {
    if (fine < 1) throw PreconditionError("fine must be >= 1");
    const std::size_t n = seqs.tokens.rows, T = seqs.tokens.dims, d = spec.dims;
    std::uint32_t max_state = 0;
    for (auto s : seqs.states) max_state = std::max(max_state, s);
    const std::size_t num_states = max_state + 1;
    const std::size_t num_coarse = (num_states + fine - 1) / fine;

    std::mt19937_64 rng(seed);
    std::vector<std::vector<double>> coarse(num_coarse), offset(num_states);
    for (auto& c : coarse) c = gaussian_vector(d, spec.coarse_scale, rng);
    for (auto& o : offset) o = gaussian_vector(d, spec.fine_scale, rng);
    std::normal_distribution<double> noise(0.0, spec.noise);

    std::vector<EmbeddingMatrix> out;
    for (std::size_t t = 0; t < T; ++t) {
        EmbeddingMatrix e(n, d);
        e.provenance = "oracle/position" + std::to_string(t);
        for (std::size_t l = 0; l < n; ++l) {
            const std::size_t s = seqs.states[l * T + t];
            auto row = e.row(l);
            for (std::size_t k = 0; k < d; ++k) {
                row[k] = static_cast<float>(coarse[s / fine][k] + offset[s][k] + noise(rng));
            }
        }
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<EmbeddingMatrix> suffix_embeddings(const Dataset& tokens, std::size_t window, std::size_t dims,
                                               std::uint64_t seed, double decay) {
    if (tokens.kind != DatasetKind::Tokens) throw DataError("suffix embeddings need a token dataset");
    if (window < 1 || dims < 1) throw PreconditionError("suffix window and dims must be positive");
    std::mt19937_64 rng(seed);
    std::vector<std::vector<double>> vec(tokens.num_categories);
    for (auto& v : vec) v = gaussian_vector(dims, 1.0, rng);
    const std::size_t n = tokens.rows, T = tokens.dims;
    std::vector<EmbeddingMatrix> out;
    for (std::size_t t = 0; t < T; ++t) {
        EmbeddingMatrix e(n, dims);
        e.provenance = "suffix-w" + std::to_string(window) + "/position" + std::to_string(t);
        for (std::size_t l = 0; l < n; ++l) {
            auto row = e.row(l);
            double w = 1.0;
            std::vector<double> acc(dims, 0.0);
            for (std::size_t q = t; q < std::min(T, t + window); ++q, w *= decay) {
                const auto& v = vec[tokens.at(l, q)];
                for (std::size_t k = 0; k < dims; ++k) acc[k] += w * v[k];
            }
            for (std::size_t k = 0; k < dims; ++k) row[k] = static_cast<float>(acc[k]);
        }
        out.push_back(std::move(e));
    }
    return out;
}

PlantedImages sample_planted_images(const PlantedImageSpec& spec, std::size_t n, std::uint64_t model_seed,
                                    std::uint64_t sample_seed) {
    if (spec.patch_size == 0 || spec.height % spec.patch_size || spec.width % spec.patch_size) {
        throw ConfigError("image size must be a multiple of the patch size");
    }
    if (spec.clusters < 1 || spec.pixel_card < 1) throw ConfigError("clusters and pixel_card must be positive");
    PatchPcSpec layout;
    layout.height = spec.height;
    layout.width = spec.width;
    layout.patch_size = spec.patch_size;
    layout.pixel_card = spec.pixel_card;
    layout.categories = {spec.clusters};
    const std::size_t k = layout.num_patches(), P = spec.patch_size * spec.patch_size;

    std::mt19937_64 rng(model_seed);
    std::uniform_int_distribution<std::uint32_t> pixel(0, spec.pixel_card - 1);
    std::uniform_int_distribution<std::uint32_t> cluster(0, spec.clusters - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::uint32_t> proto(k * spec.clusters * P);
    for (auto& v : proto) v = pixel(rng);
    rng.seed(sample_seed);

    PlantedImages out;
    auto& img = out.images;
    img.kind = DatasetKind::Images;
    img.rows = n;
    img.height = static_cast<std::uint32_t>(spec.height);
    img.width = static_cast<std::uint32_t>(spec.width);
    img.dims = spec.height * spec.width;
    img.num_categories = spec.pixel_card;
    img.values.resize(n * img.dims);
    out.planted.rows = n;
    out.planted.cardinalities.assign(k, spec.clusters);
    out.planted.values.resize(n * k);
    for (std::size_t l = 0; l < n; ++l) {
        std::uint32_t z = cluster(rng);
        for (std::size_t i = 0; i < k; ++i) {
            if (i > 0 && unit(rng) >= spec.stay) z = cluster(rng);
            out.planted.at(l, i) = z;
            const auto vars = patch_variables(layout, i);
            for (std::size_t q = 0; q < P; ++q) {
                std::uint32_t v = proto[(i * spec.clusters + z) * P + q];
                if (unit(rng) < spec.noise) v = pixel(rng);
                img.values[l * img.dims + vars[q]] = v;
            }
        }
    }
    return out;
}

std::vector<EmbeddingMatrix> patch_pixel_features(const Dataset& images, const PatchPcSpec& spec) {
    if (images.dims != spec.height * spec.width) throw ShapeError("images do not match the patch layout");
    std::vector<EmbeddingMatrix> out;
    for (std::size_t i = 0; i < spec.num_patches(); ++i) {
        const auto vars = patch_variables(spec, i);
        EmbeddingMatrix e(images.rows, vars.size());
        e.provenance = "pixels/patch" + std::to_string(i);
        for (std::size_t l = 0; l < images.rows; ++l) {
            for (std::size_t q = 0; q < vars.size(); ++q) e.row(l)[q] = static_cast<float>(images.at(l, vars[q]));
        }
        out.push_back(std::move(e));
    }
    return out;
}

} // namespace pclvd
