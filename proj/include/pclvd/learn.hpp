#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pclvd/circuit.hpp"
#include "pclvd/induce.hpp"
#include "pclvd/kernels.hpp"
#include "pclvd/materialize.hpp"

namespace pclvd {

inline constexpr double kDefaultPseudocount = 0.01;

/// One block of epochs with a linearly annealed learning rate (constant
/// within an epoch).
struct TrainPhase {
    std::size_t epochs = 1;
    double alpha_start = 0.1;
    double alpha_end = 0.1;

    double alpha_at(std::size_t epoch) const;
};

struct TrainConfig {
    std::size_t batch_size = 512;  // 0 -> full batch
    std::vector<TrainPhase> phases{TrainPhase{}};
    double pseudocount = kDefaultPseudocount;
    std::uint64_t seed = 0;
    Execution exec = Execution::Deterministic;
    bool update_inputs = true;
    bool shuffle = true;
    /// Ends a phase early once the relative train-LL gain of an epoch drops
    /// below `convergence_tolerance`.
    bool stop_on_convergence = false;
    double convergence_tolerance = 1e-5;
    bool log_train_ll = true;

    void validate() const;

    static TrainConfig hmm_finetune();     // alpha 0.1 for 20 epochs, then 0.01 for 5
    static TrainConfig lower_bound();      // alpha 0.1 -> 0.01
    static TrainConfig latent_finetune();  // alpha 0.1 -> 0.001
    static TrainConfig hclt_finetune();    // 0.1 -> 0.01 then 0.01 -> 0.001, 100 epochs each
};

struct EpochRecord {
    std::size_t epoch = 0;  // global, 0-based
    std::size_t phase = 0;
    double train_ll = std::numeric_limits<double>::quiet_NaN();  // mean per sample
    double valid_ll = std::numeric_limits<double>::quiet_NaN();
    double alpha = 0.0;
};

struct TrainResult {
    Circuit circuit;
    std::vector<EpochRecord> history;
    std::uint64_t train_unit_evals = 0;  // forward/backward work of parameter updates only
    std::size_t skipped = 0;
};

/// Mean log-likelihood per row.
double mean_log_likelihood(const Circuit& c, const DataMatrix& data, Execution exec = Execution::Deterministic,
                           const LeafOverrides* overrides = nullptr);

/// Per-unit update switches; empty means every parameterized unit.
using UpdateMask = std::vector<char>;

UpdateMask sums_only_mask(const Circuit& c);

/// theta_new = (flow + k) / (total + k K); theta = alpha theta_new + (1 - alpha) theta,
/// renormalized. Units with zero total flow and k = 0 keep their parameters.
std::vector<double> em_update(const Circuit& c, const FlowAccumulator& acc, double alpha, double pseudocount,
                              const UpdateMask& mask = {});

struct EmStepResult {
    Circuit circuit;
    double log_likelihood = 0.0;  // of the batch under the old parameters
    std::size_t skipped = 0;
    std::uint64_t unit_evals = 0;
};

EmStepResult em_step(const Circuit& c, const DataMatrix& data, std::span<const std::size_t> rows, double alpha,
                     double pseudocount = kDefaultPseudocount, Execution exec = Execution::Deterministic,
                     const UpdateMask& mask = {}, const LeafOverrides* overrides = nullptr);

/// Mini-batch EM over `train`. Validation data, when given, is only logged.
TrainResult train_em(const Circuit& c, const DataMatrix& train, const DataMatrix* valid, const TrainConfig& cfg,
                     const UpdateMask& mask = {}, const LeafOverrides* train_overrides = nullptr,
                     const LeafOverrides* valid_overrides = nullptr);

/// Maximum-likelihood parameters from complete evidence by tracing the unique
/// active path of every sample. Rows with zero probability are ignored.
Circuit closed_form_mle(const Circuit& c_aug, const DataMatrix& data, double pseudocount = kDefaultPseudocount,
                        std::size_t* skipped = nullptr);

/// Copies `x` into a matrix over every variable of `c_aug` and writes z_i
/// into the column of records[i].z_var.
DataMatrix augment(const Circuit& c_aug, const std::vector<MaterializationRecord>& records, const DataMatrix& x,
                   const LVAssignment& z);

/// The pieces of p(z) prod_i p(x_i | z_i).
struct Factorization {
    ExtractedCircuit latent;                          // p(Z): each records[i].units[j] replaced by its indicator
    std::vector<std::vector<ExtractedCircuit>> parts;  // [i][j]: sub-circuit rooted at records[i].units[j]
};

Factorization factorize(const Circuit& c_aug, const std::vector<MaterializationRecord>& records);

/// Per-sample log p(z) + sum_i log p(x_i | z_i) from the factorization.
std::vector<double> decomposed_log_likelihoods(const Circuit& c_aug, const std::vector<MaterializationRecord>& records,
                                               const DataMatrix& d_aug, Execution exec = Execution::Deterministic);

struct FactoredResult {
    Circuit circuit;
    std::uint64_t train_unit_evals = 0;
    std::vector<std::string> warnings;
    std::vector<EpochRecord> latent_history;
};

/// Trains every p(X_i | Z_i = j) on the rows with z_i = j and p(Z) on all
/// z values, then writes the parameters back into c_aug.
FactoredResult factored_lvd_train(const Circuit& c_aug, const std::vector<MaterializationRecord>& records,
                                  const DataMatrix& d_aug, const TrainConfig& cfg);

/// log p(x_i | Z_i = j) for every row and every (i, j), slot-major per row in
/// record order.
struct LatentCache {
    std::size_t rows = 0;
    std::size_t slots = 0;
    std::vector<double> values;
    std::uint64_t unit_evals = 0;
};

LatentCache build_latent_cache(const Circuit& c_aug, const std::vector<MaterializationRecord>& records,
                               const DataMatrix& x, Execution exec = Execution::Deterministic);

/// Overrides that make the p(Z) circuit of `f` evaluate to p(x).
LeafOverrides latent_overrides(const Factorization& f, const std::vector<MaterializationRecord>& records,
                               const LatentCache& cache);

/// EM on the p(Z) parameters only, with the sub-circuits folded into a cache
/// computed once. `x` may have num_observed or num_vars columns.
TrainResult latent_finetune(const Circuit& c_aug, const std::vector<MaterializationRecord>& records,
                            const DataMatrix& x, const DataMatrix* valid, const TrainConfig& cfg,
                            const LatentCache* cache = nullptr, const LatentCache* valid_cache = nullptr);

/// Mini-batch EM on the marginal likelihood of x.
TrainResult full_finetune(const Circuit& c, const DataMatrix& x, const DataMatrix* valid, const TrainConfig& cfg);

/// `x` widened with marginalized columns up to c.num_vars().
DataMatrix observed_evidence(const Circuit& c, const DataMatrix& x);

} // namespace pclvd
