#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pclvd/circuit.hpp"
#include "pclvd/inference.hpp"

namespace pclvd {

/// How batch kernels run.
///  Serial        - reference loops in pclvd::serial.
///  Parallel      - OpenMP over samples; accumulators merged per thread, so
///                  floating-point sums depend on the thread count.
///  Deterministic - OpenMP over fixed-size sample blocks merged in block
///                  order; bit-identical for any thread count.
enum class Execution { Serial, Parallel, Deterministic };

/// Samples per block in Deterministic mode.
inline constexpr std::size_t kDeterministicBlock = 256;

/// Expected sufficient statistics of one EM pass. `param_flow` follows the
/// circuit's flat parameter layout: sum edges get edge flows and input units
/// get expected category counts.
struct FlowAccumulator {
    std::vector<double> param_flow;
    std::vector<double> unit_flow;
    double log_likelihood = 0.0;
    std::size_t samples = 0;
    std::size_t skipped = 0;
    std::uint64_t unit_evals = 0;

    FlowAccumulator() = default;
    explicit FlowAccumulator(const Circuit& c);
    void merge(const FlowAccumulator& other);
};

/// Work counters shared by the batch kernels.
struct KernelStats {
    std::uint64_t unit_evals = 0;
};

namespace serial {

std::vector<double> log_likelihoods(const Circuit& c, const DataMatrix& data, std::span<const std::size_t> rows,
                                    const LeafOverrides* overrides = nullptr, KernelStats* stats = nullptr);

FlowAccumulator accumulate_flows(const Circuit& c, const DataMatrix& data, std::span<const std::size_t> rows,
                                 const LeafOverrides* overrides = nullptr);

} // namespace serial

namespace parallel {

std::vector<double> log_likelihoods(const Circuit& c, const DataMatrix& data, std::span<const std::size_t> rows,
                                    const LeafOverrides* overrides = nullptr, KernelStats* stats = nullptr);

FlowAccumulator accumulate_flows(const Circuit& c, const DataMatrix& data, std::span<const std::size_t> rows,
                                 bool deterministic, const LeafOverrides* overrides = nullptr);

} // namespace parallel

/// Per-row log-likelihoods (rows in the order given). Marginalized evidence
/// is summed out, so the circuit must be smooth and decomposable when any is
/// present.
std::vector<double> log_likelihoods(const Circuit& c, const DataMatrix& data, std::span<const std::size_t> rows,
                                    Execution exec, const LeafOverrides* overrides = nullptr,
                                    KernelStats* stats = nullptr);
std::vector<double> log_likelihoods(const Circuit& c, const DataMatrix& data, Execution exec = Execution::Deterministic);

/// Sum of per-row log-likelihoods, reduced in row order.
double total_log_likelihood(const Circuit& c, const DataMatrix& data, Execution exec = Execution::Deterministic);

FlowAccumulator accumulate_flows(const Circuit& c, const DataMatrix& data, std::span<const std::size_t> rows,
                                 Execution exec, const LeafOverrides* overrides = nullptr);

std::vector<std::size_t> all_rows(std::size_t n);

/// Adds the flows of one sample whose forward values are already in
/// `values`; `flow` is scratch of size c.size().
void add_sample_flows(const Circuit& c, std::span<const std::int32_t> evidence, std::span<const double> values,
                      std::span<double> flow, const LeafOverrides* overrides, FlowAccumulator& acc);

} // namespace pclvd
