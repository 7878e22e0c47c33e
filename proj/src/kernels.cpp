#include "pclvd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <omp.h>

#include "pclvd/error.hpp"

namespace pclvd {

FlowAccumulator::FlowAccumulator(const Circuit& c)
    : param_flow(c.num_parameters(), 0.0), unit_flow(c.size(), 0.0) {}

void FlowAccumulator::merge(const FlowAccumulator& other) {
    if (param_flow.size() != other.param_flow.size()) throw ShapeError("merging accumulators of different circuits");
    for (std::size_t i = 0; i < param_flow.size(); ++i) param_flow[i] += other.param_flow[i];
    for (std::size_t i = 0; i < unit_flow.size(); ++i) unit_flow[i] += other.unit_flow[i];
    log_likelihood += other.log_likelihood;
    samples += other.samples;
    skipped += other.skipped;
    unit_evals += other.unit_evals;
}

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

void add_sample_flows(const Circuit& c, std::span<const std::int32_t> evidence, std::span<const double> values,
                      std::span<double> flow, const LeafOverrides* overrides, FlowAccumulator& acc) {
    const auto& units = c.units();
    const UnitId root = c.root();
    std::fill(flow.begin(), flow.begin() + root + 1, 0.0);
    flow[root] = 1.0;
    for (std::size_t id = root + 1; id-- > 0;) {
        const double f = flow[id];
        if (f == 0.0) continue;
        acc.unit_flow[id] += f;
        if (overrides && overrides->slot[id] >= 0) continue;
        const Unit& u = units[id];
        const std::size_t off = c.param_offset(static_cast<UnitId>(id));
        switch (u.kind) {
        case UnitKind::Product:
            for (UnitId ch : u.children) flow[ch] += f;
            break;
        case UnitKind::Sum: {
            const double v = values[id];
            for (std::size_t k = 0; k < u.children.size(); ++k) {
                const double lv = u.log_weights[k] + values[u.children[k]];
                if (lv == kLogZero) continue;
                const double e = f * std::exp(lv - v);
                acc.param_flow[off + k] += e;
                flow[u.children[k]] += e;
            }
            break;
        }
        case UnitKind::Input: {
            if (u.indicator) break;
            const std::int32_t x = evidence[u.var];
            if (x == kMarginalized) {
                for (std::size_t k = 0; k < u.log_dist.size(); ++k) acc.param_flow[off + k] += f * std::exp(u.log_dist[k]);
            } else {
                acc.param_flow[off + static_cast<std::size_t>(x)] += f;
            }
            break;
        }
        }
    }
}

namespace serial {

std::vector<double> log_likelihoods(const Circuit& c, const DataMatrix& data, std::span<const std::size_t> rows,
                                    const LeafOverrides* overrides, KernelStats* stats) {
    std::vector<double> values(c.size());
    std::vector<double> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        forward(c, data.row(rows[i]), values, overrides, rows[i]);
        out[i] = values[c.root()];
    }
    if (stats) stats->unit_evals += static_cast<std::uint64_t>(rows.size()) * c.size();
    return out;
}

FlowAccumulator accumulate_flows(const Circuit& c, const DataMatrix& data, std::span<const std::size_t> rows,
                                 const LeafOverrides* overrides) {
    FlowAccumulator acc(c);
    std::vector<double> values(c.size());
    std::vector<double> flow(c.size());
    for (std::size_t r : rows) {
        forward(c, data.row(r), values, overrides, r);
        acc.unit_evals += c.size();
        const double ll = values[c.root()];
        if (ll == kLogZero || std::isnan(ll)) {
            ++acc.skipped;
            continue;
        }
        acc.log_likelihood += ll;
        ++acc.samples;
        add_sample_flows(c, data.row(r), values, flow, overrides, acc);
    }
    return acc;
}

} // namespace serial

namespace parallel {

std::vector<double> log_likelihoods(const Circuit& c, const DataMatrix& data, std::span<const std::size_t> rows,
                                    const LeafOverrides* overrides, KernelStats* stats) {
    std::vector<double> out(rows.size());
    const auto n = static_cast<std::ptrdiff_t>(rows.size());
    std::exception_ptr error;
#pragma omp parallel
    {
        std::vector<double> values(c.size());
#pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            try {
                const std::size_t r = rows[static_cast<std::size_t>(i)];
                forward(c, data.row(r), values, overrides, r);
                out[static_cast<std::size_t>(i)] = values[c.root()];
            } catch (...) {
#pragma omp critical(pclvd_kernel_error)
                if (!error) error = std::current_exception();
            }
        }
    }
    if (error) std::rethrow_exception(error);
    if (stats) stats->unit_evals += static_cast<std::uint64_t>(rows.size()) * c.size();
    return out;
}

FlowAccumulator accumulate_flows(const Circuit& c, const DataMatrix& data, std::span<const std::size_t> rows,
                                 bool deterministic, const LeafOverrides* overrides) {
    std::exception_ptr error;
    if (deterministic) {
        const std::size_t nblocks = (rows.size() + kDeterministicBlock - 1) / kDeterministicBlock;
        std::vector<FlowAccumulator> blocks(nblocks);
#pragma omp parallel for schedule(dynamic, 1)
        for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(nblocks); ++b) {
            try {
                const std::size_t lo = static_cast<std::size_t>(b) * kDeterministicBlock;
                const std::size_t hi = std::min(rows.size(), lo + kDeterministicBlock);
                blocks[static_cast<std::size_t>(b)] = serial::accumulate_flows(c, data, rows.subspan(lo, hi - lo), overrides);
            } catch (...) {
#pragma omp critical(pclvd_kernel_error)
                if (!error) error = std::current_exception();
            }
        }
        if (error) std::rethrow_exception(error);
        FlowAccumulator acc(c);
        for (const auto& blk : blocks) acc.merge(blk);
        return acc;
    }

    FlowAccumulator acc(c);
    const auto n = static_cast<std::ptrdiff_t>(rows.size());
#pragma omp parallel
    {
        FlowAccumulator local(c);
        std::vector<double> values(c.size());
        std::vector<double> flow(c.size());
#pragma omp for schedule(dynamic, 64)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            try {
                const std::size_t r = rows[static_cast<std::size_t>(i)];
                forward(c, data.row(r), values, overrides, r);
                local.unit_evals += c.size();
                const double ll = values[c.root()];
                if (ll == kLogZero || std::isnan(ll)) {
                    ++local.skipped;
                    continue;
                }
                local.log_likelihood += ll;
                ++local.samples;
                add_sample_flows(c, data.row(r), values, flow, overrides, local);
            } catch (...) {
#pragma omp critical(pclvd_kernel_error)
                if (!error) error = std::current_exception();
            }
        }
#pragma omp critical(pclvd_flow_merge)
        acc.merge(local);
    }
    if (error) std::rethrow_exception(error);
    return acc;
}

} // namespace parallel

std::vector<double> log_likelihoods(const Circuit& c, const DataMatrix& data, std::span<const std::size_t> rows,
                                    Execution exec, const LeafOverrides* overrides, KernelStats* stats) {
    if (data.cols != c.num_vars()) throw ShapeError("data columns do not match circuit variables");
    if (exec == Execution::Serial) return serial::log_likelihoods(c, data, rows, overrides, stats);
    return parallel::log_likelihoods(c, data, rows, overrides, stats);
}

std::vector<double> log_likelihoods(const Circuit& c, const DataMatrix& data, Execution exec) {
    const auto rows = all_rows(data.rows);
    return log_likelihoods(c, data, rows, exec);
}

double total_log_likelihood(const Circuit& c, const DataMatrix& data, Execution exec) {
    const auto lls = log_likelihoods(c, data, exec);
    return std::accumulate(lls.begin(), lls.end(), 0.0);
}

FlowAccumulator accumulate_flows(const Circuit& c, const DataMatrix& data, std::span<const std::size_t> rows,
                                 Execution exec, const LeafOverrides* overrides) {
    if (data.cols != c.num_vars()) throw ShapeError("data columns do not match circuit variables");
    if (exec == Execution::Serial) return serial::accumulate_flows(c, data, rows, overrides);
    return parallel::accumulate_flows(c, data, rows, exec == Execution::Deterministic, overrides);
}

} // namespace pclvd
