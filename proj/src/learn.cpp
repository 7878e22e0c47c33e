#include "pclvd/learn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pclvd/error.hpp"
#include "pclvd/inference.hpp"

namespace pclvd {

double TrainPhase::alpha_at(std::size_t epoch) const {
    if (epochs <= 1) return alpha_start;
    const double t = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
    return alpha_start + (alpha_end - alpha_start) * t;
}

void TrainConfig::validate() const {
    if (pseudocount < 0.0 || !std::isfinite(pseudocount)) throw ConfigError("pseudocount must be finite and >= 0");
    if (phases.empty()) throw ConfigError("training needs at least one phase");
    for (const auto& p : phases) {
        for (double a : {p.alpha_start, p.alpha_end}) {
            if (!(a > 0.0 && a <= 1.0)) throw ConfigError("learning rate must lie in (0, 1]");
        }
    }
}

TrainConfig TrainConfig::hmm_finetune() {
    TrainConfig cfg;
    cfg.phases = {{20, 0.1, 0.1}, {5, 0.01, 0.01}};
    return cfg;
}

TrainConfig TrainConfig::lower_bound() {
    TrainConfig cfg;
    cfg.phases = {{20, 0.1, 0.01}};
    return cfg;
}

TrainConfig TrainConfig::latent_finetune() {
    TrainConfig cfg;
    cfg.phases = {{20, 0.1, 0.001}};
    return cfg;
}

TrainConfig TrainConfig::hclt_finetune() {
    TrainConfig cfg;
    cfg.phases = {{100, 0.1, 0.01}, {100, 0.01, 0.001}};
    return cfg;
}

double mean_log_likelihood(const Circuit& c, const DataMatrix& data, Execution exec, const LeafOverrides* overrides) {
    if (data.rows == 0) throw DataError("cannot average over an empty dataset");
    const auto rows = all_rows(data.rows);
    const auto lls = log_likelihoods(c, data, rows, exec, overrides);
    return std::accumulate(lls.begin(), lls.end(), 0.0) / static_cast<double>(data.rows);
}

UpdateMask sums_only_mask(const Circuit& c) {
    UpdateMask mask(c.size(), 0);
    for (UnitId id = 0; id < c.size(); ++id) mask[id] = c.unit(id).kind == UnitKind::Sum;
    return mask;
}

std::vector<double> em_update(const Circuit& c, const FlowAccumulator& acc, double alpha, double pseudocount,
                              const UpdateMask& mask) {
    if (alpha < 0.0 || alpha > 1.0) throw PreconditionError("learning rate must lie in [0, 1]");
    if (acc.param_flow.size() != c.num_parameters()) throw ShapeError("flows do not match the circuit");
    if (!mask.empty() && mask.size() != c.size()) throw ShapeError("update mask must have one entry per unit");
    std::vector<double> params = c.parameters();
    if (alpha == 0.0) return params;
    std::vector<double> fresh;
    for (UnitId id = 0; id < c.size(); ++id) {
        const std::size_t k = c.param_count(id);
        if (k == 0 || (!mask.empty() && !mask[id])) continue;
        const std::size_t off = c.param_offset(id);
        double total = 0.0;
        for (std::size_t q = 0; q < k; ++q) total += acc.param_flow[off + q];
        if (total == 0.0 && pseudocount == 0.0) continue;
        const double denom = total + pseudocount * static_cast<double>(k);
        fresh.assign(k, 0.0);
        for (std::size_t q = 0; q < k; ++q) fresh[q] = (acc.param_flow[off + q] + pseudocount) / denom;
        if (alpha != 1.0) {
            double norm = 0.0;
            for (std::size_t q = 0; q < k; ++q) {
                fresh[q] = alpha * fresh[q] + (1.0 - alpha) * std::exp(params[off + q]);
                norm += fresh[q];
            }
            for (double& w : fresh) w /= norm;
        }
        for (std::size_t q = 0; q < k; ++q) params[off + q] = std::log(fresh[q]);
    }
    return params;
}

EmStepResult em_step(const Circuit& c, const DataMatrix& data, std::span<const std::size_t> rows, double alpha,
                     double pseudocount, Execution exec, const UpdateMask& mask, const LeafOverrides* overrides) {
    const auto acc = accumulate_flows(c, data, rows, exec, overrides);
    const auto params = em_update(c, acc, alpha, pseudocount, mask);
    return {c.with_parameters(params), acc.log_likelihood, acc.skipped, acc.unit_evals};
}

TrainResult train_em(const Circuit& c, const DataMatrix& train, const DataMatrix* valid, const TrainConfig& cfg,
                     const UpdateMask& mask, const LeafOverrides* train_overrides,
                     const LeafOverrides* valid_overrides) {
    cfg.validate();
    if (train.rows == 0) throw DataError("training set is empty");
    TrainResult res{c, {}, 0, 0};
    std::mt19937_64 rng(cfg.seed);
    auto rows = all_rows(train.rows);
    const std::size_t bs = cfg.batch_size == 0 ? train.rows : std::min(cfg.batch_size, train.rows);
    const std::span<const std::size_t> all(rows);
    std::size_t epoch = 0;
    for (std::size_t p = 0; p < cfg.phases.size(); ++p) {
        const auto& phase = cfg.phases[p];
        double previous = std::numeric_limits<double>::quiet_NaN();
        for (std::size_t e = 0; e < phase.epochs; ++e, ++epoch) {
            const double alpha = phase.alpha_at(e);
            if (cfg.shuffle) std::shuffle(rows.begin(), rows.end(), rng);
            for (std::size_t lo = 0; lo < rows.size(); lo += bs) {
                const std::size_t len = std::min(bs, rows.size() - lo);
                auto step = em_step(res.circuit, train, all.subspan(lo, len), alpha, cfg.pseudocount, cfg.exec, mask,
                                    train_overrides);
                res.circuit = std::move(step.circuit);
                res.train_unit_evals += step.unit_evals;
                res.skipped += step.skipped;
            }
            EpochRecord rec;
            rec.epoch = epoch;
            rec.phase = p;
            rec.alpha = alpha;
            if (cfg.log_train_ll) rec.train_ll = mean_log_likelihood(res.circuit, train, cfg.exec, train_overrides);
            if (valid) rec.valid_ll = mean_log_likelihood(res.circuit, *valid, cfg.exec, valid_overrides);
            res.history.push_back(rec);
            if (cfg.stop_on_convergence && cfg.log_train_ll && std::isfinite(previous)) {
                const double gain = (rec.train_ll - previous) / std::max(std::abs(previous), 1e-300);
                if (gain < cfg.convergence_tolerance) {
                    ++epoch;
                    break;
                }
            }
            previous = rec.train_ll;
        }
    }
    return res;
}

Circuit closed_form_mle(const Circuit& c_aug, const DataMatrix& data, double pseudocount, std::size_t* skipped) {
    if (pseudocount < 0.0) throw PreconditionError("pseudocount must be >= 0");
    if (data.cols != c_aug.num_vars()) throw ShapeError("data columns do not match circuit variables");
    const auto root_vars = c_aug.root_scope().indices();
    FlowAccumulator counts(c_aug);
    std::size_t zero_rows = 0;
    std::exception_ptr error;
    const auto n = static_cast<std::ptrdiff_t>(data.rows);
#pragma omp parallel
    {
        FlowAccumulator local(c_aug);
        std::size_t local_zero = 0;
        std::vector<double> values(c_aug.size());
        std::vector<UnitId> stack;
#pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            try {
                const auto ev = data.row(static_cast<std::size_t>(i));
                for (VarId v : root_vars) {
                    if (ev[v] == kMarginalized) {
                        throw PreconditionError("closed-form MLE needs complete evidence; row " + std::to_string(i) +
                                                " leaves variable " + std::to_string(v) + " unassigned");
                    }
                }
                forward(c_aug, ev, values);
                if (values[c_aug.root()] == kLogZero) {
                    ++local_zero;
                    continue;
                }
                stack.assign(1, c_aug.root());
                while (!stack.empty()) {
                    const UnitId id = stack.back();
                    stack.pop_back();
                    const Unit& u = c_aug.unit(id);
                    const std::size_t off = c_aug.param_offset(id);
                    if (u.kind == UnitKind::Product) {
                        stack.insert(stack.end(), u.children.begin(), u.children.end());
                    } else if (u.kind == UnitKind::Sum) {
                        std::size_t active = u.children.size();
                        for (std::size_t k = 0; k < u.children.size(); ++k) {
                            if (values[u.children[k]] == kLogZero) continue;
                            if (active != u.children.size()) {
                                throw StructuralError("sum unit " + std::to_string(id) +
                                                      " is not deterministic under complete evidence");
                            }
                            active = k;
                        }
                        local.param_flow[off + active] += 1.0;
                        stack.push_back(u.children[active]);
                    } else if (!u.indicator) {
                        local.param_flow[off + static_cast<std::size_t>(ev[u.var])] += 1.0;
                    }
                }
            } catch (...) {
#pragma omp critical(pclvd_mle_error)
                if (!error) error = std::current_exception();
            }
        }
        // Counts are integers, so the merge order does not matter.
#pragma omp critical(pclvd_mle_merge)
        {
            counts.merge(local);
            zero_rows += local_zero;
        }
    }
    if (error) std::rethrow_exception(error);
    if (skipped) *skipped = zero_rows;
    return c_aug.with_parameters(em_update(c_aug, counts, 1.0, pseudocount));
}

DataMatrix observed_evidence(const Circuit& c, const DataMatrix& x) {
    if (x.cols == c.num_vars()) return x;
    if (x.cols == c.num_observed()) return x.widened(c.num_vars());
    throw ShapeError("data has " + std::to_string(x.cols) + " columns; circuit has " +
                     std::to_string(c.num_observed()) + " observed and " + std::to_string(c.num_vars()) + " total");
}

DataMatrix augment(const Circuit& c_aug, const std::vector<MaterializationRecord>& records, const DataMatrix& x,
                   const LVAssignment& z) {
    if (z.rows != x.rows) throw ShapeError("LV assignment and data have different row counts");
    if (z.cols() != records.size()) throw ShapeError("LV assignment needs one column per materialized LV");
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (z.cardinalities[i] != records[i].cardinality()) {
            throw ShapeError("LV " + std::to_string(i) + " has " + std::to_string(z.cardinalities[i]) +
                             " categories in the assignment but " + std::to_string(records[i].cardinality()) +
                             " in the circuit");
        }
    }
    z.validate();
    DataMatrix out = observed_evidence(c_aug, x);
    for (std::size_t l = 0; l < out.rows; ++l) {
        for (std::size_t i = 0; i < records.size(); ++i) out.at(l, records[i].z_var) = static_cast<std::int32_t>(z.at(l, i));
    }
    return out;
}

Factorization factorize(const Circuit& c_aug, const std::vector<MaterializationRecord>& records) {
    std::unordered_map<UnitId, UnitId> substitute;
    std::vector<std::vector<ExtractedCircuit>> parts;
    for (const auto& rec : records) {
        auto& row = parts.emplace_back();
        for (std::size_t j = 0; j < rec.units.size(); ++j) {
            substitute[rec.units[j]] = rec.indicators[j];
            row.push_back(extract_subcircuit(c_aug, rec.units[j]));
        }
    }
    return {extract_subcircuit(c_aug, c_aug.root(), substitute), std::move(parts)};
}

namespace {

std::vector<std::vector<std::size_t>> rows_by_category(const DataMatrix& d_aug, const MaterializationRecord& rec) {
    std::vector<std::vector<std::size_t>> rows(rec.cardinality());
    for (std::size_t l = 0; l < d_aug.rows; ++l) {
        const std::int32_t z = d_aug.at(l, rec.z_var);
        if (z < 0 || static_cast<std::uint32_t>(z) >= rec.cardinality()) {
            throw DataError("row " + std::to_string(l) + " has no valid value for LV variable " +
                            std::to_string(rec.z_var));
        }
        rows[static_cast<std::size_t>(z)].push_back(l);
    }
    return rows;
}

} // namespace

std::vector<double> decomposed_log_likelihoods(const Circuit& c_aug, const std::vector<MaterializationRecord>& records,
                                               const DataMatrix& d_aug, Execution exec) {
    const auto f = factorize(c_aug, records);
    auto out = log_likelihoods(f.latent.circuit, d_aug, exec);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto groups = rows_by_category(d_aug, records[i]);
        for (std::size_t j = 0; j < groups.size(); ++j) {
            if (groups[j].empty()) continue;
            const auto lls = log_likelihoods(f.parts[i][j].circuit, d_aug, groups[j], exec);
            for (std::size_t q = 0; q < lls.size(); ++q) out[groups[j][q]] += lls[q];
        }
    }
    return out;
}

FactoredResult factored_lvd_train(const Circuit& c_aug, const std::vector<MaterializationRecord>& records,
                                  const DataMatrix& d_aug, const TrainConfig& cfg) {
    cfg.validate();
    if (d_aug.cols != c_aug.num_vars()) throw ShapeError("augmented data must cover every circuit variable");
    const auto f = factorize(c_aug, records);
    auto params = c_aug.parameters();
    FactoredResult res{c_aug, 0, {}, {}};

    TrainConfig sub = cfg;
    sub.log_train_ll = false;
    sub.stop_on_convergence = false;
    std::uint64_t slot = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto groups = rows_by_category(d_aug, records[i]);
        for (std::size_t j = 0; j < groups.size(); ++j, ++slot) {
            if (groups[j].empty()) {
                res.warnings.push_back("LV " + std::to_string(i) + " category " + std::to_string(j) +
                                       " has no samples; its sub-circuit keeps its initial parameters");
                continue;
            }
            const auto& part = f.parts[i][j];
            if (part.circuit.num_parameters() == 0) continue;
            sub.seed = cfg.seed + 1 + slot;
            const auto subset = d_aug.select_rows(groups[j]);
            const auto trained = train_em(part.circuit, subset, nullptr, sub);
            res.train_unit_evals += trained.train_unit_evals;
            write_back_parameters(c_aug, part, trained.circuit, params);
        }
    }
    if (f.latent.circuit.num_parameters() > 0) {
        const auto trained = train_em(f.latent.circuit, d_aug, nullptr, cfg);
        res.train_unit_evals += trained.train_unit_evals;
        res.latent_history = trained.history;
        write_back_parameters(c_aug, f.latent, trained.circuit, params);
    }
    res.circuit = c_aug.with_parameters(params);
    return res;
}

namespace {

DataMatrix observed_only(const Circuit& c_aug, const std::vector<MaterializationRecord>& records, const DataMatrix& x) {
    DataMatrix ev = observed_evidence(c_aug, x);
    for (std::size_t l = 0; l < ev.rows; ++l) {
        for (const auto& rec : records) ev.at(l, rec.z_var) = kMarginalized;
    }
    return ev;
}

std::size_t total_slots(const std::vector<MaterializationRecord>& records) {
    std::size_t s = 0;
    for (const auto& rec : records) s += rec.cardinality();
    return s;
}

} // namespace

LatentCache build_latent_cache(const Circuit& c_aug, const std::vector<MaterializationRecord>& records,
                               const DataMatrix& x, Execution exec) {
    const auto f = factorize(c_aug, records);
    const auto ev = observed_only(c_aug, records, x);
    LatentCache cache;
    cache.rows = ev.rows;
    cache.slots = total_slots(records);
    cache.values.assign(cache.rows * cache.slots, 0.0);
    const auto rows = all_rows(ev.rows);
    KernelStats stats;
    std::size_t s = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        for (std::size_t j = 0; j < records[i].cardinality(); ++j, ++s) {
            const auto lls = log_likelihoods(f.parts[i][j].circuit, ev, rows, exec, nullptr, &stats);
            for (std::size_t l = 0; l < cache.rows; ++l) cache.values[l * cache.slots + s] = lls[l];
        }
    }
    cache.unit_evals = stats.unit_evals;
    return cache;
}

LeafOverrides latent_overrides(const Factorization& f, const std::vector<MaterializationRecord>& records,
                               const LatentCache& cache) {
    if (cache.slots != total_slots(records)) throw ShapeError("latent cache does not match the materialized LVs");
    std::unordered_map<UnitId, UnitId> local;
    for (UnitId id = 0; id < f.latent.source_of.size(); ++id) local[f.latent.source_of[id]] = id;
    LeafOverrides ov;
    ov.slot.assign(f.latent.circuit.size(), -1);
    ov.num_slots = cache.slots;
    ov.values = cache.values;
    std::int32_t s = 0;
    for (const auto& rec : records) {
        for (UnitId ind : rec.indicators) {
            auto it = local.find(ind);
            if (it != local.end()) ov.slot[it->second] = s;
            ++s;
        }
    }
    return ov;
}

TrainResult latent_finetune(const Circuit& c_aug, const std::vector<MaterializationRecord>& records,
                            const DataMatrix& x, const DataMatrix* valid, const TrainConfig& cfg,
                            const LatentCache* cache, const LatentCache* valid_cache) {
    cfg.validate();
    const auto f = factorize(c_aug, records);
    const auto ev = observed_only(c_aug, records, x);
    std::uint64_t cache_evals = 0;

    LatentCache own;
    if (!cache) {
        own = build_latent_cache(c_aug, records, x, cfg.exec);
        cache_evals += own.unit_evals;
        cache = &own;
    }
    if (cache->rows != ev.rows) {
        throw ShapeError("latent cache has " + std::to_string(cache->rows) + " rows but the data has " +
                         std::to_string(ev.rows));
    }
    const auto ov = latent_overrides(f, records, *cache);

    DataMatrix vev;
    LatentCache vown;
    LeafOverrides vov;
    if (valid) {
        vev = observed_only(c_aug, records, *valid);
        if (!valid_cache) {
            vown = build_latent_cache(c_aug, records, *valid, cfg.exec);
            valid_cache = &vown;
        }
        if (valid_cache->rows != vev.rows) throw ShapeError("validation cache does not match the validation data");
        vov = latent_overrides(f, records, *valid_cache);
    }

    auto trained = train_em(f.latent.circuit, ev, valid ? &vev : nullptr, cfg, sums_only_mask(f.latent.circuit), &ov,
                            valid ? &vov : nullptr);
    auto params = c_aug.parameters();
    write_back_parameters(c_aug, f.latent, trained.circuit, params);
    return {c_aug.with_parameters(params), std::move(trained.history), trained.train_unit_evals + cache_evals,
            trained.skipped};
}

TrainResult full_finetune(const Circuit& c, const DataMatrix& x, const DataMatrix* valid, const TrainConfig& cfg) {
    const auto ev = observed_evidence(c, x);
    DataMatrix vev;
    if (valid) vev = observed_evidence(c, *valid);
    const UpdateMask mask = cfg.update_inputs ? UpdateMask{} : sums_only_mask(c);
    return train_em(c, ev, valid ? &vev : nullptr, cfg, mask);
}

} // namespace pclvd
