#include "pclvd/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "toml.hpp"

#include "pclvd/error.hpp"
#include "pclvd/io.hpp"
#include "pclvd/serialize.hpp"

namespace pclvd {

namespace fs = std::filesystem;

namespace {

constexpr const char* kStageNames[kNumStages] = {"build",           "materialize", "induce", "train-lvd",
                                                 "finetune-latent", "finetune",    "eval"};

} // namespace

const char* stage_name(Stage s) noexcept { return kStageNames[static_cast<std::size_t>(s)]; }

Stage parse_stage(const std::string& name) {
    for (std::size_t i = 0; i < kNumStages; ++i) {
        if (name == kStageNames[i]) return static_cast<Stage>(i);
    }
    throw ConfigError("unknown stage '" + name + "'");
}

std::vector<Stage> all_stages() {
    std::vector<Stage> out;
    for (std::size_t i = 0; i < kNumStages; ++i) out.push_back(static_cast<Stage>(i));
    return out;
}

// ---------------------------------------------------------------------------
// Config

namespace {

void check_keys(const toml::table& t, const std::string& where, std::initializer_list<const char*> allowed) {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : t) {
        (void)v;
        if (!ok.count(std::string(k.str()))) throw ConfigError("unknown key '" + std::string(k.str()) + "' in [" + where + "]");
    }
}

template <class T>
T get_or(const toml::table& t, const char* key, T fallback, const std::string& where) {
    const auto* node = t.get(key);
    if (!node) return fallback;
    if constexpr (std::is_same_v<T, bool>) {
        if (auto v = node->value<bool>()) return *v;
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (auto v = node->value<std::string>()) return *v;
    } else if constexpr (std::is_floating_point_v<T>) {
        if (auto v = node->value<double>()) return static_cast<T>(*v);
    } else {
        if (auto v = node->value<std::int64_t>()) {
            if (*v < 0) throw ConfigError("[" + where + "] " + key + " must be non-negative");
            return static_cast<T>(*v);
        }
    }
    throw ConfigError("[" + where + "] " + key + " has the wrong type");
}

const toml::table* sub_table(const toml::table& t, const char* key) {
    const auto* node = t.get(key);
    if (!node) return nullptr;
    if (!node->is_table()) throw ConfigError(std::string("'") + key + "' must be a table");
    return node->as_table();
}

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    const fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

TrainConfig parse_train(const toml::table* t, TrainConfig cfg, const std::string& where) {
    if (!t) return cfg;
    check_keys(*t, where,
               {"batch_size", "pseudocount", "phases", "update_inputs", "shuffle", "stop_on_convergence",
                "convergence_tolerance"});
    cfg.batch_size = get_or<std::size_t>(*t, "batch_size", cfg.batch_size, where);
    cfg.pseudocount = get_or<double>(*t, "pseudocount", cfg.pseudocount, where);
    cfg.update_inputs = get_or<bool>(*t, "update_inputs", cfg.update_inputs, where);
    cfg.shuffle = get_or<bool>(*t, "shuffle", cfg.shuffle, where);
    cfg.stop_on_convergence = get_or<bool>(*t, "stop_on_convergence", cfg.stop_on_convergence, where);
    cfg.convergence_tolerance = get_or<double>(*t, "convergence_tolerance", cfg.convergence_tolerance, where);
    if (const auto* node = t->get("phases")) {
        const auto* arr = node->as_array();
        if (!arr) throw ConfigError("[" + where + "] phases must be an array of [epochs, alpha_start, alpha_end]");
        cfg.phases.clear();
        for (const auto& item : *arr) {
            const auto* p = item.as_array();
            if (!p || p->size() != 3) throw ConfigError("[" + where + "] each phase is [epochs, alpha_start, alpha_end]");
            const auto epochs = (*p)[0].value<std::int64_t>();
            const auto a0 = (*p)[1].value<double>();
            const auto a1 = (*p)[2].value<double>();
            if (!epochs || !a0 || !a1 || *epochs < 0) throw ConfigError("[" + where + "] malformed phase");
            cfg.phases.push_back({static_cast<std::size_t>(*epochs), *a0, *a1});
        }
    }
    return cfg;
}

} // namespace

void PipelineConfig::validate() const {
    if (data.source != "planted-hmm" && data.source != "planted-images" && data.source != "files") {
        throw ConfigError("data.source must be planted-hmm, planted-images or files");
    }
    if (data.source == "files" && (data.train.empty() || data.valid.empty() || data.test.empty())) {
        throw ConfigError("data.source = files needs train, valid and test paths");
    }
    if (model == ModelKind::Hmm && data.source == "planted-images") throw ConfigError("an HMM needs token data");
    if (model == ModelKind::Patch && data.source == "planted-hmm") throw ConfigError("a patch PC needs image data");
    const std::set<std::string> emb{"oracle", "suffix", "pixels", "files"};
    if (!emb.count(embeddings.source)) throw ConfigError("embeddings.source must be oracle, suffix, pixels or files");
    if (embeddings.source == "oracle" && data.source != "planted-hmm") {
        throw ConfigError("oracle embeddings need data.source = planted-hmm");
    }
    if (embeddings.source == "pixels" && model != ModelKind::Patch) throw ConfigError("pixel features need a patch PC");
    if (embeddings.source == "suffix" && model != ModelKind::Hmm) throw ConfigError("suffix embeddings need an HMM");
    if (embeddings.source == "files" && embeddings.dir.empty()) throw ConfigError("embeddings.dir is required");
    if (lower_bound != "auto" && lower_bound != "closed-form" && lower_bound != "factored") {
        throw ConfigError("train.lower_bound must be auto, closed-form or factored");
    }
    if (latent_tree != "chain" && latent_tree != "mst") throw ConfigError("patch.latent_tree must be chain or mst");
    if (patch_trees != "chain" && patch_trees != "chow-liu") throw ConfigError("patch.patch_trees must be chain or chow-liu");
    if (model == ModelKind::Hmm && hidden_states < 1) throw ConfigError("hmm.hidden_states must be >= 1");
    if (data.stride < 1) throw ConfigError("data.stride must be >= 1");
    if (kmeans.restarts < 1) throw ConfigError("kmeans.restarts must be >= 1");
    lower_bound_train.validate();
    latent_train.validate();
    finetune_train.validate();
}

PipelineConfig parse_pipeline_config(const std::string& text, const fs::path& base) {
    toml::table root;
    try {
        root = toml::parse(text);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << "config parse error: " << e.description() << " at line " << e.source().begin.line;
        throw ConfigError(os.str());
    }
    check_keys(root, "root", {"run", "data", "hmm", "patch", "embeddings", "kmeans", "train"});
    PipelineConfig cfg;

    if (const auto* run = sub_table(root, "run")) {
        check_keys(*run, "run", {"model", "output_dir", "seed", "deterministic", "baseline"});
        const auto model = get_or<std::string>(*run, "model", "hmm", "run");
        if (model == "hmm") {
            cfg.model = ModelKind::Hmm;
        } else if (model == "patch") {
            cfg.model = ModelKind::Patch;
        } else {
            throw ConfigError("run.model must be hmm or patch");
        }
        cfg.output_dir = resolve(base, get_or<std::string>(*run, "output_dir", "run", "run"));
        cfg.seed = get_or<std::uint64_t>(*run, "seed", 0, "run");
        cfg.deterministic = get_or<bool>(*run, "deterministic", true, "run");
        cfg.baseline = get_or<bool>(*run, "baseline", false, "run");
    } else {
        cfg.output_dir = resolve(base, "run");
    }
    if (cfg.model == ModelKind::Patch) {
        cfg.data.source = "planted-images";
        cfg.embeddings.source = "pixels";
    }

    if (const auto* d = sub_table(root, "data")) {
        check_keys(*d, "data",
                   {"source", "train", "valid", "test", "n_train", "n_valid", "n_test", "seq_len", "vocab_size", "coarse",
                    "fine", "coarse_advance", "fine_stay", "in_slice", "in_block", "height", "width", "patch_size",
                    "pixel_card", "clusters", "stay", "noise", "window", "stride"});
        auto& dc = cfg.data;
        dc.source = get_or<std::string>(*d, "source", dc.source, "data");
        dc.train = resolve(base, get_or<std::string>(*d, "train", "", "data"));
        dc.valid = resolve(base, get_or<std::string>(*d, "valid", "", "data"));
        dc.test = resolve(base, get_or<std::string>(*d, "test", "", "data"));
        dc.n_train = get_or<std::size_t>(*d, "n_train", dc.n_train, "data");
        dc.n_valid = get_or<std::size_t>(*d, "n_valid", dc.n_valid, "data");
        dc.n_test = get_or<std::size_t>(*d, "n_test", dc.n_test, "data");
        dc.window = get_or<std::size_t>(*d, "window", dc.window, "data");
        dc.stride = get_or<std::size_t>(*d, "stride", dc.stride, "data");
        auto& h = dc.planted_hmm;
        h.seq_len = get_or<std::size_t>(*d, "seq_len", h.seq_len, "data");
        h.vocab_size = get_or<std::size_t>(*d, "vocab_size", h.vocab_size, "data");
        h.coarse = get_or<std::size_t>(*d, "coarse", h.coarse, "data");
        h.fine = get_or<std::size_t>(*d, "fine", h.fine, "data");
        h.coarse_advance = get_or<double>(*d, "coarse_advance", h.coarse_advance, "data");
        h.fine_stay = get_or<double>(*d, "fine_stay", h.fine_stay, "data");
        h.in_slice = get_or<double>(*d, "in_slice", h.in_slice, "data");
        h.in_block = get_or<double>(*d, "in_block", h.in_block, "data");
        auto& im = dc.planted_images;
        im.height = get_or<std::size_t>(*d, "height", im.height, "data");
        im.width = get_or<std::size_t>(*d, "width", im.width, "data");
        im.patch_size = get_or<std::size_t>(*d, "patch_size", im.patch_size, "data");
        im.pixel_card = get_or<std::uint32_t>(*d, "pixel_card", im.pixel_card, "data");
        im.clusters = get_or<std::uint32_t>(*d, "clusters", im.clusters, "data");
        im.stay = get_or<double>(*d, "stay", im.stay, "data");
        im.noise = get_or<double>(*d, "noise", im.noise, "data");
    }

    if (const auto* h = sub_table(root, "hmm")) {
        check_keys(*h, "hmm", {"hidden_states"});
        cfg.hidden_states = get_or<std::size_t>(*h, "hidden_states", cfg.hidden_states, "hmm");
    }

    cfg.patch.height = cfg.data.planted_images.height;
    cfg.patch.width = cfg.data.planted_images.width;
    cfg.patch.patch_size = cfg.data.planted_images.patch_size;
    cfg.patch.pixel_card = cfg.data.planted_images.pixel_card;
    cfg.patch.categories = {cfg.data.planted_images.clusters};
    cfg.patch.sub_hidden_size = 4;
    if (const auto* p = sub_table(root, "patch")) {
        check_keys(*p, "patch",
                   {"height", "width", "patch_size", "categories", "sub_hidden_size", "latent_hidden_size", "latent_tree",
                    "patch_trees"});
        auto& ps = cfg.patch;
        ps.height = get_or<std::size_t>(*p, "height", ps.height, "patch");
        ps.width = get_or<std::size_t>(*p, "width", ps.width, "patch");
        ps.patch_size = get_or<std::size_t>(*p, "patch_size", ps.patch_size, "patch");
        ps.sub_hidden_size = get_or<std::size_t>(*p, "sub_hidden_size", ps.sub_hidden_size, "patch");
        ps.latent_hidden_size = get_or<std::size_t>(*p, "latent_hidden_size", ps.latent_hidden_size, "patch");
        if (const auto* node = p->get("categories")) {
            ps.categories.clear();
            if (auto v = node->value<std::int64_t>()) {
                ps.categories.push_back(static_cast<std::uint32_t>(*v));
            } else if (const auto* arr = node->as_array()) {
                for (const auto& item : *arr) {
                    const auto v2 = item.value<std::int64_t>();
                    if (!v2 || *v2 < 1) throw ConfigError("[patch] categories must be positive integers");
                    ps.categories.push_back(static_cast<std::uint32_t>(*v2));
                }
            } else {
                throw ConfigError("[patch] categories must be an integer or an array");
            }
        }
        cfg.latent_tree = get_or<std::string>(*p, "latent_tree", cfg.latent_tree, "patch");
        cfg.patch_trees = get_or<std::string>(*p, "patch_trees", cfg.patch_trees, "patch");
    }

    if (const auto* e = sub_table(root, "embeddings")) {
        check_keys(*e, "embeddings", {"source", "dir", "dims", "window", "coarse_scale", "fine_scale", "noise"});
        auto& ec = cfg.embeddings;
        ec.source = get_or<std::string>(*e, "source", ec.source, "embeddings");
        ec.dir = resolve(base, get_or<std::string>(*e, "dir", "", "embeddings"));
        ec.dims = get_or<std::size_t>(*e, "dims", ec.dims, "embeddings");
        ec.window = get_or<std::size_t>(*e, "window", ec.window, "embeddings");
        ec.oracle.dims = ec.dims;
        ec.oracle.coarse_scale = get_or<double>(*e, "coarse_scale", ec.oracle.coarse_scale, "embeddings");
        ec.oracle.fine_scale = get_or<double>(*e, "fine_scale", ec.oracle.fine_scale, "embeddings");
        ec.oracle.noise = get_or<double>(*e, "noise", ec.oracle.noise, "embeddings");
    }

    if (const auto* k = sub_table(root, "kmeans")) {
        check_keys(*k, "kmeans", {"restarts", "max_iterations", "tolerance"});
        cfg.kmeans.restarts = get_or<std::size_t>(*k, "restarts", 4, "kmeans");
        cfg.kmeans.max_iterations = get_or<std::size_t>(*k, "max_iterations", cfg.kmeans.max_iterations, "kmeans");
        cfg.kmeans.tolerance = get_or<double>(*k, "tolerance", cfg.kmeans.tolerance, "kmeans");
    } else {
        cfg.kmeans.restarts = 4;
    }

    cfg.lower_bound_train = TrainConfig::lower_bound();
    cfg.latent_train = TrainConfig::latent_finetune();
    cfg.finetune_train = cfg.model == ModelKind::Hmm ? TrainConfig::hmm_finetune() : TrainConfig::hclt_finetune();
    if (const auto* t = sub_table(root, "train")) {
        check_keys(*t, "train", {"lower_bound", "lower_bound_train", "latent", "finetune"});
        cfg.lower_bound = get_or<std::string>(*t, "lower_bound", cfg.lower_bound, "train");
        cfg.lower_bound_train = parse_train(sub_table(*t, "lower_bound_train"), cfg.lower_bound_train,
                                            "train.lower_bound_train");
        cfg.latent_train = parse_train(sub_table(*t, "latent"), cfg.latent_train, "train.latent");
        cfg.finetune_train = parse_train(sub_table(*t, "finetune"), cfg.finetune_train, "train.finetune");
    }
    cfg.validate();
    return cfg;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
    std::string text;
    try {
        text = read_text(path);
    } catch (const DataError&) {
        throw ConfigError("cannot read config " + path.string());
    }
    auto cfg = parse_pipeline_config(text, path.parent_path());
    cfg.config_path = path;
    return cfg;
}

// ---------------------------------------------------------------------------
// Stages

namespace {

struct StageContext {
    const PipelineConfig& cfg;

    Dataset split(const char* name) const { return read_dataset(cfg.output_dir / name); }

    HmmSpec hmm_spec(const Dataset& train) const {
        return {train.dims, cfg.hidden_states, train.num_categories, false};
    }

    PatchPcSpec patch_spec(const Dataset& train) const {
        PatchPcSpec spec = cfg.patch;
        if (train.kind != DatasetKind::Images) throw DataError("a patch PC needs an image dataset");
        spec.height = train.height;
        spec.width = train.width;
        spec.pixel_card = train.num_categories;
        if (cfg.model == ModelKind::Patch && fs::exists(cfg.output_dir / artifacts::kMst)) {
            spec.latent_tree = read_mst(cfg.output_dir / artifacts::kMst);
        }
        return spec;
    }

    TrainConfig train_config(TrainConfig t, std::uint64_t offset) const {
        t.seed = cfg.seed + offset;
        t.exec = cfg.exec();
        return t;
    }

    std::vector<EmbeddingMatrix> embeddings(const Dataset& train, std::size_t count) const {
        const auto& ec = cfg.embeddings;
        std::vector<EmbeddingMatrix> out;
        if (ec.source == "oracle") {
            SampledSequences s{train, read_assignments(cfg.output_dir / artifacts::kStates).values};
            out = oracle_state_embeddings(s, cfg.data.planted_hmm.fine, ec.oracle, cfg.seed + 7);
        } else if (ec.source == "suffix") {
            out = suffix_embeddings(train, ec.window, ec.dims, cfg.seed + 7);
        } else if (ec.source == "pixels") {
            out = patch_pixel_features(train, patch_spec(train));
        } else {
            const char* stem = cfg.model == ModelKind::Hmm ? "position_" : "patch_";
            for (std::size_t i = 0; i < count; ++i) {
                out.push_back(read_embeddings(ec.dir / (stem + std::to_string(i) + ".pcem")));
            }
        }
        if (out.size() != count) {
            throw ShapeError("expected " + std::to_string(count) + " embedding matrices, got " + std::to_string(out.size()));
        }
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (out[i].rows != train.rows) {
                throw ShapeError("embedding " + std::to_string(i) + " has " + std::to_string(out[i].rows) +
                                 " rows but the training set has " + std::to_string(train.rows));
            }
        }
        return out;
    }
};

bool records_disjoint(const std::vector<MaterializationRecord>& records) {
    for (std::size_t a = 0; a < records.size(); ++a) {
        for (std::size_t b = a + 1; b < records.size(); ++b) {
            if (!records[a].scope.is_disjoint_from(records[b].scope)) return false;
        }
    }
    return true;
}

Dataset tagged(Dataset d, Split s) {
    d.split = s;
    return d;
}

std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

template <class E>
[[noreturn]] void rethrow_prefixed(const E& e, const std::string& prefix) {
    throw E(prefix + e.what());
}

} // namespace

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

StageRecord Pipeline::skipped(Stage s, const std::string& why) const { return {s, "skipped", why, {}}; }

void Pipeline::write_history(Stage s, const std::vector<EpochRecord>& history) const {
    std::ostringstream os;
    os << "epoch,phase,train_ll,valid_ll,alpha\n";
    for (const auto& e : history) {
        os << e.epoch << ',' << e.phase << ',' << format_double(e.train_ll) << ',' << format_double(e.valid_ll) << ','
           << format_double(e.alpha) << '\n';
    }
    write_text(path(std::string("history_") + stage_name(s) + ".csv"), os.str());
}

StageRecord Pipeline::run(Stage s) {
    const std::string prefix = std::string("stage '") + stage_name(s) + "': ";
    StageRecord r;
    try {
        fs::create_directories(cfg_.output_dir);
        switch (s) {
        case Stage::Build: r = build(); break;
        case Stage::Materialize: r = materialize(); break;
        case Stage::Induce: r = induce(); break;
        case Stage::TrainLvd: r = train_lvd(); break;
        case Stage::FinetuneLatent: r = finetune_latent(); break;
        case Stage::Finetune: r = finetune(); break;
        case Stage::Eval: r = eval(); break;
        }
    } catch (const ConfigError& e) {
        rethrow_prefixed(e, prefix);
    } catch (const DataError& e) {
        rethrow_prefixed(e, prefix);
    } catch (const ShapeError& e) {
        rethrow_prefixed(e, prefix);
    } catch (const StructuralError& e) {
        rethrow_prefixed(e, prefix);
    } catch (const PreconditionError& e) {
        rethrow_prefixed(e, prefix);
    } catch (const DomainError& e) {
        rethrow_prefixed(e, prefix);
    } catch (const CapacityError& e) {
        rethrow_prefixed(e, prefix);
    } catch (const std::exception& e) {
        throw Error(prefix + e.what());
    }
    record(r);
    return r;
}

std::vector<StageRecord> Pipeline::run_all() {
    fs::remove(path(artifacts::kManifest));
    std::vector<StageRecord> out;
    for (Stage s : all_stages()) out.push_back(run(s));
    return out;
}

StageRecord Pipeline::build() {
    StageContext ctx{cfg_};
    Dataset train, valid, test;
    StageRecord r{Stage::Build, "done", {}, {artifacts::kTrain, artifacts::kValid, artifacts::kTest, artifacts::kInit}};
    if (cfg_.data.source == "planted-hmm") {
        const auto& spec = cfg_.data.planted_hmm;
        spec.validate();
        const auto params = planted_hmm_params(spec, cfg_.seed);
        auto s_train = sample_hmm(params, spec.seq_len, spec.vocab_size, cfg_.data.n_train, cfg_.seed + 1);
        train = s_train.tokens;
        valid = tagged(sample_hmm(params, spec.seq_len, spec.vocab_size, cfg_.data.n_valid, cfg_.seed + 2).tokens, Split::Valid);
        test = tagged(sample_hmm(params, spec.seq_len, spec.vocab_size, cfg_.data.n_test, cfg_.seed + 3).tokens, Split::Test);
        LVAssignment states{train.rows, std::vector<std::uint32_t>(spec.seq_len, static_cast<std::uint32_t>(spec.num_states())),
                            std::move(s_train.states)};
        write_assignments(path(artifacts::kStates), states);
        r.outputs.emplace_back(artifacts::kStates);
    } else if (cfg_.data.source == "planted-images") {
        const auto& spec = cfg_.data.planted_images;
        train = sample_planted_images(spec, cfg_.data.n_train, cfg_.seed, cfg_.seed + 1).images;
        valid = tagged(sample_planted_images(spec, cfg_.data.n_valid, cfg_.seed, cfg_.seed + 2).images, Split::Valid);
        test = tagged(sample_planted_images(spec, cfg_.data.n_test, cfg_.seed, cfg_.seed + 3).images, Split::Test);
    } else {
        train = tagged(load_dataset(cfg_.data.train), Split::Train);
        valid = tagged(load_dataset(cfg_.data.valid), Split::Valid);
        test = tagged(load_dataset(cfg_.data.test), Split::Test);
        const bool same_shape = valid.dims == train.dims && test.dims == train.dims && valid.kind == train.kind &&
                                test.kind == train.kind;
        if (cfg_.data.window == 0 && !same_shape) {
            throw ShapeError("train, valid and test splits must share kind and dims");
        }
        const auto cats = std::max({train.num_categories, valid.num_categories, test.num_categories});
        train.num_categories = valid.num_categories = test.num_categories = cats;
        if (cfg_.data.window > 0) {
            if (train.kind != DatasetKind::Tokens) throw DataError("only token data can be windowed");
            const auto w = [&](const Dataset& d, Split s) {
                return window_tokens(d.values, cfg_.data.window, cats, cfg_.data.stride, s);
            };
            train = w(train, Split::Train);
            valid = w(valid, Split::Valid);
            test = w(test, Split::Test);
        }
    }
    write_dataset(path(artifacts::kTrain), train);
    write_dataset(path(artifacts::kValid), valid);
    write_dataset(path(artifacts::kTest), test);

    if (cfg_.model == ModelKind::Hmm) {
        if (train.kind != DatasetKind::Tokens) throw DataError("an HMM needs a token dataset");
        const auto hmm = build_hmm(ctx.hmm_spec(train), cfg_.seed);
        save_circuit(path(artifacts::kInit), hmm.circuit);
        r.note = "HMM with " + std::to_string(cfg_.hidden_states) + " hidden states over T=" + std::to_string(train.dims);
        return r;
    }

    fs::remove(path(artifacts::kMst));
    PatchPcSpec spec = ctx.patch_spec(train);
    spec.validate();
    if (cfg_.latent_tree == "mst") {
        const auto mst = patch_correlation_mst(ctx.embeddings(train, spec.num_patches()));
        write_mst(path(artifacts::kMst), mst.tree);
        spec.latent_tree = mst.tree;
        r.outputs.emplace_back(artifacts::kMst);
    }
    if (cfg_.patch_trees == "chow-liu") {
        const DataMatrix x = train.to_matrix();
        for (std::size_t i = 0; i < spec.num_patches(); ++i) {
            const auto vars = patch_variables(spec, i);
            DataMatrix local(x.rows, vars.size());
            for (std::size_t l = 0; l < x.rows; ++l) {
                for (std::size_t j = 0; j < vars.size(); ++j) local.at(l, j) = x.at(l, vars[j]);
            }
            spec.patch_trees.push_back(
                chow_liu_tree(local, std::vector<std::uint32_t>(vars.size(), spec.pixel_card), cfg_.exec()));
        }
    }
    const auto pc = build_patch_pc(spec, cfg_.seed);
    save_circuit(path(artifacts::kInit), pc.circuit);
    r.note = "patch PC with " + std::to_string(spec.num_patches()) + " patches";
    return r;
}

StageRecord Pipeline::materialize() {
    if (cfg_.baseline) return skipped(Stage::Materialize, "baseline run");
    StageContext ctx{cfg_};
    const auto train = ctx.split(artifacts::kTrain);
    const auto doc = load_circuit(path(artifacts::kInit));
    const auto res = cfg_.model == ModelKind::Hmm
                         ? materialize_sequence(doc.circuit, hmm_suffix_scopes(ctx.hmm_spec(train)))
                         : materialize_partition(doc.circuit, patch_partition(ctx.patch_spec(train)));
    save_circuit(path(artifacts::kAugmented), res.circuit, res.records);
    return {Stage::Materialize, "done", std::to_string(res.records.size()) + " latent variables",
            {artifacts::kAugmented}};
}

StageRecord Pipeline::induce() {
    if (cfg_.baseline) return skipped(Stage::Induce, "baseline run");
    StageContext ctx{cfg_};
    const auto train = ctx.split(artifacts::kTrain);
    const auto doc = load_circuit(path(artifacts::kAugmented));
    const auto& records = doc.lv_records;
    const auto emb = ctx.embeddings(train, records.size());
    KMeansOptions opts = cfg_.kmeans;
    opts.exec = cfg_.exec();
    std::vector<std::uint32_t> counts;
    for (const auto& rec : records) counts.push_back(rec.cardinality());
    const auto z = cfg_.model == ModelKind::Hmm ? induce_sequence_lvs(emb, cfg_.hidden_states, cfg_.seed, opts)
                                                : induce_patch_lvs(emb, counts, cfg_.seed, opts);
    if (z.cardinalities != counts) throw ShapeError("induced LV cardinalities do not match the materialized circuit");
    write_assignments(path(artifacts::kAssignments), z);
    return {Stage::Induce, "done", "k-means over " + std::to_string(emb.size()) + " embedding sets",
            {artifacts::kAssignments}};
}

StageRecord Pipeline::train_lvd() {
    if (cfg_.baseline) return skipped(Stage::TrainLvd, "baseline run");
    StageContext ctx{cfg_};
    const auto train = ctx.split(artifacts::kTrain);
    const auto valid = ctx.split(artifacts::kValid);
    const auto doc = load_circuit(path(artifacts::kAugmented));
    const auto z = read_assignments(path(artifacts::kAssignments));
    const auto d_aug = augment(doc.circuit, doc.lv_records, train.to_matrix(), z);
    const auto v_ev = observed_evidence(doc.circuit, valid.to_matrix());
    const TrainConfig tc = ctx.train_config(cfg_.lower_bound_train, 100);

    std::string mode = cfg_.lower_bound;
    if (mode == "auto") mode = cfg_.model == ModelKind::Hmm ? "closed-form" : "factored";
    StageRecord r{Stage::TrainLvd, "done", mode, {artifacts::kLvd}};
    if (mode == "closed-form") {
        std::size_t zero = 0;
        const auto fit = closed_form_mle(doc.circuit, d_aug, tc.pseudocount, &zero);
        EpochRecord rec;
        rec.alpha = 1.0;
        rec.train_ll = mean_log_likelihood(fit, d_aug, tc.exec);
        rec.valid_ll = mean_log_likelihood(fit, v_ev, tc.exec);
        write_history(Stage::TrainLvd, {rec});
        save_circuit(path(artifacts::kLvd), fit, doc.lv_records);
        if (zero) r.note += "; " + std::to_string(zero) + " zero-probability rows ignored";
        return r;
    }
    auto res = factored_lvd_train(doc.circuit, doc.lv_records, d_aug, tc);
    for (auto& e : res.latent_history) e.valid_ll = std::numeric_limits<double>::quiet_NaN();
    write_history(Stage::TrainLvd, res.latent_history);
    save_circuit(path(artifacts::kLvd), res.circuit, doc.lv_records);
    for (const auto& w : res.warnings) r.note += "; " + w;
    return r;
}

StageRecord Pipeline::finetune_latent() {
    if (cfg_.baseline) return skipped(Stage::FinetuneLatent, "baseline run");
    StageContext ctx{cfg_};
    const auto doc = load_circuit(path(artifacts::kLvd));
    if (!records_disjoint(doc.lv_records)) {
        return skipped(Stage::FinetuneLatent, "latent scopes are nested; p(Z) does not factor over disjoint parts");
    }
    const auto train = ctx.split(artifacts::kTrain);
    const auto valid = ctx.split(artifacts::kValid);
    const auto vx = valid.to_matrix();
    const auto res = latent_finetune(doc.circuit, doc.lv_records, train.to_matrix(), &vx,
                                     ctx.train_config(cfg_.latent_train, 200));
    write_history(Stage::FinetuneLatent, res.history);
    save_circuit(path(artifacts::kLatent), res.circuit, doc.lv_records);
    return {Stage::FinetuneLatent, "done", {}, {artifacts::kLatent}};
}

StageRecord Pipeline::finetune() {
    StageContext ctx{cfg_};
    const auto train = ctx.split(artifacts::kTrain);
    const auto valid = ctx.split(artifacts::kValid);
    const auto init = load_circuit(path(artifacts::kInit));
    Circuit start = init.circuit;
    std::string source = artifacts::kInit;
    if (!cfg_.baseline) {
        const auto lvd = load_circuit(path(artifacts::kLvd));
        source = records_disjoint(lvd.lv_records) ? artifacts::kLatent : artifacts::kLvd;
        const auto trained = source == artifacts::kLvd ? lvd : load_circuit(path(source));
        start = init.circuit.with_parameters(trained.circuit.parameters());
    }
    const auto vx = valid.to_matrix();
    const auto res = full_finetune(start, train.to_matrix(), &vx, ctx.train_config(cfg_.finetune_train, 300));
    write_history(Stage::Finetune, res.history);
    save_circuit(path(artifacts::kFinal), res.circuit);
    return {Stage::Finetune, "done", "from " + source, {artifacts::kFinal}};
}

StageRecord Pipeline::eval() {
    StageContext ctx{cfg_};
    const auto test = ctx.split(artifacts::kTest);
    const auto valid = ctx.split(artifacts::kValid);
    const auto doc = load_circuit(path(artifacts::kFinal));
    const double ll = total_log_likelihood(doc.circuit, test.to_matrix(), cfg_.exec());
    const auto m = make_metrics(ll, test.rows, test.dims);
    nlohmann::json j;
    j["split"] = "test";
    j["ll_total"] = m.ll_total;
    j["samples"] = m.samples;
    j["dims"] = m.dims;
    j["mean_ll"] = m.ll_total / static_cast<double>(m.samples);
    j["bpd"] = m.bpd;
    j["perplexity"] = m.perplexity;
    j["valid_mean_ll"] = mean_log_likelihood(doc.circuit, valid.to_matrix(), cfg_.exec());
    write_text(path(artifacts::kEval), j.dump(2) + "\n");

    // metrics.csv joins the histories of the training stages that ran.
    std::set<std::string> done;
    if (fs::exists(path(artifacts::kManifest))) {
        const auto man = nlohmann::json::parse(read_text(path(artifacts::kManifest)));
        for (const auto& s : man.at("stages")) {
            if (s.at("status") == "done") done.insert(s.at("name").get<std::string>());
        }
    }
    std::ostringstream csv;
    csv << "stage,epoch,phase,train_ll,valid_ll,alpha\n";
    for (Stage s : {Stage::TrainLvd, Stage::FinetuneLatent, Stage::Finetune}) {
        if (!done.count(stage_name(s))) continue;
        std::istringstream in(read_text(path(std::string("history_") + stage_name(s) + ".csv")));
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (!line.empty()) csv << stage_name(s) << ',' << line << '\n';
        }
    }
    write_text(path(artifacts::kMetrics), csv.str());
    return {Stage::Eval, "done", "test bpd " + format_double(m.bpd), {artifacts::kEval, artifacts::kMetrics}};
}

void Pipeline::record(const StageRecord& r) const {
    nlohmann::json man;
    if (fs::exists(path(artifacts::kManifest))) man = nlohmann::json::parse(read_text(path(artifacts::kManifest)));
    man["format"] = "pc-lvd-manifest";
    man["version"] = 1;
    man["model"] = cfg_.model == ModelKind::Hmm ? "hmm" : "patch";
    man["seed"] = cfg_.seed;
    man["deterministic"] = cfg_.deterministic;
    man["baseline"] = cfg_.baseline;
    nlohmann::json inputs = nlohmann::json::array();
    auto add_input = [&](const fs::path& p) {
        if (!p.empty() && fs::exists(p)) inputs.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
    };
    add_input(cfg_.config_path);
    if (cfg_.data.source == "files") {
        add_input(cfg_.data.train);
        add_input(cfg_.data.valid);
        add_input(cfg_.data.test);
    }
    if (cfg_.embeddings.source == "files" && fs::is_directory(cfg_.embeddings.dir)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(cfg_.embeddings.dir)) {
            if (e.path().extension() == ".pcem") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) add_input(f);
    }
    man["inputs"] = inputs;

    nlohmann::json entry;
    entry["name"] = stage_name(r.stage);
    entry["status"] = r.status;
    entry["note"] = r.note;
    entry["outputs"] = nlohmann::json::array();
    for (const auto& o : r.outputs) {
        entry["outputs"].push_back({{"path", o.generic_string()}, {"sha256", sha256_file(path(o.string()))}});
    }
    nlohmann::json stages = nlohmann::json::array();
    bool placed = false;
    if (man.contains("stages")) {
        for (const auto& s : man["stages"]) {
            const Stage existing = parse_stage(s.at("name").get<std::string>());
            if (!placed && existing >= r.stage) {
                stages.push_back(entry);
                placed = true;
            }
            if (existing != r.stage) stages.push_back(s);
        }
    }
    if (!placed) stages.push_back(entry);
    man["stages"] = stages;
    write_text(path(artifacts::kManifest), man.dump(2) + "\n");
}

} // namespace pclvd
