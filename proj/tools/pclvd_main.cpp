#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "pclvd/error.hpp"
#include "pclvd/pipeline.hpp"

using namespace pclvd;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output;
    bool deterministic = false;
    bool parallel = false;
    bool baseline = false;
};

PipelineConfig resolve(const Options& o) {
    if (o.config.empty()) throw ConfigError("--config is required");
    PipelineConfig cfg = load_pipeline_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (o.output) cfg.output_dir = *o.output;
    if (o.deterministic) cfg.deterministic = true;
    if (o.parallel) cfg.deterministic = false;
    if (o.baseline) cfg.baseline = true;
    cfg.validate();
    return cfg;
}

void report(const StageRecord& r) {
    std::printf("%-16s %-8s %s\n", stage_name(r.stage), r.status.c_str(), r.note.c_str());
    std::fflush(stdout);
}

int exit_code(const Error& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return 3;
    if (dynamic_cast<const StructuralError*>(&e)) return 4;
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Latent variable distillation for probabilistic circuits"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&o](CLI::App* sub) {
        sub->add_option("--config", o.config, "TOML run configuration")->required();
        sub->add_option("--seed", o.seed, "override run.seed");
        sub->add_option("--output", o.output, "override run.output_dir");
        auto* det = sub->add_flag("--deterministic", o.deterministic, "fixed-order reductions (default in configs)");
        sub->add_flag("--parallel", o.parallel, "unordered parallel reductions")->excludes(det);
        sub->add_flag("--baseline", o.baseline, "random init and EM only; skips LVD stages");
    };

    std::optional<Stage> single;
    for (Stage s : all_stages()) {
        auto* sub = app.add_subcommand(stage_name(s), std::string("run the ") + stage_name(s) + " stage");
        add_common(sub);
        sub->callback([&single, s] { single = s; });
    }
    auto* pipeline = app.add_subcommand("pipeline", "run all stages in order");
    add_common(pipeline);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        Pipeline p(resolve(o));
        if (single) {
            report(p.run(*single));
        } else {
            std::filesystem::remove(p.path(artifacts::kManifest));
            for (Stage s : all_stages()) report(p.run(s));
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
