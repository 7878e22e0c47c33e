#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pclvd/builders.hpp"
#include "pclvd/induce.hpp"
#include "pclvd/learn.hpp"
#include "pclvd/synthetic.hpp"

namespace pclvd {

enum class ModelKind { Hmm, Patch };

/// Stages in execution order.
enum class Stage { Build, Materialize, Induce, TrainLvd, FinetuneLatent, Finetune, Eval };

inline constexpr std::size_t kNumStages = 7;

const char* stage_name(Stage s) noexcept;
Stage parse_stage(const std::string& name);
std::vector<Stage> all_stages();

struct DataConfig {
    std::string source = "planted-hmm";  // planted-hmm | planted-images | files
    std::filesystem::path train, valid, test;
    std::size_t n_train = 2000, n_valid = 500, n_test = 500;
    // files: when window > 0 each file is read as one token stream and cut
    // into length-window subsequences every stride tokens.
    std::size_t window = 0;
    std::size_t stride = 1;
    PlantedHmmSpec planted_hmm;
    PlantedImageSpec planted_images;
};

struct EmbeddingConfig {
    std::string source = "oracle";  // oracle | suffix | pixels | files
    std::filesystem::path dir;      // files: position_<t>.pcem or patch_<i>.pcem
    std::size_t dims = 16;
    std::size_t window = 4;         // suffix embeddings
    OracleEmbeddingSpec oracle;
};

struct PipelineConfig {
    std::filesystem::path config_path;
    std::filesystem::path output_dir = "run";
    ModelKind model = ModelKind::Hmm;
    std::uint64_t seed = 0;
    bool deterministic = true;
    bool baseline = false;

    DataConfig data;
    EmbeddingConfig embeddings;

    // hmm
    std::size_t hidden_states = 8;
    // patch
    PatchPcSpec patch;
    std::string latent_tree = "chain";  // chain | mst
    std::string patch_trees = "chain";  // chain | chow-liu

    KMeansOptions kmeans;
    std::string lower_bound = "auto";  // auto | closed-form | factored
    TrainConfig lower_bound_train;
    TrainConfig latent_train;
    TrainConfig finetune_train;

    Execution exec() const { return deterministic ? Execution::Deterministic : Execution::Parallel; }
    void validate() const;
};

/// Parses a TOML document; relative paths resolve against `base_dir`.
PipelineConfig parse_pipeline_config(const std::string& toml_text, const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

struct StageRecord {
    Stage stage = Stage::Build;
    std::string status;  // done | skipped
    std::string note;
    std::vector<std::filesystem::path> outputs;  // relative to the output directory
};

/// Runs stages against the files in config.output_dir. Every stage reads its
/// inputs from disk, so stages can also be run one at a time.
class Pipeline {
public:
    explicit Pipeline(PipelineConfig cfg);

    const PipelineConfig& config() const noexcept { return cfg_; }

    /// Runs one stage and records it in manifest.json. Errors are rethrown
    /// with the stage name prefixed, keeping their type.
    StageRecord run(Stage s);
    std::vector<StageRecord> run_all();

    std::filesystem::path path(const std::string& name) const { return cfg_.output_dir / name; }

private:
    StageRecord build();
    StageRecord materialize();
    StageRecord induce();
    StageRecord train_lvd();
    StageRecord finetune_latent();
    StageRecord finetune();
    StageRecord eval();

    StageRecord skipped(Stage s, const std::string& why) const;
    void write_history(Stage s, const std::vector<EpochRecord>& history) const;
    void record(const StageRecord& r) const;

    PipelineConfig cfg_;
};

/// Artifact names inside the output directory.
namespace artifacts {
inline constexpr const char* kTrain = "data/train.pcds";
inline constexpr const char* kValid = "data/valid.pcds";
inline constexpr const char* kTest = "data/test.pcds";
inline constexpr const char* kStates = "data/train_states.pclv";
inline constexpr const char* kInit = "circuit_init.json";
inline constexpr const char* kAugmented = "circuit_aug.json";
inline constexpr const char* kAssignments = "z_train.pclv";
inline constexpr const char* kMst = "mst.json";
inline constexpr const char* kLvd = "circuit_lvd.json";
inline constexpr const char* kLatent = "circuit_latent.json";
inline constexpr const char* kFinal = "circuit_final.json";
inline constexpr const char* kMetrics = "metrics.csv";
inline constexpr const char* kEval = "eval.json";
inline constexpr const char* kManifest = "manifest.json";
} // namespace artifacts

} // namespace pclvd
