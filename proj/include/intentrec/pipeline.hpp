#pragma once

// End-to-end commands: generate, train, evaluate, compare, ablate, cluster and
// inspect. Each command writes a manifest that embeds the full config, so any
// run can be repeated from its manifest alone.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentrec/analytics.hpp"
#include "intentrec/config.hpp"
#include "intentrec/evaluator.hpp"

namespace intentrec {

inline constexpr const char* kEngineVersion = "1.0.0";
inline constexpr const char* kManifestVersion = "1";

namespace files {
inline constexpr const char* kCatalog = "catalog.json";
inline constexpr const char* kTrain = "train.jsonl";
inline constexpr const char* kVal = "val.jsonl";
inline constexpr const char* kTest = "test.jsonl";
inline constexpr const char* kLatent = "latent.jsonl";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kCheckpoint = "checkpoint.json";
inline constexpr const char* kLossTrace = "loss.csv";
inline constexpr const char* kReport = "report.json";
}  // namespace files

using ProgressFn = std::function<void(const std::string&)>;

struct Dataset {
    Catalog catalog;
    DatasetSplit split;
    std::vector<LatentTrace> latent;
};

// In-memory generation, identical to what cmd_generate writes.
Dataset make_dataset(const RunConfig& config);
Dataset load_dataset(const std::filesystem::path& dir, int num_items);

// Loads a config file or a manifest (which embeds its config).
RunConfig load_config_or_manifest(const std::filesystem::path& path);

nlohmann::json cmd_generate(const RunConfig& config, const std::filesystem::path& out_dir, bool force);

// With resume set and a checkpoint in out_dir, training continues from it.
nlohmann::json cmd_train(const RunConfig& config, const std::filesystem::path& data_dir,
                         const std::filesystem::path& out_dir, bool resume = false, const ProgressFn& progress = {});

// split is "test" or "val".
nlohmann::json cmd_evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir,
                            const std::filesystem::path& out_dir, const std::string& split = "test");

nlohmann::json cmd_compare(const std::filesystem::path& baseline, const std::filesystem::path& candidate,
                           const std::filesystem::path& out_file);

nlohmann::json cmd_cluster(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir,
                           const std::filesystem::path& out_dir, int k, std::size_t exemplars = 10,
                           std::uint64_t seed = 1);

nlohmann::json cmd_inspect(const std::filesystem::path& path);

// ---- ablation ------------------------------------------------------------------

enum class AblationMode { Architecture, Heads, Both };

struct AblationRow {
    std::string name;
    std::vector<double> mrr;   // one per seed
    std::vector<double> wmrr;
    double mean_mrr() const;
    double mean_wmrr() const;
};

struct AblationTable {
    std::string title;
    std::string baseline;
    std::vector<AblationRow> rows;

    const AblationRow& row(const std::string& name) const;
    std::string markdown() const;
    std::string csv() const;
};

struct AblationResult {
    std::vector<std::uint64_t> seeds;
    AblationTable architecture;  // rows V0, V1, V2, V3-1w, V3-1m; %Δ vs V1
    AblationTable heads;         // V0 plus only-*, all; %Δ vs V0
};

// Trains every row with identical data and init seeds per seed value.
AblationResult run_ablation(const RunConfig& base, AblationMode mode, const std::vector<std::uint64_t>& seeds,
                            const ProgressFn& progress = {});

nlohmann::json cmd_ablate(const RunConfig& base, const std::filesystem::path& out_dir, AblationMode mode,
                          const std::vector<std::uint64_t>& seeds, const ProgressFn& progress = {});

// Trains one configuration on the given data and evaluates it on the test split.
EvalReport train_and_evaluate(const RunConfig& config, const Dataset& data);

}  // namespace intentrec
