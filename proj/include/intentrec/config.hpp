#pragma once

// The single declarative run document: data, features, model, heads, variant
// and training sections, plus the built-in size profiles.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "intentrec/engagement.hpp"
#include "intentrec/model_config.hpp"
#include "intentrec/trainer.hpp"

namespace intentrec {

struct DataConfig {
    int num_items = 500;
    GeneratorConfig generator;
    SplitRatios split;
};

struct RunConfig {
    DataConfig data;
    ModelConfig model;
    TrainConfig training;

    void validate() const;
};

// "30m", "12h", "1d", "1w", "1mo" (30 days) or a bare number of seconds.
std::int64_t parse_duration(const std::string& text);
std::string format_duration(std::int64_t seconds);

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& doc);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

// "micro", "desk" or "paper".
RunConfig profile(const std::string& name);

// FNV-1a 64 over the canonical JSON of everything that shapes the parameters.
std::string model_hash(const ModelConfig& model);
std::string config_hash(const RunConfig& config);
std::string fnv1a_hex(const std::string& bytes);

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
    std::optional<double> lambda;
    std::optional<Variant> variant;
    std::optional<int> threads;
};

// A seed override reseeds the generator, the split, the model init and the
// shuffle. Changing the variant to V0 clears the heads; changing away from V0
// with no heads restores the defaults.
void apply_overrides(RunConfig& config, const Overrides& o);

}  // namespace intentrec
