#pragma once

// Joint loss assembly, duration weighting, Adam, the epoch loop and
// checkpoint persistence.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentrec/engagement.hpp"
#include "intentrec/model.hpp"

namespace intentrec {

enum class DurationWeighting { Log1p, Uniform };

struct TrainConfig {
    double lambda = 1.0;
    double learning_rate = 1e-3;
    int batch_size = 32;
    int epochs = 10;
    std::uint64_t seed = 1;
    int threads = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    DurationWeighting weighting = DurationWeighting::Log1p;

    void validate() const;
};

// log1p(duration) rescaled to mean 1. All-zero input yields all ones.
std::vector<double> duration_weights(std::span<const double> durations,
                                     DurationWeighting scheme = DurationWeighting::Log1p);

struct HeadTargets {
    std::vector<int> labels;                   // single-label; -1 where no target
    std::vector<std::vector<int>> positives;   // multi-label; empty where no target
};

// Position k targets interaction k+1; the final position has none.
struct SequenceTargets {
    std::vector<int> items;
    std::vector<double> durations;  // duration of the target interaction, 0 at the end
    std::vector<HeadTargets> heads;
    std::size_t count() const { return items.empty() ? 0 : items.size() - 1; }
};

int intent_label(const Interaction& interaction, IntentField field);
SequenceTargets make_targets(std::span<const Interaction> interactions, std::span<const IntentHeadSpec> heads);

// Σ_k w_k · −log p_item[k][target_k] / normalizer.
Var item_loss(Var logits, std::span<const int> targets, std::span<const double> weights, double normalizer = 1.0);
// Cross-entropy for single-label heads, positive-only BCE for multi-label heads.
Var intent_loss(Var logits, const HeadTargets& targets, std::span<const double> weights, const IntentHeadSpec& spec,
                double normalizer = 1.0);
Var total_loss(Var item, std::span<const Var> intents, double lambda);
double total_loss(double item, std::span<const double> intents, double lambda);

class Adam {
   public:
    Adam(ParameterSet& params, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

    void step();
    std::int64_t steps() const noexcept { return t_; }

    nlohmann::json state() const;
    void restore(const nlohmann::json& state);

   private:
    ParameterSet& params_;
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

struct LossBreakdown {
    double item = 0.0;
    std::vector<double> intents;
    double total = 0.0;
    std::size_t positions = 0;
};

struct EpochRecord {
    int epoch = 0;
    double item_loss = 0.0;
    std::vector<double> intent_losses;
    double total_loss = 0.0;
};

// Forward + backward over one mini-batch. Gradients accumulate into the
// model's parameter grads; with threads > 1 users are sharded and per-thread
// buffers are summed in shard order.
LossBreakdown batch_gradients(IntentRecModel& model, std::span<const UserSequence* const> batch,
                              const TrainConfig& config);

// Same loss without gradients.
LossBreakdown batch_loss(const IntentRecModel& model, std::span<const UserSequence* const> batch,
                         const TrainConfig& config);

class Trainer {
   public:
    Trainer(IntentRecModel& model, TrainConfig config);

    EpochRecord run_epoch(std::span<const UserSequence> users);
    std::vector<EpochRecord> train(std::span<const UserSequence> users,
                                   const std::function<void(const EpochRecord&)>& on_epoch = {});

    Adam& optimizer() noexcept { return adam_; }
    int epochs_completed() const noexcept { return epochs_completed_; }
    void set_epochs_completed(int n) noexcept { epochs_completed_ = n; }
    const TrainConfig& config() const noexcept { return config_; }

   private:
    IntentRecModel& model_;
    TrainConfig config_;
    Adam adam_;
    int epochs_completed_ = 0;
};

std::vector<EpochRecord> train(IntentRecModel& model, std::span<const UserSequence> users, const TrainConfig& config);

// ---- checkpoints -----------------------------------------------------------------

inline constexpr const char* kCheckpointFormatVersion = "1";

struct CheckpointMeta {
    std::string config_hash;
    nlohmann::json config;
    int epochs_completed = 0;
    std::vector<EpochRecord> trace;
};

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const CheckpointMeta& meta,
                     const Adam* optimizer = nullptr);
// Reads only the metadata (no parameter validation).
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);
// Loads parameter values into params. A non-empty expected_hash must match.
CheckpointMeta load_checkpoint(const std::filesystem::path& path, ParameterSet& params,
                               const std::string& expected_hash = {}, Adam* optimizer = nullptr);

std::string loss_trace_csv(const std::vector<EpochRecord>& trace, std::span<const IntentHeadSpec> heads);

}  // namespace intentrec
