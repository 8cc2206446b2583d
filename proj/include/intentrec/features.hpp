#pragma once

// Input feature sequence: per-interaction feature F_k (embeddings of every
// categorical field plus normalized scalars), the time-window short-term
// interest S_k, and their concatenation.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "intentrec/engagement.hpp"
#include "intentrec/layers.hpp"
#include "intentrec/model_config.hpp"
#include "intentrec/tensor.hpp"

namespace intentrec {

struct FeatureTables {
    Parameter* item = nullptr;
    Parameter* action = nullptr;
    Parameter* genre = nullptr;
    Parameter* movie_show = nullptr;
    Parameter* tsr = nullptr;

    static FeatureTables create(ParameterSet& params, const FeatureConfig& config, int num_items,
                                std::mt19937_64& rng);
};

// Normalized scalar features of interaction k; previous is interaction k-1 or null.
std::vector<double> numeric_features(const Interaction& interaction, const Interaction* previous,
                                     const FeatureConfig& config);

// One row [1 x d_full].
Var build_interaction_feature(Graph& g, const Interaction& interaction, const Interaction* previous,
                              const FeatureTables& tables, const FeatureConfig& config);

// All rows at once [n x d_full]; row k equals build_interaction_feature(k).
Var build_feature_matrix(Graph& g, std::span<const Interaction> interactions, const FeatureTables& tables,
                         const FeatureConfig& config);

// Smallest 0-based index i <= k with timestamps[k] - timestamps[i] <= window.
// timestamps must be strictly increasing.
std::size_t select_window(std::span<const std::int64_t> timestamps, std::size_t k, std::int64_t window);

struct ShortTermEncoder {
    ShortEncoderKind kind = ShortEncoderKind::Transformer;
    Linear input;
    std::optional<EncoderLayer> layer;
    Linear output;

    static ShortTermEncoder create(ParameterSet& params, const FeatureConfig& config, std::mt19937_64& rng);

    // S for one window of F rows [w x d_full] -> [1 x d_short].
    Var encode(Graph& g, Var window_features) const;
    // S_k for every position of F [n x d_full] -> [n x d_short].
    Var encode_sequence(Graph& g, Var features, std::span<const std::int64_t> timestamps,
                        std::int64_t window) const;
};

struct InputFeatureSeq {
    Var features;                    // F, n x d_full
    std::optional<Var> short_term;   // S, n x d_short
    Var concat;                      // F ⊕ S (or F alone)
    std::vector<std::int64_t> timestamps;
};

// short_term may be null, in which case concat is F.
InputFeatureSeq build_input_sequence(Graph& g, std::span<const Interaction> interactions,
                                     const FeatureTables& tables, const ShortTermEncoder* short_term,
                                     const FeatureConfig& config);

}  // namespace intentrec
