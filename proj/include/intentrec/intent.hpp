#pragma once

// Intent side of the model: a causal transformer over the input feature
// sequence, one prediction head per intent, and the attention-weighted
// aggregation of projected head outputs into the intent embedding Z.

#include <random>
#include <span>
#include <vector>

#include "intentrec/layers.hpp"
#include "intentrec/model_config.hpp"
#include "intentrec/tensor.hpp"

namespace intentrec {

struct HeadOutput {
    Var logits;  // n x d_i
    Var scores;  // softmax rows, or element-wise sigmoid for multi-label heads
};

HeadOutput predict_intent_head(Graph& g, Var encoding, const Linear& fc, const IntentHeadSpec& spec);

struct IntentAggregation {
    std::vector<Var> projected;  // Proj_i(p_i), each n x d_proj
    Var alpha_logits;            // n x M
    Var alpha;                   // n x M, rows sum to 1
    Var z;                       // n x d_proj
};

// Z = Σ_i softmax(α)_i · Proj_i(p_i) with α_i = Proj_i(p_i) · attention.
// attention is a d_proj x 1 column shared by every head.
IntentAggregation aggregate_intent_embedding(Graph& g, std::span<const Var> scores,
                                             std::span<const Linear> projections, Var attention);

struct IntentBundle {
    Var encoding;  // E^intent, n x d_model
    std::vector<HeadOutput> heads;
    IntentAggregation aggregation;
};

struct IntentPredictor {
    SequenceEncoder encoder;
    std::vector<IntentHeadSpec> specs;
    std::vector<Linear> heads;
    std::vector<Linear> projections;
    Parameter* attention = nullptr;

    static IntentPredictor create(ParameterSet& params, const ModelConfig& config, std::size_t d_in,
                                  std::mt19937_64& rng);
    IntentBundle forward(Graph& g, Var input, std::span<const std::int64_t> timestamps) const;
};

}  // namespace intentrec
