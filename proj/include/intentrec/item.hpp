#pragma once

#include <random>
#include <span>

#include "intentrec/layers.hpp"
#include "intentrec/model_config.hpp"
#include "intentrec/tensor.hpp"

namespace intentrec {

struct ItemOutput {
    Var encoding;  // E^item, n x d_model
    Var logits;    // n x |I|
};

// Causal item encoder over the intent-aware feature sequence plus the
// full-catalog output head.
struct ItemPredictor {
    SequenceEncoder encoder;
    Linear head;

    static ItemPredictor create(ParameterSet& params, const std::string& name, std::size_t d_in,
                                const EncoderConfig& config, int num_items, int time_buckets, std::mt19937_64& rng);
    ItemOutput forward(Graph& g, Var input, std::span<const std::int64_t> timestamps) const;
};

// Softmax over the whole catalog, one distribution per row.
Var predict_item_scores(Graph& g, Var encoding, const Linear& head);

}  // namespace intentrec
