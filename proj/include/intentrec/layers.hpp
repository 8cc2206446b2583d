#pragma once

// Parameterized building blocks shared by the short-term, intent and item
// encoders. Each block holds stable pointers into a ParameterSet.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "intentrec/model_config.hpp"
#include "intentrec/tensor.hpp"

namespace intentrec {

struct Linear {
    Parameter* weight = nullptr;  // in x out
    Parameter* bias = nullptr;    // out, optional

    static Linear create(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out,
                         std::mt19937_64& rng, bool with_bias = true);
    Var operator()(Graph& g, Var x) const;
    std::size_t in() const { return weight->value.rows(); }
    std::size_t out() const { return weight->value.cols(); }
};

struct LayerNormParams {
    Parameter* gain = nullptr;
    Parameter* bias = nullptr;

    static LayerNormParams create(ParameterSet& params, const std::string& name, std::size_t width);
    Var operator()(Graph& g, Var x) const;
};

// Post-norm transformer encoder block: LN(x + MHA(x)), then LN(h + FFN(h)).
struct EncoderLayer {
    Linear query, key, value, output;
    LayerNormParams attention_norm;
    Linear ffn_in, ffn_out;
    LayerNormParams ffn_norm;
    int heads = 1;

    static EncoderLayer create(ParameterSet& params, const std::string& name, int d_model, int heads, int d_ffn,
                               std::mt19937_64& rng);
    Var forward(Graph& g, Var x, bool causal) const;
};

Var multi_head_attention(Var q, Var k, Var v, int heads, bool causal);

// Log-spaced bucket of a non-negative time delta; 0 for deltas under a minute,
// clipped to buckets - 1 beyond roughly three years.
std::size_t time_bucket(std::int64_t delta_seconds, int buckets);
std::vector<std::size_t> timestamp_buckets(std::span<const std::int64_t> timestamps, int buckets);
// Rows of the trainable bucket table for each timestamp's delta from the first.
Var timestamp_positional_encoding(Graph& g, std::span<const std::int64_t> timestamps, Parameter& table);

// FC reduction + layer norm + timestamp positional encoding + encoder stack.
struct SequenceEncoder {
    Linear reduce;
    LayerNormParams input_norm;
    Parameter* time_table = nullptr;  // buckets x d_model
    std::vector<EncoderLayer> layers;

    static SequenceEncoder create(ParameterSet& params, const std::string& name, std::size_t d_in,
                                  const EncoderConfig& config, int time_buckets, std::mt19937_64& rng);
    Var forward(Graph& g, Var x, std::span<const std::int64_t> timestamps, bool causal = true) const;
    std::size_t d_model() const { return reduce.out(); }
};

Tensor normal_init(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng);

}  // namespace intentrec
