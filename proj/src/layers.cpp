#include "intentrec/layers.hpp"

#include <algorithm>
#include <cmath>

#include "intentrec/errors.hpp"

namespace intentrec {

Tensor normal_init(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> data(rows * cols);
    for (double& v : data) v = dist(rng);
    return Tensor({rows, cols}, std::move(data));
}

Linear Linear::create(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out,
                      std::mt19937_64& rng, bool with_bias) {
    Linear l;
    l.weight = &params.add(name + ".weight", xavier_uniform(in, out, rng));
    if (with_bias) l.bias = &params.add(name + ".bias", Tensor::zeros({out}));
    return l;
}

Var Linear::operator()(Graph& g, Var x) const {
    Var y = matmul(x, g.param(*weight));
    return bias ? add_row(y, g.param(*bias)) : y;
}

LayerNormParams LayerNormParams::create(ParameterSet& params, const std::string& name, std::size_t width) {
    LayerNormParams ln;
    ln.gain = &params.add(name + ".gain", Tensor::filled({width}, 1.0));
    ln.bias = &params.add(name + ".bias", Tensor::zeros({width}));
    return ln;
}

Var LayerNormParams::operator()(Graph& g, Var x) const { return layer_norm(x, g.param(*gain), g.param(*bias)); }

Var multi_head_attention(Var q, Var k, Var v, int heads, bool causal) {
    const std::size_t d = q.cols();
    const auto h = static_cast<std::size_t>(heads);
    if (h == 1) return scaled_dot_attention(q, k, v, causal);
    const std::size_t width = d / h;
    std::vector<Var> parts;
    parts.reserve(h);
    for (std::size_t i = 0; i < h; ++i) {
        const std::size_t b = i * width, e = b + width;
        parts.push_back(scaled_dot_attention(slice_cols(q, b, e), slice_cols(k, b, e), slice_cols(v, b, e), causal));
    }
    return concat_cols(parts);
}

EncoderLayer EncoderLayer::create(ParameterSet& params, const std::string& name, int d_model, int heads, int d_ffn,
                                  std::mt19937_64& rng) {
    if (heads < 1 || d_model % heads != 0) {
        throw ConfigError(name + ": d_model " + std::to_string(d_model) + " not divisible by " +
                          std::to_string(heads) + " heads");
    }
    const auto d = static_cast<std::size_t>(d_model);
    const auto f = static_cast<std::size_t>(d_ffn);
    EncoderLayer layer;
    layer.heads = heads;
    layer.query = Linear::create(params, name + ".query", d, d, rng);
    layer.key = Linear::create(params, name + ".key", d, d, rng);
    layer.value = Linear::create(params, name + ".value", d, d, rng);
    layer.output = Linear::create(params, name + ".output", d, d, rng);
    layer.attention_norm = LayerNormParams::create(params, name + ".attention_norm", d);
    layer.ffn_in = Linear::create(params, name + ".ffn_in", d, f, rng);
    layer.ffn_out = Linear::create(params, name + ".ffn_out", f, d, rng);
    layer.ffn_norm = LayerNormParams::create(params, name + ".ffn_norm", d);
    return layer;
}

Var EncoderLayer::forward(Graph& g, Var x, bool causal) const {
    Var attended = multi_head_attention(query(g, x), key(g, x), value(g, x), heads, causal);
    Var h = attention_norm(g, x + output(g, attended));
    Var ff = ffn_out(g, gelu(ffn_in(g, h)));
    return ffn_norm(g, h + ff);
}

namespace {
constexpr double kMinBucketSeconds = 60.0;
constexpr double kMaxBucketSeconds = 3.0 * 365.0 * 86400.0;
}  // namespace

std::size_t time_bucket(std::int64_t delta_seconds, int buckets) {
    if (buckets < 2) throw ConfigError("time_buckets must be >= 2");
    const double delta = static_cast<double>(delta_seconds);
    if (delta < kMinBucketSeconds) return 0;
    const double span = std::log(kMaxBucketSeconds / kMinBucketSeconds);
    const double pos = std::log(delta / kMinBucketSeconds) / span * static_cast<double>(buckets - 2);
    const auto b = 1 + static_cast<std::size_t>(std::floor(pos));
    return std::min(b, static_cast<std::size_t>(buckets - 1));
}

std::vector<std::size_t> timestamp_buckets(std::span<const std::int64_t> timestamps, int buckets) {
    std::vector<std::size_t> out;
    out.reserve(timestamps.size());
    for (std::int64_t t : timestamps) out.push_back(time_bucket(std::max<std::int64_t>(0, t - timestamps.front()), buckets));
    return out;
}

Var timestamp_positional_encoding(Graph& g, std::span<const std::int64_t> timestamps, Parameter& table) {
    const auto buckets = timestamp_buckets(timestamps, static_cast<int>(table.value.rows()));
    return gather_rows(g.param(table), buckets);
}

SequenceEncoder SequenceEncoder::create(ParameterSet& params, const std::string& name, std::size_t d_in,
                                        const EncoderConfig& config, int time_buckets, std::mt19937_64& rng) {
    const auto d = static_cast<std::size_t>(config.d_model);
    SequenceEncoder enc;
    enc.reduce = Linear::create(params, name + ".reduce", d_in, d, rng);
    enc.input_norm = LayerNormParams::create(params, name + ".input_norm", d);
    enc.time_table = &params.add(name + ".time_embedding",
                                 normal_init(static_cast<std::size_t>(time_buckets), d, 0.1, rng));
    for (int l = 0; l < config.layers; ++l) {
        enc.layers.push_back(EncoderLayer::create(params, name + ".layer" + std::to_string(l), config.d_model,
                                                  config.heads, config.d_ffn, rng));
    }
    return enc;
}

Var SequenceEncoder::forward(Graph& g, Var x, std::span<const std::int64_t> timestamps, bool causal) const {
    if (x.cols() != reduce.in()) {
        throw ContractError("encoder input width " + std::to_string(x.cols()) + " does not match configured " +
                            std::to_string(reduce.in()));
    }
    if (timestamps.size() != x.rows()) {
        throw ContractError("encoder got " + std::to_string(timestamps.size()) + " timestamps for " +
                            std::to_string(x.rows()) + " positions");
    }
    Var h = input_norm(g, reduce(g, x));
    h = h + timestamp_positional_encoding(g, timestamps, *time_table);
    for (const auto& layer : layers) h = layer.forward(g, h, causal);
    return h;
}

}  // namespace intentrec
