#include "intentrec/item.hpp"

#include "intentrec/errors.hpp"

namespace intentrec {

ItemPredictor ItemPredictor::create(ParameterSet& params, const std::string& name, std::size_t d_in,
                                    const EncoderConfig& config, int num_items, int time_buckets,
                                    std::mt19937_64& rng) {
    if (num_items < 2) throw ConfigError("item head needs at least 2 items");
    ItemPredictor p;
    p.encoder = SequenceEncoder::create(params, name + ".encoder", d_in, config, time_buckets, rng);
    p.head = Linear::create(params, name + ".head", static_cast<std::size_t>(config.d_model),
                            static_cast<std::size_t>(num_items), rng);
    return p;
}

ItemOutput ItemPredictor::forward(Graph& g, Var input, std::span<const std::int64_t> timestamps) const {
    ItemOutput out;
    out.encoding = encoder.forward(g, input, timestamps, /*causal=*/true);
    out.logits = head(g, out.encoding);
    return out;
}

Var predict_item_scores(Graph& g, Var encoding, const Linear& head) { return softmax(head(g, encoding)); }

}  // namespace intentrec
