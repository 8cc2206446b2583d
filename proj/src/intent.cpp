#include "intentrec/intent.hpp"

#include "intentrec/errors.hpp"

namespace intentrec {

HeadOutput predict_intent_head(Graph& g, Var encoding, const Linear& fc, const IntentHeadSpec& spec) {
    if (fc.out() != static_cast<std::size_t>(spec.cardinality)) {
        throw ContractError("head '" + spec.name + "' has " + std::to_string(fc.out()) + " outputs, spec says " +
                            std::to_string(spec.cardinality));
    }
    HeadOutput out;
    out.logits = fc(g, encoding);
    out.scores = spec.multi_label ? sigmoid(out.logits) : softmax(out.logits);
    return out;
}

IntentAggregation aggregate_intent_embedding(Graph& g, std::span<const Var> scores,
                                             std::span<const Linear> projections, Var attention) {
    if (scores.empty()) throw ContractError("aggregate_intent_embedding: needs at least one head");
    if (scores.size() != projections.size()) throw ContractError("aggregate_intent_embedding: head count mismatch");
    IntentAggregation agg;
    std::vector<Var> logits;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        agg.projected.push_back(projections[i](g, scores[i]));
        logits.push_back(matmul(agg.projected.back(), attention));
    }
    agg.alpha_logits = concat_cols(logits);
    agg.alpha = softmax(agg.alpha_logits);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        Var term = scale_rows(agg.projected[i], slice_cols(agg.alpha, i, i + 1));
        agg.z = i == 0 ? term : agg.z + term;
    }
    return agg;
}

IntentPredictor IntentPredictor::create(ParameterSet& params, const ModelConfig& config, std::size_t d_in,
                                        std::mt19937_64& rng) {
    IntentPredictor p;
    p.encoder = SequenceEncoder::create(params, "intent.encoder", d_in, config.intent_encoder, config.time_buckets, rng);
    p.specs = config.heads;
    const auto d_model = static_cast<std::size_t>(config.intent_encoder.d_model);
    const auto d_proj = static_cast<std::size_t>(config.d_proj);
    for (const auto& spec : config.heads) {
        p.heads.push_back(Linear::create(params, "intent.head." + spec.name, d_model,
                                         static_cast<std::size_t>(spec.cardinality), rng));
    }
    for (const auto& spec : config.heads) {
        p.projections.push_back(Linear::create(params, "intent.projection." + spec.name,
                                               static_cast<std::size_t>(spec.cardinality), d_proj, rng));
    }
    p.attention = &params.add("intent.attention", xavier_uniform(d_proj, 1, rng));
    return p;
}

IntentBundle IntentPredictor::forward(Graph& g, Var input, std::span<const std::int64_t> timestamps) const {
    IntentBundle bundle;
    bundle.encoding = encoder.forward(g, input, timestamps, /*causal=*/true);
    std::vector<Var> scores;
    for (std::size_t i = 0; i < heads.size(); ++i) {
        bundle.heads.push_back(predict_intent_head(g, bundle.encoding, heads[i], specs[i]));
        scores.push_back(bundle.heads.back().scores);
    }
    bundle.aggregation = aggregate_intent_embedding(g, scores, projections, g.param(*attention));
    return bundle;
}

}  // namespace intentrec
