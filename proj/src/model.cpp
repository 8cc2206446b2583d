#include "intentrec/model.hpp"

#include "intentrec/errors.hpp"

namespace intentrec {

IntentRecModel::IntentRecModel(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(config_.init_seed);
    const FeatureConfig& fc = config_.features;
    tables_ = FeatureTables::create(params_, fc, config_.num_items, rng);
    if (config_.uses_short_term()) short_term_ = ShortTermEncoder::create(params_, fc, rng);

    const auto d_input = static_cast<std::size_t>(fc.d_full() + (config_.uses_short_term() ? fc.d_short : 0));
    std::size_t d_item_input = d_input;
    if (config_.hierarchical()) {
        intent_ = IntentPredictor::create(params_, config_, d_input, rng);
        d_item_input += static_cast<std::size_t>(config_.d_proj);
    }
    item_ = ItemPredictor::create(params_, "item", d_item_input, config_.item_encoder, config_.num_items,
                                  config_.time_buckets, rng);
    if (config_.variant == Variant::V1) {
        const auto d_model = static_cast<std::size_t>(config_.item_encoder.d_model);
        for (const auto& spec : config_.heads) {
            flat_heads_.push_back(Linear::create(params_, "shared.head." + spec.name, d_model,
                                                 static_cast<std::size_t>(spec.cardinality), rng));
        }
    }
}

ModelOutputs IntentRecModel::forward(Graph& g, std::span<const Interaction> interactions) const {
    if (interactions.empty()) throw ContractError("forward: empty interaction sequence");
    ModelOutputs out;
    out.input = build_input_sequence(g, interactions, tables_, short_term_ ? &*short_term_ : nullptr,
                                     config_.features);
    const auto& ts = out.input.timestamps;
    if (intent_) {
        out.intent = intent_->forward(g, out.input.concat, ts);
        out.heads = out.intent->heads;
        const Var parts[2] = {out.input.concat, out.intent->aggregation.z};
        out.item_input = concat_cols(parts);
    } else {
        out.item_input = out.input.concat;
    }
    out.item = item_.forward(g, out.item_input, ts);
    for (std::size_t i = 0; i < flat_heads_.size(); ++i)
        out.heads.push_back(predict_intent_head(g, out.item.encoding, flat_heads_[i], config_.heads[i]));
    return out;
}

std::vector<const Parameter*> IntentRecModel::intent_head_parameters() const {
    std::vector<const Parameter*> out;
    auto add = [&](const Linear& l) {
        out.push_back(l.weight);
        if (l.bias) out.push_back(l.bias);
    };
    if (intent_) for (const auto& h : intent_->heads) add(h);
    for (const auto& h : flat_heads_) add(h);
    return out;
}

}  // namespace intentrec
