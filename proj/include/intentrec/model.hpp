#pragma once

// The full next-item model, wired according to its Variant:
//   V0  F -> item encoder -> item head
//   V1  F -> shared encoder -> item head, and -> intent heads (not fed forward)
//   V2  F -> intent encoder -> heads -> Z;  F ⊕ Z -> item encoder -> item head
//   V3  as V2 with F ⊕ S in place of F

#include <optional>
#include <span>
#include <vector>

#include "intentrec/engagement.hpp"
#include "intentrec/features.hpp"
#include "intentrec/intent.hpp"
#include "intentrec/item.hpp"
#include "intentrec/model_config.hpp"

namespace intentrec {

struct ModelOutputs {
    InputFeatureSeq input;
    std::optional<IntentBundle> intent;  // V2 / V3
    std::vector<HeadOutput> heads;       // one per active head, V1..V3
    Var item_input;
    ItemOutput item;
};

class IntentRecModel {
   public:
    explicit IntentRecModel(ModelConfig config);

    ModelOutputs forward(Graph& g, std::span<const Interaction> interactions) const;

    const ModelConfig& config() const noexcept { return config_; }
    ParameterSet& params() noexcept { return params_; }
    const ParameterSet& params() const noexcept { return params_; }

    // Parameters of the intent prediction heads (FC_i).
    std::vector<const Parameter*> intent_head_parameters() const;

   private:
    ModelConfig config_;
    ParameterSet params_;
    FeatureTables tables_;
    std::optional<ShortTermEncoder> short_term_;
    std::optional<IntentPredictor> intent_;
    std::vector<Linear> flat_heads_;
    ItemPredictor item_;
};

}  // namespace intentrec
