#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "intentrec/engagement.hpp"

namespace intentrec {

enum class ShortEncoderKind { Transformer, Mean };

enum class NumericFeature { Duration, EpisodePosition, TimeGap };

struct FeatureConfig {
    int d_item = 16;
    // Embedding widths for action type, genre, movie/show and time-since-release.
    int d_action = 4;
    int d_genre = 4;
    int d_movie_show = 4;
    int d_tsr = 4;
    int d_short = 16;
    int short_model_dim = 16;
    int short_heads = 2;
    int short_ffn = 32;
    ShortEncoderKind short_encoder = ShortEncoderKind::Transformer;
    std::int64_t window_seconds = kSecondsPerWeek;
    std::vector<NumericFeature> numerics{NumericFeature::Duration, NumericFeature::EpisodePosition};
    // Min-max bounds; values outside are clipped.
    double duration_min = 0.0;
    double duration_max = 7200.0;
    double gap_log_max = 17.0;  // log1p(seconds) upper bound for the time-gap scalar

    int d_full() const;
    void validate() const;
};

struct EncoderConfig {
    int d_model = 32;
    int layers = 1;
    int heads = 2;
    int d_ffn = 64;

    void validate(const std::string& name) const;
};

enum class IntentField { ActionType, Genre, MovieShow, TimeSinceRelease };

struct IntentHeadSpec {
    std::string name;
    IntentField field = IntentField::ActionType;
    int cardinality = 2;
    bool multi_label = false;
    // Empty means every label is evaluated.
    std::vector<bool> core_mask;

    void validate() const;
};

// The four heads with cardinalities 11 / 21 / 2 / 3. Genre is multi-label and
// action type evaluates only the five core labels.
std::vector<IntentHeadSpec> default_heads();

enum class Variant {
    V0,  // item-only
    V1,  // flat multi-task: one shared encoder, heads not fed forward
    V2,  // hierarchical: intent encoder -> Z -> item encoder
    V3,  // V2 plus short-term window features
};

const char* variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct ModelConfig {
    int num_items = 500;
    FeatureConfig features;
    EncoderConfig intent_encoder;
    EncoderConfig item_encoder;
    int d_proj = 16;
    int time_buckets = 64;
    Variant variant = Variant::V3;
    // Active heads; must be empty for V0 and non-empty otherwise.
    std::vector<IntentHeadSpec> heads = default_heads();
    std::uint64_t init_seed = 1;

    bool uses_short_term() const { return variant == Variant::V3; }
    bool hierarchical() const { return variant == Variant::V2 || variant == Variant::V3; }
    void validate() const;
};

}  // namespace intentrec
