#include "intentrec/model_config.hpp"

#include <algorithm>

#include "intentrec/errors.hpp"

namespace intentrec {

int FeatureConfig::d_full() const {
    return d_item + d_action + d_genre + d_movie_show + d_tsr + static_cast<int>(numerics.size());
}

void FeatureConfig::validate() const {
    for (int d : {d_item, d_action, d_genre, d_movie_show, d_tsr, d_short, short_model_dim, short_ffn}) {
        if (d < 1) throw ConfigError("feature dimensions must be >= 1");
    }
    if (short_heads < 1 || short_model_dim % short_heads != 0)
        throw ConfigError("short_model_dim must be divisible by short_heads");
    if (window_seconds < 0) throw ConfigError("window must be >= 0");
    if (!(duration_max > duration_min)) throw ConfigError("duration_max must exceed duration_min");
    if (!(gap_log_max > 0)) throw ConfigError("gap_log_max must be > 0");
}

void EncoderConfig::validate(const std::string& name) const {
    if (d_model < 1 || layers < 0 || d_ffn < 1) throw ConfigError(name + ": dimensions must be positive");
    if (heads < 1 || d_model % heads != 0)
        throw ConfigError(name + ": d_model " + std::to_string(d_model) + " not divisible by " +
                          std::to_string(heads) + " heads");
}

void IntentHeadSpec::validate() const {
    if (cardinality < 2) throw ConfigError("head '" + name + "': cardinality must be >= 2");
    if (!core_mask.empty()) {
        if (core_mask.size() != static_cast<std::size_t>(cardinality))
            throw ConfigError("head '" + name + "': core mask length must equal cardinality");
        if (std::none_of(core_mask.begin(), core_mask.end(), [](bool b) { return b; }))
            throw ConfigError("head '" + name + "': core mask selects no labels");
    }
    const int expected = field == IntentField::ActionType ? kNumActionTypes
                         : field == IntentField::Genre    ? kNumGenres
                         : field == IntentField::MovieShow ? kNumMovieShow
                                                          : kNumTsrBuckets;
    if (cardinality != expected)
        throw ConfigError("head '" + name + "': cardinality " + std::to_string(cardinality) +
                          " does not match its field (" + std::to_string(expected) + ")");
    if (multi_label && field != IntentField::Genre)
        throw ConfigError("head '" + name + "': only the genre field carries multiple labels");
}

std::vector<IntentHeadSpec> default_heads() {
    std::vector<bool> core(kNumActionTypes, false);
    std::fill_n(core.begin(), kNumCoreActions, true);
    return {
        {"action_type", IntentField::ActionType, kNumActionTypes, false, core},
        {"genre", IntentField::Genre, kNumGenres, true, {}},
        {"movie_show", IntentField::MovieShow, kNumMovieShow, false, {}},
        {"tsr", IntentField::TimeSinceRelease, kNumTsrBuckets, false, {}},
    };
}

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::V0: return "v0";
        case Variant::V1: return "v1";
        case Variant::V2: return "v2";
        case Variant::V3: return "v3";
    }
    return "?";
}

Variant parse_variant(const std::string& name) {
    std::string lower = name;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "v0") return Variant::V0;
    if (lower == "v1") return Variant::V1;
    if (lower == "v2") return Variant::V2;
    if (lower == "v3") return Variant::V3;
    throw ConfigError("unknown variant '" + name + "' (expected v0, v1, v2 or v3)");
}

void ModelConfig::validate() const {
    if (num_items < 2) throw ConfigError("num_items must be >= 2");
    features.validate();
    item_encoder.validate("item encoder");
    if (variant == Variant::V2 || variant == Variant::V3) intent_encoder.validate("intent encoder");
    if (d_proj < 1) throw ConfigError("d_proj must be >= 1");
    if (time_buckets < 2) throw ConfigError("time_buckets must be >= 2");
    if (variant == Variant::V0 && !heads.empty())
        throw ConfigError("variant v0 takes no intent heads, got " + std::to_string(heads.size()));
    if (variant != Variant::V0 && heads.empty())
        throw ConfigError(std::string("variant ") + variant_name(variant) + " needs at least one intent head");
    for (std::size_t i = 0; i < heads.size(); ++i) {
        heads[i].validate();
        for (std::size_t j = 0; j < i; ++j)
            if (heads[j].name == heads[i].name) throw ConfigError("duplicate head '" + heads[i].name + "'");
    }
}

}  // namespace intentrec
