#include "intentrec/features.hpp"

#include <algorithm>
#include <cmath>

#include "intentrec/errors.hpp"

namespace intentrec {

FeatureTables FeatureTables::create(ParameterSet& params, const FeatureConfig& config, int num_items,
                                    std::mt19937_64& rng) {
    auto table = [&](const char* name, int rows, int cols) {
        return &params.add(std::string("features.") + name,
                           normal_init(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols), 0.1, rng));
    };
    FeatureTables t;
    t.item = table("item_embedding", num_items, config.d_item);
    t.action = table("action_embedding", kNumActionTypes, config.d_action);
    t.genre = table("genre_embedding", kNumGenres, config.d_genre);
    t.movie_show = table("movie_show_embedding", kNumMovieShow, config.d_movie_show);
    t.tsr = table("tsr_embedding", kNumTsrBuckets, config.d_tsr);
    return t;
}

std::vector<double> numeric_features(const Interaction& interaction, const Interaction* previous,
                                     const FeatureConfig& config) {
    std::vector<double> out;
    out.reserve(config.numerics.size());
    for (NumericFeature f : config.numerics) {
        double v = 0.0;
        switch (f) {
            case NumericFeature::Duration:
                v = (interaction.duration - config.duration_min) / (config.duration_max - config.duration_min);
                break;
            case NumericFeature::EpisodePosition:
                v = interaction.episode_position;
                break;
            case NumericFeature::TimeGap:
                if (previous) {
                    const auto gap = static_cast<double>(interaction.timestamp - previous->timestamp);
                    v = std::log1p(std::max(0.0, gap)) / config.gap_log_max;
                }
                break;
        }
        out.push_back(std::clamp(v, 0.0, 1.0));
    }
    return out;
}

namespace {

std::vector<std::size_t> column(std::span<const Interaction> xs, int Interaction::*field) {
    std::vector<std::size_t> out;
    out.reserve(xs.size());
    for (const auto& x : xs) {
        if (x.*field < 0) throw IndexError("negative categorical id " + std::to_string(x.*field));
        out.push_back(static_cast<std::size_t>(x.*field));
    }
    return out;
}

}  // namespace

Var build_feature_matrix(Graph& g, std::span<const Interaction> interactions, const FeatureTables& tables,
                         const FeatureConfig& config) {
    if (interactions.empty()) throw ContractError("build_feature_matrix: empty sequence");
    std::vector<std::vector<std::size_t>> genre_groups;
    genre_groups.reserve(interactions.size());
    std::vector<double> numerics;
    for (std::size_t k = 0; k < interactions.size(); ++k) {
        const auto& it = interactions[k];
        std::vector<std::size_t> group;
        for (int gid : it.genres) {
            if (gid < 0) throw IndexError("negative genre id " + std::to_string(gid));
            group.push_back(static_cast<std::size_t>(gid));
        }
        genre_groups.push_back(std::move(group));
        auto nums = numeric_features(it, k ? &interactions[k - 1] : nullptr, config);
        numerics.insert(numerics.end(), nums.begin(), nums.end());
    }
    std::vector<Var> parts{
        gather_rows(g.param(*tables.item), column(interactions, &Interaction::item_id)),
        gather_rows(g.param(*tables.action), column(interactions, &Interaction::action_type)),
        mean_pool_rows(g.param(*tables.genre), genre_groups),
        gather_rows(g.param(*tables.movie_show), column(interactions, &Interaction::movie_show)),
        gather_rows(g.param(*tables.tsr), column(interactions, &Interaction::time_since_release)),
    };
    if (!config.numerics.empty()) {
        parts.push_back(g.constant(Tensor({interactions.size(), config.numerics.size()}, std::move(numerics))));
    }
    return concat_cols(parts);
}

Var build_interaction_feature(Graph& g, const Interaction& interaction, const Interaction* previous,
                              const FeatureTables& tables, const FeatureConfig& config) {
    if (!previous) return build_feature_matrix(g, std::span<const Interaction>(&interaction, 1), tables, config);
    // the time-gap scalar needs the predecessor; build both rows and keep the last
    const Interaction pair[2] = {*previous, interaction};
    return slice_rows(build_feature_matrix(g, pair, tables, config), 1, 2);
}

std::size_t select_window(std::span<const std::int64_t> timestamps, std::size_t k, std::int64_t window) {
    if (k >= timestamps.size()) throw IndexError("select_window: position out of range");
    if (window < 0) throw ContractError("select_window: window must be non-negative");
    const std::int64_t threshold = timestamps[k] - window;
    // first i in [0, k] with timestamps[i] >= T_k - H
    auto it = std::lower_bound(timestamps.begin(), timestamps.begin() + static_cast<std::ptrdiff_t>(k), threshold);
    return static_cast<std::size_t>(it - timestamps.begin());
}

ShortTermEncoder ShortTermEncoder::create(ParameterSet& params, const FeatureConfig& config, std::mt19937_64& rng) {
    ShortTermEncoder enc;
    enc.kind = config.short_encoder;
    const auto d_model = static_cast<std::size_t>(config.short_model_dim);
    enc.input = Linear::create(params, "short_term.input", static_cast<std::size_t>(config.d_full()), d_model, rng);
    if (enc.kind == ShortEncoderKind::Transformer) {
        enc.layer = EncoderLayer::create(params, "short_term.layer", config.short_model_dim, config.short_heads,
                                         config.short_ffn, rng);
    }
    enc.output = Linear::create(params, "short_term.output", d_model, static_cast<std::size_t>(config.d_short), rng);
    return enc;
}

Var ShortTermEncoder::encode(Graph& g, Var window_features) const {
    Var h = input(g, window_features);
    if (layer) h = layer->forward(g, h, /*causal=*/false);
    return output(g, mean_rows(h));
}

Var ShortTermEncoder::encode_sequence(Graph& g, Var features, std::span<const std::int64_t> timestamps,
                                      std::int64_t window) const {
    const std::size_t n = features.rows();
    if (timestamps.size() != n) throw ContractError("short-term encoder: timestamp count mismatch");
    Var projected = input(g, features);
    std::vector<Var> pooled;
    pooled.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t pos = select_window(timestamps, k, window);
        Var h = slice_rows(projected, pos, k + 1);
        if (layer) h = layer->forward(g, h, /*causal=*/false);
        pooled.push_back(mean_rows(h));
    }
    return output(g, concat_rows(pooled));
}

InputFeatureSeq build_input_sequence(Graph& g, std::span<const Interaction> interactions,
                                     const FeatureTables& tables, const ShortTermEncoder* short_term,
                                     const FeatureConfig& config) {
    InputFeatureSeq seq;
    seq.timestamps.reserve(interactions.size());
    for (const auto& it : interactions) seq.timestamps.push_back(it.timestamp);
    seq.features = build_feature_matrix(g, interactions, tables, config);
    if (short_term) {
        seq.short_term = short_term->encode_sequence(g, seq.features, seq.timestamps, config.window_seconds);
        const Var parts[2] = {seq.features, *seq.short_term};
        seq.concat = concat_cols(parts);
    } else {
        seq.concat = seq.features;
    }
    return seq;
}

}  // namespace intentrec
