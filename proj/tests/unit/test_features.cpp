#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "intentrec/errors.hpp"
#include "intentrec/features.hpp"

using namespace intentrec;
using intentrec::testing::random_user;

namespace {

FeatureConfig small_features() {
    FeatureConfig f;
    f.d_item = 4;
    f.d_action = f.d_genre = f.d_movie_show = f.d_tsr = 2;
    f.d_short = 4;
    f.short_model_dim = 4;
    f.short_heads = 2;
    f.short_ffn = 8;
    return f;
}

struct FeatureRig {
    FeatureConfig config = small_features();
    ParameterSet params;
    FeatureTables tables;
    ShortTermEncoder short_term;
    explicit FeatureRig(int num_items = 12, std::uint64_t seed = 1) {
        std::mt19937_64 rng(seed);
        tables = FeatureTables::create(params, config, num_items, rng);
        short_term = ShortTermEncoder::create(params, config, rng);
    }
};

std::size_t brute_window(std::span<const std::int64_t> t, std::size_t k, std::int64_t h) {
    for (std::size_t i = 0; i <= k; ++i)
        if (t[k] - t[i] <= h) return i;
    return k;
}

}  // namespace

TEST(FeatureDims, AdditiveWidth) {
    const FeatureConfig f = small_features();
    EXPECT_EQ(f.d_full(), 4 + 8 + 2);
    FeatureRig s;
    std::mt19937_64 rng(2);
    const UserSequence u = random_user(rng, 3, 12);
    Graph g;
    Var row = build_interaction_feature(g, u.interactions[0], nullptr, s.tables, s.config);
    EXPECT_EQ(row.rows(), 1u);
    EXPECT_EQ(row.cols(), 14u);
}

TEST(FeatureDims, PaperScaleInputWidth) {
    const RunConfig paper = profile("paper");
    EXPECT_EQ(paper.model.features.d_full(), 523);
    EXPECT_EQ(paper.model.features.d_full() + paper.model.features.d_short, 723);
}

TEST(InteractionFeature, SingleGenreSlotIsEmbeddingRow) {
    FeatureRig s;
    std::mt19937_64 rng(3);
    UserSequence u = random_user(rng, 1, 12);
    u.interactions[0].genres = {5};
    Graph g;
    Var row = build_interaction_feature(g, u.interactions[0], nullptr, s.tables, s.config);
    const std::size_t off = static_cast<std::size_t>(s.config.d_item + s.config.d_action);
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(row.value()[off + j], s.tables.genre->value.at(5, j));
}

TEST(InteractionFeature, MultiGenreSlotIsMean) {
    FeatureRig s;
    std::mt19937_64 rng(3);
    UserSequence u = random_user(rng, 1, 12);
    u.interactions[0].genres = {2, 9};
    Graph g;
    Var row = build_interaction_feature(g, u.interactions[0], nullptr, s.tables, s.config);
    const std::size_t off = static_cast<std::size_t>(s.config.d_item + s.config.d_action);
    for (std::size_t j = 0; j < 2; ++j)
        EXPECT_NEAR(row.value()[off + j], 0.5 * (s.tables.genre->value.at(2, j) + s.tables.genre->value.at(9, j)), 1e-15);
}

TEST(InteractionFeature, DurationClipsAtMax) {
    FeatureConfig f = small_features();
    Interaction x;
    x.duration = f.duration_max * 3;
    x.episode_position = 0.25;
    const auto v = numeric_features(x, nullptr, f);
    ASSERT_EQ(v.size(), 2u);
    EXPECT_EQ(v[0], 1.0);
    EXPECT_EQ(v[1], 0.25);
    x.duration = -5;
    EXPECT_EQ(numeric_features(x, nullptr, f)[0], 0.0);
}

TEST(InteractionFeature, TimeGapIsZeroAtFirstPosition) {
    FeatureConfig f = small_features();
    f.numerics = {NumericFeature::TimeGap};
    Interaction a, b;
    a.timestamp = 100;
    b.timestamp = 100 + 3600;
    EXPECT_EQ(numeric_features(a, nullptr, f)[0], 0.0);
    EXPECT_NEAR(numeric_features(b, &a, f)[0], std::log1p(3600.0) / f.gap_log_max, 1e-15);
}

TEST(FeatureMatrix, RowsMatchSingleBuilds) {
    FeatureRig s;
    std::mt19937_64 rng(4);
    const UserSequence u = random_user(rng, 5, 12);
    Graph g;
    Var m = build_feature_matrix(g, u.interactions, s.tables, s.config);
    for (std::size_t k = 0; k < 5; ++k) {
        Var row = build_interaction_feature(g, u.interactions[k], k ? &u.interactions[k - 1] : nullptr, s.tables, s.config);
        for (std::size_t j = 0; j < row.cols(); ++j) EXPECT_EQ(m.value().at(k, j), row.value()[j]);
    }
}

TEST(FeatureMatrix, RejectsOutOfRangeIds) {
    FeatureRig s;
    std::mt19937_64 rng(4);
    UserSequence u = random_user(rng, 2, 12);
    u.interactions[1].item_id = 12;
    Graph g;
    EXPECT_THROW(build_feature_matrix(g, u.interactions, s.tables, s.config), IndexError);
}

TEST(SelectWindow, HandCase) {
    const std::vector<std::int64_t> t{10, 50, 100, 105};
    // 1-based pos 3 for k = 4 is index 2 for k = 3.
    EXPECT_EQ(select_window(t, 3, 10), 2u);
}

TEST(SelectWindow, ZeroWindowIsSelf) {
    const std::vector<std::int64_t> t{1, 2, 4, 8};
    for (std::size_t k = 0; k < t.size(); ++k) EXPECT_EQ(select_window(t, k, 0), k);
}

TEST(SelectWindow, WideWindowIsWholeHistory) {
    const std::vector<std::int64_t> t{1, 2, 4, 8};
    EXPECT_EQ(select_window(t, 3, 7), 0u);
    EXPECT_EQ(select_window(t, 3, 1'000'000), 0u);
}

TEST(SelectWindow, MatchesLinearScan) {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> len(1, 40);
    std::uniform_int_distribution<std::int64_t> gap(1, 5000), h(0, 40000);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<std::int64_t> t{gap(rng)};
        const int n = len(rng);
        for (int i = 1; i < n; ++i) t.push_back(t.back() + gap(rng));
        const std::int64_t window = h(rng);
        for (std::size_t k = 0; k < t.size(); ++k) ASSERT_EQ(select_window(t, k, window), brute_window(t, k, window));
    }
}

TEST(SelectWindow, RejectsBadArguments) {
    const std::vector<std::int64_t> t{1, 2, 3};
    EXPECT_THROW(select_window(t, 3, 1), IndexError);
    EXPECT_THROW(select_window(t, 1, -1), ContractError);
}

TEST(ShortTerm, SingleElementWindowDependsOnlyOnThatRow) {
    FeatureRig s;
    std::mt19937_64 rng(5);
    UserSequence u = random_user(rng, 3, 12);
    // Gaps of a week or more keep every window to one element under a one-day window.
    for (std::size_t k = 1; k < 3; ++k) u.interactions[k].timestamp = u.interactions[k - 1].timestamp + 8 * kSecondsPerDay;
    Graph g;
    Var f = build_feature_matrix(g, u.interactions, s.tables, s.config);
    Var seq = s.short_term.encode_sequence(g, f, std::vector<std::int64_t>{u.interactions[0].timestamp,
                                                                           u.interactions[1].timestamp,
                                                                           u.interactions[2].timestamp},
                                           kSecondsPerDay);
    Var alone = s.short_term.encode(g, slice_rows(f, 2, 3));
    for (std::size_t j = 0; j < alone.cols(); ++j) EXPECT_NEAR(seq.value().at(2, j), alone.value()[j], 1e-12);
}

TEST(ShortTerm, ChangesOutsideWindowAreInvisible) {
    FeatureRig s;
    std::mt19937_64 rng(6);
    UserSequence u = random_user(rng, 6, 12);
    // Interactions 0-2 are far in the past; 3-5 sit within one day.
    for (std::size_t k = 3; k < 6; ++k) u.interactions[k].timestamp = u.interactions[2].timestamp + 30 * kSecondsPerDay + 600 * static_cast<std::int64_t>(k);
    UserSequence v = u;
    std::swap(v.interactions[0].item_id, v.interactions[1].item_id);
    v.interactions[2].action_type = (v.interactions[2].action_type + 3) % kNumActionTypes;
    auto run = [&](const UserSequence& us) {
        Graph g;
        InputFeatureSeq in = build_input_sequence(g, us.interactions, s.tables, &s.short_term, s.config);
        return in.short_term->value();
    };
    const Tensor a = run(u), b = run(v);
    for (std::size_t k = 3; k < 6; ++k)
        for (std::size_t j = 0; j < a.cols(); ++j) EXPECT_NEAR(a.at(k, j), b.at(k, j), 1e-12);
}

TEST(ShortTerm, GradientMatchesFiniteDifferences) {
    FeatureRig s;
    std::mt19937_64 rng(8);
    const UserSequence u = random_user(rng, 4, 12);
    std::vector<std::int64_t> ts;
    for (const auto& x : u.interactions) ts.push_back(x.timestamp);
    const double err = grad_check(
        [&](Graph& g) {
            Var f = build_feature_matrix(g, u.interactions, s.tables, s.config);
            return sum(s.short_term.encode_sequence(g, f, ts, 10 * kSecondsPerDay));
        },
        s.params);
    EXPECT_LT(err, 1e-4);
}

TEST(ShortTerm, MeanEncoderGradient) {
    FeatureRig s;
    s.config.short_encoder = ShortEncoderKind::Mean;
    ParameterSet ps;
    std::mt19937_64 rng(8);
    FeatureTables tables = FeatureTables::create(ps, s.config, 12, rng);
    ShortTermEncoder enc = ShortTermEncoder::create(ps, s.config, rng);
    EXPECT_FALSE(enc.layer.has_value());
    const UserSequence u = random_user(rng, 4, 12);
    const double err = grad_check(
        [&](Graph& g) {
            return sum(build_input_sequence(g, u.interactions, tables, &enc, s.config).concat);
        },
        ps);
    EXPECT_LT(err, 1e-4);
}

TEST(InputSequence, LengthTwoShape) {
    FeatureRig s;
    std::mt19937_64 rng(9);
    const UserSequence u = random_user(rng, 2, 12);
    Graph g;
    InputFeatureSeq in = build_input_sequence(g, u.interactions, s.tables, &s.short_term, s.config);
    EXPECT_EQ(in.concat.rows(), 2u);
    EXPECT_EQ(in.concat.cols(), static_cast<std::size_t>(s.config.d_full() + s.config.d_short));
    Graph g2;
    InputFeatureSeq plain = build_input_sequence(g2, u.interactions, s.tables, nullptr, s.config);
    EXPECT_FALSE(plain.short_term.has_value());
    EXPECT_EQ(plain.concat.cols(), static_cast<std::size_t>(s.config.d_full()));
}

TEST(InputSequence, FutureInteractionDoesNotLeak) {
    FeatureRig s;
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        UserSequence u = random_user(rng, 6, 12);
        UserSequence v = u;
        v.interactions[4].item_id = (v.interactions[4].item_id + 5) % 12;
        v.interactions[4].duration += 1234;
        v.interactions[5].genres = {20};
        Graph ga, gb;
        const Tensor a = build_input_sequence(ga, u.interactions, s.tables, &s.short_term, s.config).concat.value();
        const Tensor b = build_input_sequence(gb, v.interactions, s.tables, &s.short_term, s.config).concat.value();
        for (std::size_t k = 0; k < 4; ++k)
            for (std::size_t j = 0; j < a.cols(); ++j) ASSERT_NEAR(a.at(k, j), b.at(k, j), 1e-12);
    }
}
