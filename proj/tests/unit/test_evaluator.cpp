#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "intentrec/errors.hpp"
#include "intentrec/evaluator.hpp"

using namespace intentrec;
namespace fs = std::filesystem;

namespace {

// Average 1/rank over every ordering of the tied block, by full sort.
double sorted_oracle(const std::vector<double>& scores, int target) {
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
    std::size_t first = 0;
    while (scores[order[first]] != scores[target]) ++first;
    std::size_t last = first;
    while (last < order.size() && scores[order[last]] == scores[target]) ++last;
    // Under a uniformly random tie-break the target's rank is uniform over
    // the tied block; the stated rule uses the expected rank.
    const double expected_rank = 0.5 * (static_cast<double>(first + 1) + static_cast<double>(last));
    return 1.0 / expected_rank;
}

IntentHeadSpec head(int cardinality, bool multi = false) {
    IntentHeadSpec h;
    h.name = "h";
    h.cardinality = cardinality;
    h.multi_label = multi;
    return h;
}

EvalReport tiny_report(std::vector<double> rr, std::int64_t first_id = 1) {
    EvalReport r;
    r.variant = "V3";
    for (std::size_t i = 0; i < rr.size(); ++i)
        r.users.push_back({first_id + static_cast<std::int64_t>(i), rr[i], 10.0 * static_cast<double>(i + 1)});
    r.item_mrr = mrr(r.reciprocal_ranks());
    std::vector<double> d;
    for (const auto& u : r.users) d.push_back(u.duration);
    r.item_wmrr = wmrr(r.reciprocal_ranks(), d);
    return r;
}

}  // namespace

TEST(ReciprocalRank, UniqueMaximumIsOne) {
    const std::vector<double> s{0.1, 3.0, -2.0};
    EXPECT_EQ(reciprocal_rank(s, 1), 1.0);
}

TEST(ReciprocalRank, FourthOfTen) {
    const std::vector<double> s{9, 8, 7, 6, 5, 4, 3, 2, 1, 0};
    EXPECT_EQ(reciprocal_rank(s, 3), 0.25);
}

TEST(ReciprocalRank, TieUsesExpectedRank) {
    const std::vector<double> s{1.0, 1.0, 1.0, 0.0};
    EXPECT_EQ(reciprocal_rank(s, 2), 0.5);
}

TEST(ReciprocalRank, MatchesFullSortOracle) {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> len(1, 30), coarse(0, 4);
    std::normal_distribution<double> fine;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = len(rng);
        std::vector<double> s(static_cast<std::size_t>(n));
        // Half the trials draw from five levels so ties are common.
        for (auto& x : s) x = trial % 2 ? coarse(rng) : fine(rng);
        const int target = std::uniform_int_distribution<int>(0, n - 1)(rng);
        ASSERT_DOUBLE_EQ(reciprocal_rank(s, target), sorted_oracle(s, target)) << "trial " << trial;
    }
}

TEST(ReciprocalRank, OutOfRangeTarget) {
    const std::vector<double> s{1, 2};
    EXPECT_THROW(reciprocal_rank(s, 2), IndexError);
}

TEST(Mrr, TwoUsers) {
    const std::vector<double> rr{1.0, 0.5};
    EXPECT_EQ(mrr(rr), 0.75);
    EXPECT_EQ(wmrr(rr, std::vector<double>{3, 1}), 0.875);
}

TEST(Mrr, EqualDurationsGiveMrr) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    std::vector<double> rr(97);
    for (auto& x : rr) x = u(rng);
    EXPECT_DOUBLE_EQ(wmrr(rr, std::vector<double>(rr.size(), 42.0)), mrr(rr));
}

TEST(Mrr, ContractErrors) {
    EXPECT_THROW(mrr(std::vector<double>{}), ContractError);
    EXPECT_THROW(wmrr(std::vector<double>{1.0}, std::vector<double>{0.0}), ContractError);
}

TEST(IntentMrr, BinaryHeadAlwaysRight) {
    std::vector<IntentSample> samples;
    for (int i = 0; i < 10; ++i) samples.push_back({{i % 2 ? -1.0 : 1.0, i % 2 ? 1.0 : -1.0}, i % 2, {}});
    EXPECT_EQ(intent_mrr(samples, head(2)).value(), 1.0);
}

TEST(IntentMrr, UniformOverThreeIsHalf) {
    std::vector<IntentSample> samples{{{0, 0, 0}, 0, {}}, {{0, 0, 0}, 2, {}}};
    EXPECT_DOUBLE_EQ(intent_mrr(samples, head(3)).value(), 0.5);
}

TEST(IntentMrr, MultiLabelUsesBestPositive) {
    // Positives sit at ranks 1 and 5.
    std::vector<IntentSample> samples{{{9, 8, 7, 6, 5, 4}, -1, {0, 4}}};
    EXPECT_EQ(intent_mrr(samples, head(6, true)).value(), 1.0);
}

TEST(IntentMrr, CoreMaskFiltersSamples) {
    IntentHeadSpec spec = head(3);
    spec.core_mask = {true, true, false};
    std::vector<IntentSample> samples{{{1, 0, 0}, 0, {}}, {{1, 0, 0}, 2, {}}};
    EXPECT_EQ(intent_mrr(samples, spec).value(), 1.0);
    std::vector<IntentSample> none{{{1, 0, 0}, 2, {}}};
    EXPECT_FALSE(intent_mrr(none, spec).has_value());
}

TEST(TTest, IdenticalIsDegenerate) {
    const std::vector<double> a{0.1, 0.5, 0.2};
    const TTestResult r = paired_t_test(a, a);
    EXPECT_TRUE(r.degenerate());
    EXPECT_FALSE(r.p_value.has_value());
}

TEST(TTest, ClosedFormTwoDegreesOfFreedom) {
    // Differences 1, 2, 3: mean 2, sd 1, t = 2 sqrt 3. With two degrees of
    // freedom the two-sided p is 1 - t / sqrt(t^2 + 2).
    const std::vector<double> a{1, 2, 3}, b{0, 0, 0};
    const TTestResult r = paired_t_test(a, b);
    const double t = 2.0 * std::sqrt(3.0);
    EXPECT_NEAR(*r.t, t, 1e-12);
    EXPECT_NEAR(*r.p_value, 1.0 - t / std::sqrt(t * t + 2.0), 1e-10);
}

TEST(TTest, ConsistentShiftIsSignificant) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 1e-3);
    std::vector<double> a(100), b(100);
    for (std::size_t i = 0; i < 100; ++i) {
        b[i] = 0.3 + noise(rng);
        a[i] = b[i] + 0.1 + noise(rng);
    }
    const TTestResult r = paired_t_test(a, b);
    // The df = 99 two-sided critical value at 0.01 is about 2.63.
    EXPECT_GT(*r.t, 2.63);
    EXPECT_LT(*r.p_value, 0.01);
    const TTestResult s = paired_t_test(b, a);
    EXPECT_EQ(*s.t, -*r.t);
    EXPECT_EQ(*s.p_value, *r.p_value);
}

TEST(Report, JsonRoundTrip) {
    const fs::path dir = fs::temp_directory_path() / "intentrec_report";
    fs::create_directories(dir);
    EvalReport r = tiny_report({1.0, 0.5, 0.25});
    r.item_wmrr = 0.6;
    r.intent_mrr = {{"genre", 0.4}, {"tsr", 0.9}};
    r.intent_counts = {{"genre", 3}, {"tsr", 2}};
    write_report(dir / "r.json", r);
    EXPECT_TRUE(fs::exists(dir / "r.csv"));
    const EvalReport back = read_report(dir / "r.json");
    EXPECT_EQ(back.to_json(), r.to_json());
    EXPECT_EQ(back.to_csv(), r.to_csv());
}

TEST(Report, EvaluateIsDeterministic) {
    const IntentRecModel m(intentrec::testing::micro_model());
    const auto users = intentrec::testing::random_users(2, 9, 6, m.config().num_items);
    const EvalReport a = evaluate(m, users), b = evaluate(m, users);
    EXPECT_EQ(a.to_json(), b.to_json());
    EXPECT_EQ(a.users.size(), 9u);
    EXPECT_GE(a.item_mrr, 0.0);
    EXPECT_LE(a.item_mrr, 1.0);
    EXPECT_EQ(a.intent_mrr.size(), 4u);
}

TEST(Report, RejectsTooShortUser) {
    const IntentRecModel m(intentrec::testing::micro_model());
    auto users = intentrec::testing::random_users(2, 2, 1, m.config().num_items);
    EXPECT_THROW(evaluate(m, users), DataError);
}

TEST(Compare, DeltaAndAntisymmetricT) {
    const EvalReport a = tiny_report({0.5, 0.25, 0.2, 0.1});
    const EvalReport b = tiny_report({0.5, 0.5, 0.25, 0.2});
    const Comparison c = compare(a, b);
    EXPECT_NEAR(c.mrr_delta_pct, percent_delta(a.item_mrr, b.item_mrr), 1e-12);
    EXPECT_GT(c.mrr_delta_pct, 0.0);
    EXPECT_EQ(*compare(b, a).t_test.t, -*c.t_test.t);
    EXPECT_EQ(compare(a, a).mrr_delta_pct, 0.0);
}

TEST(Compare, MismatchedUsersRejected) {
    EXPECT_THROW(compare(tiny_report({0.5, 0.25}), tiny_report({0.5, 0.25}, 7)), DataError);
}
