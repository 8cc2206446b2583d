#pragma once

// Ranking metrics over held-out next items and next intents.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentrec/engagement.hpp"
#include "intentrec/model.hpp"
#include "intentrec/trainer.hpp"

namespace intentrec {

// 1 / (1 + #higher + (#equal - 1) / 2). Ties count at their expected rank.
double reciprocal_rank(std::span<const double> scores, int target);
// Best rank over a positive set.
double best_reciprocal_rank(std::span<const double> scores, std::span<const int> positives);

double mrr(std::span<const double> reciprocal_ranks);
double wmrr(std::span<const double> reciprocal_ranks, std::span<const double> durations);

struct IntentSample {
    std::vector<double> scores;
    int label = -1;             // single-label heads
    std::vector<int> positives; // multi-label heads
};

// Unweighted. Single-label heads with a core mask skip samples whose label is
// outside the mask. Returns nullopt when no sample qualifies.
std::optional<double> intent_mrr(std::span<const IntentSample> samples, const IntentHeadSpec& spec);

struct TTestResult {
    double mean_difference = 0.0;
    std::optional<double> t;
    std::optional<double> p_value;
    std::size_t n = 0;
    bool degenerate() const { return !t.has_value(); }
};

// Paired two-sided Student's t on a - b.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

struct UserResult {
    std::int64_t user_id = 0;
    double reciprocal_rank = 0.0;
    double duration = 0.0;
};

struct EvalReport {
    std::string variant;
    double item_mrr = 0.0;
    double item_wmrr = 0.0;
    std::map<std::string, double> intent_mrr;
    std::map<std::string, std::size_t> intent_counts;
    std::vector<UserResult> users;

    nlohmann::json to_json() const;
    static EvalReport from_json(const nlohmann::json& j);
    std::string to_csv() const;
    std::vector<double> reciprocal_ranks() const;
};

// Each test user's final interaction is predicted from everything before it.
// Users with fewer than two interactions are rejected.
EvalReport evaluate(const IntentRecModel& model, std::span<const UserSequence> users);

void write_report(const std::filesystem::path& json_path, const EvalReport& report);
EvalReport read_report(const std::filesystem::path& json_path);

// Relative change in percent, (b - a) / a * 100.
double percent_delta(double baseline, double value);

struct Comparison {
    double mrr_delta_pct = 0.0;
    double wmrr_delta_pct = 0.0;
    std::map<std::string, double> intent_delta_pct;
    TTestResult t_test;

    nlohmann::json to_json() const;
};

// Users are matched by id; both reports must cover the same users.
Comparison compare(const EvalReport& baseline, const EvalReport& candidate);

}  // namespace intentrec
