#pragma once

// Clustering and inspection of learned intent embeddings.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentrec/engagement.hpp"
#include "intentrec/model.hpp"

namespace intentrec {

using PointSet = std::vector<std::vector<double>>;

struct KMeansResult {
    std::vector<int> assignments;
    PointSet centers;
    double inertia = 0.0;
    std::vector<double> inertia_trace;  // after each Lloyd iteration
    int iterations = 0;
};

KMeansResult kmeans_pp(const PointSet& points, int k, std::uint64_t seed, int max_iter = 100, double tol = 1e-6);

struct Projection {
    PointSet coords;
    PointSet components;  // out_dim rows, each of length d
    std::vector<double> explained_variance_ratio;
};

// Sign of each component is fixed so its largest-magnitude loading is positive.
Projection pca_project(const PointSet& points, int out_dim = 2);

double cluster_purity(std::span<const int> assignments, std::span<const int> labels);
double adjusted_rand_index(std::span<const int> assignments, std::span<const int> labels);

struct UserIntentEmbedding {
    std::int64_t user_id = 0;
    std::vector<double> z;
    std::vector<double> alpha;
    int planted = -1;
};

// Z and softmaxed attention at each user's final position. planted, when
// given, is matched by user_id and uses the final latent state.
std::vector<UserIntentEmbedding> collect_intent_embeddings(const IntentRecModel& model,
                                                           std::span<const UserSequence> users,
                                                           std::span<const LatentTrace> planted = {});

struct PrimaryIntent {
    std::int64_t user_id = 0;
    int head = 0;
    bool tie = false;
    double margin = 0.0;  // top alpha minus runner-up
};

struct AttentionReport {
    std::vector<std::string> head_names;
    std::vector<PrimaryIntent> users;
    std::vector<std::size_t> histogram;
    // Per head, users with that primary head sorted by descending margin.
    std::vector<std::vector<std::int64_t>> exemplars;

    nlohmann::json to_json() const;
};

// Argmax of alpha per user; ties go to the lowest head index and are flagged.
PrimaryIntent primary_intent(std::span<const double> alpha, std::int64_t user_id = 0);
AttentionReport attention_report(std::span<const UserIntentEmbedding> set, std::vector<std::string> head_names,
                                 std::size_t exemplars = 10);

}  // namespace intentrec
