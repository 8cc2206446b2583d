#pragma once

// User engagement records, the synthetic planted-intent generator, and JSONL
// persistence.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace intentrec {

inline constexpr int kNumActionTypes = 11;
inline constexpr int kNumGenres = 21;
inline constexpr int kNumMovieShow = 2;
inline constexpr int kNumTsrBuckets = 3;
// Action ids 0..4 are the play-related "core" types.
inline constexpr int kNumCoreActions = 5;
inline constexpr int kMaxGenresPerInteraction = 3;

inline constexpr std::int64_t kSecondsPerHour = 3600;
inline constexpr std::int64_t kSecondsPerDay = 86400;
inline constexpr std::int64_t kSecondsPerWeek = 7 * kSecondsPerDay;
inline constexpr std::int64_t kSecondsPerMonth = 30 * kSecondsPerDay;

// Reference "now" for generated catalogs and user timelines.
inline constexpr std::int64_t kGenerationAnchor = 1'700'000'000;

struct Interaction {
    int item_id = 0;
    int action_type = 0;
    std::vector<int> genres;
    int movie_show = 0;
    int time_since_release = 0;
    std::int64_t timestamp = 0;
    double duration = 0.0;
    double episode_position = 0.0;

    bool operator==(const Interaction&) const = default;
};

struct UserSequence {
    std::int64_t user_id = 0;
    std::vector<Interaction> interactions;

    std::size_t size() const noexcept { return interactions.size(); }
    bool operator==(const UserSequence&) const = default;
};

struct CatalogItem {
    int item_id = 0;
    std::vector<int> genres;
    int movie_show = 0;
    std::int64_t release_timestamp = 0;
    double popularity = 1.0;

    bool operator==(const CatalogItem&) const = default;
};

struct Catalog {
    std::int64_t anchor_timestamp = kGenerationAnchor;
    std::vector<CatalogItem> items;

    std::size_t size() const noexcept { return items.size(); }
    bool operator==(const Catalog&) const = default;
};

// Planted latent-intent state per interaction. Never a model input.
struct LatentTrace {
    std::int64_t user_id = 0;
    std::vector<int> states;

    bool operator==(const LatentTrace&) const = default;
};

struct GeneratorConfig {
    int num_users = 2000;
    int seq_len_min = 12;
    int seq_len_max = 30;
    int latent_intents = 6;
    // Probability mass each latent intent puts on its home genre.
    double genre_concentration = 0.6;
    // Range of per-user probability of staying in the current latent intent.
    double stickiness_min = 0.7;
    double stickiness_max = 0.92;
    // Median gap before an intent switch.
    double switch_gap_days = 6.0;
    // Sampling weight multiplier for items outside the drawn genre.
    double off_genre_weight = 0.002;
    // Chance that a continue/binge action re-engages the latest title.
    double repeat_probability = 1.0;
    std::uint64_t seed = 1;
};

// Generator-internal description of one latent intent.
struct LatentIntent {
    std::array<double, kNumActionTypes> action{};
    std::array<double, kNumGenres> genre{};
    std::array<double, kNumTsrBuckets> recency{};
    int home_genre = 0;
    double movie_probability = 0.5;
    double session_gap_median = 0.0;  // seconds, same-intent successor
    double duration_median = 0.0;     // seconds
};

struct IntentProfile {
    std::vector<std::vector<double>> transition;  // K x K, rows sum to 1
    std::vector<double> initial;
};

struct GeneratedUsers {
    std::vector<UserSequence> users;
    std::vector<LatentTrace> latent;
    std::vector<LatentIntent> intents;
    std::vector<IntentProfile> profiles;
};

int tsr_bucket(std::int64_t seconds_since_release);

Catalog generate_catalog(int num_items, std::uint64_t seed);
std::vector<LatentIntent> generate_latent_intents(const GeneratorConfig& config);
GeneratedUsers generate_users(const Catalog& catalog, const GeneratorConfig& config);

// Throws DataError naming the offending field. num_items < 0 skips the
// catalog-range check on item_id.
void validate_interaction(const Interaction& interaction, int num_items = -1);
void validate_sequence(const UserSequence& sequence, int num_items = -1);

void write_jsonl(const std::filesystem::path& path, std::span<const UserSequence> sequences);
std::vector<UserSequence> read_jsonl(const std::filesystem::path& path, int num_items = -1);

void write_latent_jsonl(const std::filesystem::path& path, std::span<const LatentTrace> traces);
std::vector<LatentTrace> read_latent_jsonl(const std::filesystem::path& path);

void write_catalog(const std::filesystem::path& path, const Catalog& catalog);
Catalog read_catalog(const std::filesystem::path& path);

struct DatasetSplit {
    std::vector<UserSequence> train;
    std::vector<UserSequence> val;
    std::vector<UserSequence> test;
};

struct SplitRatios {
    double train = 0.86;
    double val = 0.07;
    double test = 0.07;
};

DatasetSplit split_dataset(std::span<const UserSequence> sequences, SplitRatios ratios,
                           std::uint64_t seed);

}  // namespace intentrec
