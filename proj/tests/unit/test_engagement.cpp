#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "intentrec/engagement.hpp"
#include "intentrec/errors.hpp"

using namespace intentrec;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("intentrec_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

GeneratorConfig small_config(int users = 50) {
    GeneratorConfig c;
    c.num_users = users;
    c.seq_len_min = 6;
    c.seq_len_max = 12;
    c.latent_intents = 3;
    c.seed = 7;
    return c;
}

}  // namespace

TEST(Catalog, DeterministicForSeed) {
    EXPECT_EQ(generate_catalog(10, 7), generate_catalog(10, 7));
    EXPECT_NE(generate_catalog(10, 7), generate_catalog(10, 8));
}

TEST(Catalog, PaperScaleItemCount) {
    const Catalog c = generate_catalog(35000, 1);
    EXPECT_EQ(c.size(), 35000u);
    for (std::size_t i = 0; i < c.size(); i += 997) EXPECT_EQ(c.items[i].item_id, static_cast<int>(i));
}

TEST(Catalog, EveryRecencyBucketPopulated) {
    const Catalog c = generate_catalog(100, 3);
    std::array<int, kNumTsrBuckets> counts{};
    for (const auto& item : c.items) ++counts[static_cast<std::size_t>(tsr_bucket(c.anchor_timestamp - item.release_timestamp))];
    for (int n : counts) EXPECT_GT(n, 0);
}

TEST(TsrBucket, Boundaries) {
    EXPECT_EQ(tsr_bucket(0), 0);
    EXPECT_EQ(tsr_bucket(kSecondsPerWeek), 0);
    EXPECT_EQ(tsr_bucket(kSecondsPerWeek + 1), 1);
    EXPECT_EQ(tsr_bucket(kSecondsPerMonth), 1);
    EXPECT_EQ(tsr_bucket(kSecondsPerMonth + 1), 2);
}

TEST(Users, BitIdenticalForFixedSeed) {
    const Catalog c = generate_catalog(60, 7);
    const auto a = generate_users(c, small_config());
    const auto b = generate_users(c, small_config());
    EXPECT_EQ(a.users, b.users);
    EXPECT_EQ(a.latent, b.latent);
}

TEST(Users, TimestampsStrictlyIncreaseAndRecordsValidate) {
    const Catalog c = generate_catalog(60, 7);
    const auto gen = generate_users(c, small_config(200));
    ASSERT_EQ(gen.users.size(), 200u);
    for (const auto& u : gen.users) {
        EXPECT_GE(u.size(), 6u);
        EXPECT_LE(u.size(), 12u);
        for (std::size_t k = 1; k < u.size(); ++k) EXPECT_GT(u.interactions[k].timestamp, u.interactions[k - 1].timestamp);
        EXPECT_NO_THROW(validate_sequence(u, 60));
    }
}

TEST(Users, ConcentratedProfilesConcentrateGenres) {
    GeneratorConfig cfg = small_config(300);
    cfg.genre_concentration = 0.9;
    cfg.seq_len_min = 20;
    cfg.seq_len_max = 30;
    const Catalog c = generate_catalog(400, 2);
    const auto gen = generate_users(c, cfg);
    double total = 0.0;
    for (std::size_t u = 0; u < gen.users.size(); ++u) {
        int hits = 0;
        const auto& seq = gen.users[u].interactions;
        for (std::size_t k = 0; k < seq.size(); ++k) {
            const int home = gen.intents[static_cast<std::size_t>(gen.latent[u].states[k])].home_genre;
            hits += std::find(seq[k].genres.begin(), seq[k].genres.end(), home) != seq[k].genres.end();
        }
        total += static_cast<double>(hits) / static_cast<double>(seq.size());
    }
    EXPECT_GE(total / static_cast<double>(gen.users.size()), 0.8);
}

TEST(Users, RejectsBadConfig) {
    const Catalog c = generate_catalog(10, 1);
    GeneratorConfig cfg = small_config();
    cfg.latent_intents = 1;
    EXPECT_THROW(generate_users(c, cfg), ConfigError);
    cfg = small_config();
    cfg.seq_len_min = 1;
    EXPECT_THROW(generate_users(c, cfg), ConfigError);
}

TEST(Jsonl, EmptyRoundTrip) {
    const fs::path dir = temp_dir("empty");
    write_jsonl(dir / "e.jsonl", {});
    EXPECT_EQ(fs::file_size(dir / "e.jsonl"), 0u);
    EXPECT_TRUE(read_jsonl(dir / "e.jsonl").empty());
}

TEST(Jsonl, HundredUsersRoundTrip) {
    const fs::path dir = temp_dir("rt");
    const Catalog c = generate_catalog(50, 1);
    const auto gen = generate_users(c, small_config(100));
    write_jsonl(dir / "u.jsonl", gen.users);
    EXPECT_EQ(read_jsonl(dir / "u.jsonl", 50), gen.users);
    write_latent_jsonl(dir / "l.jsonl", gen.latent);
    EXPECT_EQ(read_latent_jsonl(dir / "l.jsonl"), gen.latent);
    write_catalog(dir / "c.json", c);
    EXPECT_EQ(read_catalog(dir / "c.json"), c);
}

TEST(Jsonl, RejectsOutOfRangeActionType) {
    const fs::path dir = temp_dir("bad");
    const Catalog c = generate_catalog(50, 1);
    auto users = generate_users(c, small_config(1)).users;
    users[0].interactions[0].action_type = 11;
    // write_jsonl does not validate, so the bad record reaches disk.
    write_jsonl(dir / "bad.jsonl", users);
    try {
        read_jsonl(dir / "bad.jsonl", 50);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("action_type"), std::string::npos);
    }
}

TEST(Jsonl, RejectsNonIncreasingTimestamps) {
    const Catalog c = generate_catalog(50, 1);
    auto u = generate_users(c, small_config(1)).users[0];
    u.interactions[2].timestamp = u.interactions[1].timestamp;
    EXPECT_THROW(validate_sequence(u, 50), DataError);
}

TEST(Jsonl, RejectsMalformedLine) {
    const fs::path dir = temp_dir("malformed");
    std::ofstream(dir / "m.jsonl") << "{not json}\n";
    EXPECT_THROW(read_jsonl(dir / "m.jsonl"), DataError);
}

TEST(Split, HundredUsersGivesPaperRatio) {
    const Catalog c = generate_catalog(50, 1);
    const auto users = generate_users(c, small_config(100)).users;
    const DatasetSplit s = split_dataset(users, {}, 1);
    EXPECT_EQ(s.train.size(), 86u);
    EXPECT_EQ(s.val.size(), 7u);
    EXPECT_EQ(s.test.size(), 7u);
}

TEST(Split, AllTrain) {
    const Catalog c = generate_catalog(50, 1);
    const auto users = generate_users(c, small_config(30)).users;
    const DatasetSplit s = split_dataset(users, {1.0, 0.0, 0.0}, 1);
    EXPECT_EQ(s.train.size(), 30u);
    EXPECT_TRUE(s.val.empty());
    EXPECT_TRUE(s.test.empty());
}

TEST(Split, DisjointAndDeterministic) {
    const Catalog c = generate_catalog(50, 1);
    const auto users = generate_users(c, small_config(123)).users;
    const DatasetSplit s = split_dataset(users, {}, 4);
    std::set<std::int64_t> seen;
    std::size_t total = 0;
    for (const auto* part : {&s.train, &s.val, &s.test})
        for (const auto& u : *part) {
            EXPECT_TRUE(seen.insert(u.user_id).second) << "user " << u.user_id << " appears twice";
            ++total;
        }
    EXPECT_EQ(total, users.size());
    const DatasetSplit again = split_dataset(users, {}, 4);
    EXPECT_EQ(s.test, again.test);
}

TEST(Split, RejectsRatiosNotSummingToOne) {
    const Catalog c = generate_catalog(50, 1);
    const auto users = generate_users(c, small_config(10)).users;
    EXPECT_THROW(split_dataset(users, {0.5, 0.2, 0.2}, 1), ConfigError);
}
