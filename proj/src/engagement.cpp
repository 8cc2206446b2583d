#include "intentrec/engagement.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "intentrec/errors.hpp"

namespace intentrec {

namespace {

using json = nlohmann::json;

// Seeds an engine from (seed, stream, tag) so per-user generation is independent.
std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      static_cast<std::uint32_t>(tag)};
    return std::mt19937_64(seq);
}

template <typename Weights>
std::size_t sample_index(const Weights& weights, std::mt19937_64& rng) {
    double total = 0.0;
    for (double w : weights) total += w;
    std::uniform_real_distribution<double> u(0.0, total);
    double x = u(rng);
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        last_positive = i;
        if (x < weights[i]) return i;
        x -= weights[i];
    }
    return last_positive;
}

template <typename Array>
void normalize(Array& a) {
    double total = 0.0;
    for (double v : a) total += v;
    for (double& v : a) v /= total;
}

double lognormal(std::mt19937_64& rng, double median, double sigma) {
    std::normal_distribution<double> n(0.0, sigma);
    return median * std::exp(n(rng));
}

}  // namespace

int tsr_bucket(std::int64_t seconds_since_release) {
    if (seconds_since_release <= kSecondsPerWeek) return 0;
    if (seconds_since_release <= kSecondsPerMonth) return 1;
    return 2;
}

// ---- catalog -----------------------------------------------------------------

Catalog generate_catalog(int num_items, std::uint64_t seed) {
    if (num_items < 1) throw ConfigError("num_items must be >= 1, got " + std::to_string(num_items));
    auto rng = make_engine(seed, 0, 0xCA7A106);
    std::uniform_int_distribution<int> genre_dist(0, kNumGenres - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Catalog catalog;
    catalog.anchor_timestamp = kGenerationAnchor;
    catalog.items.resize(static_cast<std::size_t>(num_items));

    std::vector<int> rank(static_cast<std::size_t>(num_items));
    std::iota(rank.begin(), rank.end(), 0);
    std::shuffle(rank.begin(), rank.end(), rng);

    for (int i = 0; i < num_items; ++i) {
        CatalogItem& item = catalog.items[static_cast<std::size_t>(i)];
        item.item_id = i;
        std::set<int> genres{genre_dist(rng)};
        const double extra = unit(rng);
        const int wanted = extra < 0.15 ? 3 : (extra < 0.55 ? 2 : 1);
        while (static_cast<int>(genres.size()) < wanted) genres.insert(genre_dist(rng));
        item.genres.assign(genres.begin(), genres.end());
        item.movie_show = unit(rng) < 0.45 ? 1 : 0;

        const double r = unit(rng);
        std::int64_t age;
        if (r < 0.08) {
            age = static_cast<std::int64_t>(unit(rng) * static_cast<double>(kSecondsPerWeek));
        } else if (r < 0.20) {
            age = kSecondsPerWeek + 1 +
                  static_cast<std::int64_t>(unit(rng) * static_cast<double>(kSecondsPerMonth - kSecondsPerWeek - 1));
        } else {
            age = kSecondsPerMonth + 1 +
                  static_cast<std::int64_t>(unit(rng) * static_cast<double>(3 * 365 * kSecondsPerDay));
        }
        item.release_timestamp = catalog.anchor_timestamp - age;
        item.popularity = 1.0 / std::pow(1.0 + rank[static_cast<std::size_t>(i)], 0.8);
    }
    return catalog;
}

// ---- latent intents and users ------------------------------------------------

std::vector<LatentIntent> generate_latent_intents(const GeneratorConfig& config) {
    if (config.latent_intents < 2) {
        throw ConfigError("latent_intents must be >= 2, got " + std::to_string(config.latent_intents));
    }
    auto rng = make_engine(config.seed, 0, 0x1A7E17);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto k = static_cast<std::size_t>(config.latent_intents);

    std::vector<int> genre_order(kNumGenres);
    std::iota(genre_order.begin(), genre_order.end(), 0);
    std::shuffle(genre_order.begin(), genre_order.end(), rng);

    std::vector<int> core_order(kNumCoreActions);
    std::iota(core_order.begin(), core_order.end(), 0);
    std::shuffle(core_order.begin(), core_order.end(), rng);

    static constexpr std::array<std::array<double, kNumTsrBuckets>, 3> kRecency{{
        {0.60, 0.30, 0.10},  // fresh releases
        {0.05, 0.15, 0.80},  // back catalog
        {0.20, 0.35, 0.45},  // indifferent
    }};
    static constexpr std::array<double, 4> kGapMedians{2 * 3600.0, 6 * 3600.0, 12 * 3600.0, 20 * 3600.0};

    const double c = std::clamp(config.genre_concentration, 0.0, 1.0);
    std::vector<LatentIntent> intents(k);
    for (std::size_t a = 0; a < k; ++a) {
        LatentIntent& li = intents[a];
        li.home_genre = genre_order[a % kNumGenres];
        // Neighbouring intents on a ring share a genre, so one title rarely pins down its intent.
        const int second_genre = genre_order[(a + 1) % k % kNumGenres];
        li.genre.fill((1.0 - c) * 0.5 / kNumGenres);
        li.genre[static_cast<std::size_t>(li.home_genre)] += c;
        li.genre[static_cast<std::size_t>(second_genre)] += (1.0 - c) * 0.5;
        normalize(li.genre);

        const int dominant = core_order[a % kNumCoreActions];
        const int secondary = core_order[(a + 2) % kNumCoreActions];
        li.action.fill(0.0);
        for (int t = 0; t < kNumCoreActions; ++t) li.action[static_cast<std::size_t>(t)] = 0.1 / 3.0;
        li.action[static_cast<std::size_t>(dominant)] = 0.55;
        li.action[static_cast<std::size_t>(secondary)] = 0.20;
        const int loud_noncore = kNumCoreActions + static_cast<int>(a % (kNumActionTypes - kNumCoreActions));
        for (int t = kNumCoreActions; t < kNumActionTypes; ++t)
            li.action[static_cast<std::size_t>(t)] = t == loud_noncore ? 0.07 : 0.08 / 5.0;
        normalize(li.action);

        li.recency = kRecency[a % kRecency.size()];
        li.movie_probability = (a % 2 == 0) ? 0.85 : 0.15;
        li.session_gap_median = kGapMedians[a % kGapMedians.size()] * (0.75 + 0.5 * unit(rng));
        li.duration_median = 600.0 + 6600.0 * unit(rng);
    }
    return intents;
}

namespace {

constexpr double kOffBucketFactor = 0.1;
constexpr double kOffFormatFactor = 0.2;

IntentProfile make_profile(const GeneratorConfig& config, std::mt19937_64& rng) {
    const auto k = static_cast<std::size_t>(config.latent_intents);
    std::gamma_distribution<double> gamma(0.6, 1.0);
    std::uniform_real_distribution<double> stick(config.stickiness_min, config.stickiness_max);
    IntentProfile profile;
    profile.initial.resize(k);
    for (double& v : profile.initial) v = gamma(rng) + 1e-3;
    normalize(profile.initial);
    const double s = stick(rng);
    profile.transition.assign(k, std::vector<double>(k, 0.0));
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b)
            profile.transition[a][b] = (1.0 - s) * profile.initial[b] + (a == b ? s : 0.0);
        normalize(profile.transition[a]);
    }
    return profile;
}

int pick_new_item(const Catalog& catalog, const LatentIntent& li, std::int64_t ts, double off_genre,
                  std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto genre = static_cast<int>(sample_index(li.genre, rng));
    const auto bucket = static_cast<int>(sample_index(li.recency, rng));
    const int format = unit(rng) < li.movie_probability ? 1 : 0;
    std::vector<double> weights(catalog.size(), 0.0);
    for (std::size_t i = 0; i < catalog.size(); ++i) {
        const CatalogItem& item = catalog.items[i];
        if (item.release_timestamp > ts) continue;
        double w = item.popularity;
        if (std::find(item.genres.begin(), item.genres.end(), genre) == item.genres.end()) w *= off_genre;
        if (tsr_bucket(ts - item.release_timestamp) != bucket) w *= kOffBucketFactor;
        if (item.movie_show != format) w *= kOffFormatFactor;
        weights[i] = w;
    }
    if (std::all_of(weights.begin(), weights.end(), [](double w) { return w <= 0.0; })) {
        // nothing released yet: fall back to the oldest item
        auto oldest = std::min_element(catalog.items.begin(), catalog.items.end(), [](const auto& a, const auto& b) {
            return a.release_timestamp < b.release_timestamp;
        });
        return oldest->item_id;
    }
    return static_cast<int>(sample_index(weights, rng));
}

}  // namespace

GeneratedUsers generate_users(const Catalog& catalog, const GeneratorConfig& config) {
    if (catalog.size() == 0) throw ConfigError("cannot generate users from an empty catalog");
    if (config.num_users < 0) throw ConfigError("num_users must be >= 0");
    if (config.seq_len_min < 2 || config.seq_len_max < config.seq_len_min) {
        throw ConfigError("sequence length range must satisfy 2 <= min <= max, got [" +
                          std::to_string(config.seq_len_min) + ", " + std::to_string(config.seq_len_max) + "]");
    }
    GeneratedUsers out;
    out.intents = generate_latent_intents(config);
    const auto& intents = out.intents;

    for (int u = 0; u < config.num_users; ++u) {
        auto rng = make_engine(config.seed, static_cast<std::uint64_t>(u) + 1, 0x05E45);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::uniform_int_distribution<int> len_dist(config.seq_len_min, config.seq_len_max);

        IntentProfile profile = make_profile(config, rng);
        const int n = len_dist(rng);

        std::vector<int> states(static_cast<std::size_t>(n));
        states[0] = static_cast<int>(sample_index(profile.initial, rng));
        for (int i = 1; i < n; ++i)
            states[static_cast<std::size_t>(i)] =
                static_cast<int>(sample_index(profile.transition[static_cast<std::size_t>(states[i - 1])], rng));

        std::vector<std::int64_t> gaps(static_cast<std::size_t>(n), 0);
        for (int i = 1; i < n; ++i) {
            const bool same = states[static_cast<std::size_t>(i)] == states[static_cast<std::size_t>(i - 1)];
            const double median = same ? intents[static_cast<std::size_t>(states[static_cast<std::size_t>(i)])].session_gap_median
                                       : config.switch_gap_days * static_cast<double>(kSecondsPerDay);
            gaps[static_cast<std::size_t>(i)] =
                std::max<std::int64_t>(60, static_cast<std::int64_t>(lognormal(rng, median, same ? 0.8 : 0.3)));
        }
        const std::int64_t span = std::accumulate(gaps.begin(), gaps.end(), std::int64_t{0});
        const std::int64_t last = catalog.anchor_timestamp -
                                  static_cast<std::int64_t>(unit(rng) * 2.0 * static_cast<double>(kSecondsPerDay));
        std::int64_t ts = last - span;

        UserSequence seq;
        seq.user_id = u;
        seq.interactions.reserve(static_cast<std::size_t>(n));
        std::vector<std::vector<int>> history_by_state(intents.size());
        for (int i = 0; i < n; ++i) {
            ts += gaps[static_cast<std::size_t>(i)];
            const auto state = static_cast<std::size_t>(states[static_cast<std::size_t>(i)]);
            const LatentIntent& li = intents[state];
            Interaction it;
            it.action_type = static_cast<int>(sample_index(li.action, rng));
            it.timestamp = ts;

            const auto& past = history_by_state[state];
            int item = -1;
            if ((it.action_type == 1 || it.action_type == 2) && !past.empty() &&
                unit(rng) < config.repeat_probability) {
                item = past.back();  // continue watching / binge the latest title
            } else if (it.action_type == 4 && !past.empty()) {
                std::uniform_int_distribution<std::size_t> pick(0, past.size() - 1);
                item = past[pick(rng)];  // rewatch
            }
            if (item < 0) item = pick_new_item(catalog, li, ts, config.off_genre_weight, rng);

            const CatalogItem& ci = catalog.items[static_cast<std::size_t>(item)];
            it.item_id = item;
            it.genres = ci.genres;
            std::sort(it.genres.begin(), it.genres.end());
            it.movie_show = ci.movie_show;
            it.time_since_release = tsr_bucket(std::max<std::int64_t>(0, ts - ci.release_timestamp));
            it.duration = std::round(lognormal(rng, li.duration_median, 0.6));
            it.episode_position = ci.movie_show == 1 ? 0.0 : std::round(unit(rng) * 1000.0) / 1000.0;
            history_by_state[state].push_back(item);
            seq.interactions.push_back(std::move(it));
        }
        out.users.push_back(std::move(seq));
        out.latent.push_back(LatentTrace{u, std::move(states)});
        out.profiles.push_back(std::move(profile));
    }
    return out;
}

// ---- validation --------------------------------------------------------------

namespace {
[[noreturn]] void invalid(const std::string& field, const std::string& detail) {
    throw DataError("invalid field '" + field + "': " + detail);
}
}  // namespace

void validate_interaction(const Interaction& it, int num_items) {
    if (it.item_id < 0 || (num_items >= 0 && it.item_id >= num_items))
        invalid("item_id", std::to_string(it.item_id) + " outside catalog of " + std::to_string(num_items));
    if (it.action_type < 0 || it.action_type >= kNumActionTypes)
        invalid("action_type", std::to_string(it.action_type) + " not in [0, 11)");
    if (it.genres.empty() || it.genres.size() > kMaxGenresPerInteraction)
        invalid("genres", "expected 1..3 labels, got " + std::to_string(it.genres.size()));
    std::set<int> seen;
    for (int g : it.genres) {
        if (g < 0 || g >= kNumGenres) invalid("genres", std::to_string(g) + " not in [0, 21)");
        if (!seen.insert(g).second) invalid("genres", "duplicate label " + std::to_string(g));
    }
    if (it.movie_show != 0 && it.movie_show != 1) invalid("movie_show", std::to_string(it.movie_show) + " not in {0,1}");
    if (it.time_since_release < 0 || it.time_since_release >= kNumTsrBuckets)
        invalid("tsr", std::to_string(it.time_since_release) + " not in {0,1,2}");
    if (!std::isfinite(it.duration) || it.duration < 0) invalid("dur", "must be finite and >= 0");
    if (!std::isfinite(it.episode_position) || it.episode_position < 0 || it.episode_position > 1)
        invalid("ep", "must be in [0, 1]");
}

void validate_sequence(const UserSequence& seq, int num_items) {
    if (seq.interactions.size() < 2) {
        throw DataError("user " + std::to_string(seq.user_id) + ": invalid field 'interactions': need >= 2, got " +
                        std::to_string(seq.interactions.size()));
    }
    for (std::size_t i = 0; i < seq.interactions.size(); ++i) {
        validate_interaction(seq.interactions[i], num_items);
        if (i > 0 && seq.interactions[i].timestamp <= seq.interactions[i - 1].timestamp) {
            throw DataError("user " + std::to_string(seq.user_id) +
                            ": invalid field 'ts': timestamps must be strictly increasing at position " +
                            std::to_string(i));
        }
    }
}

// ---- JSONL -------------------------------------------------------------------

namespace {

json to_json(const Interaction& it) {
    return json{{"item_id", it.item_id},     {"action_type", it.action_type}, {"genres", it.genres},
                {"movie_show", it.movie_show}, {"tsr", it.time_since_release},  {"ts", it.timestamp},
                {"dur", it.duration},         {"ep", it.episode_position}};
}

Interaction interaction_from_json(const json& j) {
    Interaction it;
    it.item_id = j.at("item_id").get<int>();
    it.action_type = j.at("action_type").get<int>();
    it.genres = j.at("genres").get<std::vector<int>>();
    it.movie_show = j.at("movie_show").get<int>();
    it.time_since_release = j.at("tsr").get<int>();
    it.timestamp = j.at("ts").get<std::int64_t>();
    it.duration = j.at("dur").get<double>();
    it.episode_position = j.at("ep").get<double>();
    return it;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    return out;
}

std::ifstream open_for_read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return in;
}

template <typename F>
void for_each_line(const std::filesystem::path& path, F&& handle) {
    auto in = open_for_read(path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": parse error: " + e.what());
        }
        try {
            handle(j);
        } catch (const json::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

}  // namespace

void write_jsonl(const std::filesystem::path& path, std::span<const UserSequence> sequences) {
    auto out = open_for_write(path);
    for (const auto& seq : sequences) {
        json interactions = json::array();
        for (const auto& it : seq.interactions) interactions.push_back(to_json(it));
        out << json{{"user_id", seq.user_id}, {"interactions", std::move(interactions)}}.dump() << '\n';
    }
}

std::vector<UserSequence> read_jsonl(const std::filesystem::path& path, int num_items) {
    std::vector<UserSequence> result;
    for_each_line(path, [&](const json& j) {
        UserSequence seq;
        seq.user_id = j.at("user_id").get<std::int64_t>();
        for (const auto& ij : j.at("interactions")) seq.interactions.push_back(interaction_from_json(ij));
        validate_sequence(seq, num_items);
        result.push_back(std::move(seq));
    });
    return result;
}

void write_latent_jsonl(const std::filesystem::path& path, std::span<const LatentTrace> traces) {
    auto out = open_for_write(path);
    for (const auto& t : traces) out << json{{"user_id", t.user_id}, {"latent", t.states}}.dump() << '\n';
}

std::vector<LatentTrace> read_latent_jsonl(const std::filesystem::path& path) {
    std::vector<LatentTrace> result;
    for_each_line(path, [&](const json& j) {
        result.push_back(LatentTrace{j.at("user_id").get<std::int64_t>(), j.at("latent").get<std::vector<int>>()});
    });
    return result;
}

void write_catalog(const std::filesystem::path& path, const Catalog& catalog) {
    json items = json::array();
    for (const auto& it : catalog.items) {
        items.push_back(json{{"item_id", it.item_id},
                             {"genres", it.genres},
                             {"movie_show", it.movie_show},
                             {"release_ts", it.release_timestamp},
                             {"popularity", it.popularity}});
    }
    auto out = open_for_write(path);
    out << json{{"anchor", catalog.anchor_timestamp}, {"items", std::move(items)}}.dump() << '\n';
}

Catalog read_catalog(const std::filesystem::path& path) {
    auto in = open_for_read(path);
    Catalog catalog;
    try {
        json j = json::parse(in);
        catalog.anchor_timestamp = j.at("anchor").get<std::int64_t>();
        for (const auto& ij : j.at("items")) {
            CatalogItem it;
            it.item_id = ij.at("item_id").get<int>();
            it.genres = ij.at("genres").get<std::vector<int>>();
            it.movie_show = ij.at("movie_show").get<int>();
            it.release_timestamp = ij.at("release_ts").get<std::int64_t>();
            it.popularity = ij.at("popularity").get<double>();
            if (it.item_id != static_cast<int>(catalog.items.size()))
                throw DataError("catalog item ids must be dense, found " + std::to_string(it.item_id) +
                                " at position " + std::to_string(catalog.items.size()));
            catalog.items.push_back(std::move(it));
        }
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return catalog;
}

// ---- split -------------------------------------------------------------------

DatasetSplit split_dataset(std::span<const UserSequence> sequences, SplitRatios ratios, std::uint64_t seed) {
    if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
        std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
        throw ConfigError("split ratios must be non-negative and sum to 1");
    }
    std::set<std::int64_t> ids;
    for (const auto& s : sequences) {
        if (!ids.insert(s.user_id).second) throw DataError("duplicate user_id " + std::to_string(s.user_id));
    }
    std::vector<std::size_t> order(sequences.size());
    std::iota(order.begin(), order.end(), 0);
    auto rng = make_engine(seed, 0, 0x5B117);
    std::shuffle(order.begin(), order.end(), rng);

    const auto n = static_cast<double>(sequences.size());
    const auto n_val = static_cast<std::size_t>(std::llround(ratios.val * n));
    const auto n_test = static_cast<std::size_t>(std::llround(ratios.test * n));
    const std::size_t n_train = sequences.size() - std::min(sequences.size(), n_val + n_test);

    DatasetSplit split;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const UserSequence& s = sequences[order[i]];
        if (i < n_train) split.train.push_back(s);
        else if (i < n_train + n_val) split.val.push_back(s);
        else split.test.push_back(s);
    }
    auto by_id = [](const UserSequence& a, const UserSequence& b) { return a.user_id < b.user_id; };
    std::sort(split.train.begin(), split.train.end(), by_id);
    std::sort(split.val.begin(), split.val.end(), by_id);
    std::sort(split.test.begin(), split.test.end(), by_id);
    return split;
}

}  // namespace intentrec
