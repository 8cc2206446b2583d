#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "intentrec/config.hpp"
#include "intentrec/engagement.hpp"
#include "intentrec/model.hpp"

namespace intentrec::testing {

inline ModelConfig micro_model(Variant variant = Variant::V3, std::uint64_t seed = 1) {
    ModelConfig m = profile("micro").model;
    m.variant = variant;
    if (variant == Variant::V0) m.heads.clear();
    m.init_seed = seed;
    return m;
}

// Random but valid interaction sequence over a small catalog.
inline UserSequence random_user(std::mt19937_64& rng, std::size_t n, int num_items, std::int64_t user_id = 0) {
    std::uniform_int_distribution<int> item(0, num_items - 1), action(0, kNumActionTypes - 1),
        genre(0, kNumGenres - 1), ms(0, 1), tsr(0, 2);
    std::uniform_int_distribution<std::int64_t> gap(30, 9 * kSecondsPerDay);
    std::uniform_real_distribution<double> dur(0.0, 9000.0), unit(0.0, 1.0);
    UserSequence u;
    u.user_id = user_id;
    std::int64_t t = kGenerationAnchor;
    for (std::size_t k = 0; k < n; ++k) {
        Interaction x;
        x.item_id = item(rng);
        x.action_type = action(rng);
        const int g0 = genre(rng);
        x.genres = {g0};
        if (unit(rng) < 0.5) x.genres.push_back((g0 + 1) % kNumGenres);
        x.movie_show = ms(rng);
        x.time_since_release = tsr(rng);
        t += gap(rng);
        x.timestamp = t;
        x.duration = std::round(dur(rng));
        x.episode_position = x.movie_show == 1 ? 0.0 : std::round(unit(rng) * 1000.0) / 1000.0;
        u.interactions.push_back(x);
    }
    return u;
}

inline std::vector<UserSequence> random_users(std::uint64_t seed, std::size_t count, std::size_t n, int num_items) {
    std::mt19937_64 rng(seed);
    std::vector<UserSequence> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(random_user(rng, n, num_items, static_cast<std::int64_t>(i)));
    return out;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace intentrec::testing
