#include "intentrec/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include <Eigen/Dense>

#include "intentrec/errors.hpp"

namespace intentrec {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

void check_points(const PointSet& pts) {
    if (pts.empty()) throw ConfigError("no points");
    for (const auto& p : pts)
        if (p.size() != pts[0].size() || p.empty()) throw DimensionError("points have inconsistent dimension");
}

double choose2(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace

KMeansResult kmeans_pp(const PointSet& points, int k, std::uint64_t seed, int max_iter, double tol) {
    check_points(points);
    if (k < 1 || static_cast<std::size_t>(k) > points.size())
        throw ConfigError("kmeans: K=" + std::to_string(k) + " must lie in [1, " + std::to_string(points.size()) + "]");
    const std::size_t n = points.size(), d = points[0].size();
    std::mt19937_64 rng(seed);

    KMeansResult r;
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    r.centers.push_back(points[first(rng)]);
    std::vector<double> nearest(n);
    for (std::size_t i = 0; i < n; ++i) nearest[i] = sq_dist(points[i], r.centers[0]);
    while (r.centers.size() < static_cast<std::size_t>(k)) {
        double total = 0.0;
        for (double x : nearest) total += x;
        std::size_t pick = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng), acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += nearest[i];
                if (acc >= target && nearest[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = first(rng);
        }
        r.centers.push_back(points[pick]);
        for (std::size_t i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], sq_dist(points[i], r.centers.back()));
    }

    r.assignments.assign(n, 0);
    auto assign = [&] {
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int arg = 0;
            for (int c = 0; c < k; ++c) {
                const double dd = sq_dist(points[i], r.centers[static_cast<std::size_t>(c)]);
                if (dd < best) {
                    best = dd;
                    arg = c;
                }
            }
            r.assignments[i] = arg;
            inertia += best;
        }
        return inertia;
    };

    r.inertia = assign();
    for (int it = 0; it < max_iter; ++it) {
        PointSet next(static_cast<std::size_t>(k), std::vector<double>(d, 0.0));
        std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(r.assignments[i]);
            ++counts[c];
            for (std::size_t j = 0; j < d; ++j) next[c][j] += points[i][j];
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < next.size(); ++c) {
            if (counts[c] == 0) {
                next[c] = r.centers[c];  // empty cluster keeps its center
            } else {
                for (double& x : next[c]) x /= static_cast<double>(counts[c]);
            }
            shift = std::max(shift, std::sqrt(sq_dist(next[c], r.centers[c])));
        }
        r.centers = std::move(next);
        r.inertia = assign();
        r.inertia_trace.push_back(r.inertia);
        r.iterations = it + 1;
        if (shift < tol) break;
    }
    return r;
}

Projection pca_project(const PointSet& points, int out_dim) {
    check_points(points);
    if (points.size() < 2) throw ContractError("pca_project: need at least two points");
    const auto n = static_cast<Eigen::Index>(points.size());
    const auto d = static_cast<Eigen::Index>(points[0].size());
    if (out_dim < 1 || out_dim > d) throw ConfigError("pca_project: out_dim must lie in [1, d]");
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) x(i, j) = points[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const Eigen::VectorXd evals = es.eigenvalues();  // ascending
    const Eigen::MatrixXd evecs = es.eigenvectors();
    const double total = std::max(0.0, evals.sum());

    Projection p;
    Eigen::MatrixXd w(d, out_dim);
    for (int c = 0; c < out_dim; ++c) {
        Eigen::VectorXd v = evecs.col(d - 1 - c);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        w.col(c) = v;
        p.components.emplace_back(v.data(), v.data() + v.size());
        const double ev = std::max(0.0, evals(d - 1 - c));
        p.explained_variance_ratio.push_back(total > 0.0 ? ev / total : 0.0);
    }
    const Eigen::MatrixXd y = x * w;
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<double> row(static_cast<std::size_t>(out_dim));
        for (int c = 0; c < out_dim; ++c) row[static_cast<std::size_t>(c)] = y(i, c);
        p.coords.push_back(std::move(row));
    }
    return p;
}

double cluster_purity(std::span<const int> a, std::span<const int> labels) {
    if (a.size() != labels.size()) throw DimensionError("cluster_purity: lengths differ");
    if (a.empty()) throw ContractError("cluster_purity: no points");
    std::map<int, std::map<int, std::size_t>> table;
    for (std::size_t i = 0; i < a.size(); ++i) ++table[a[i]][labels[i]];
    std::size_t hit = 0;
    for (const auto& [c, row] : table) {
        std::size_t best = 0;
        for (const auto& [l, cnt] : row) best = std::max(best, cnt);
        hit += best;
    }
    return static_cast<double>(hit) / static_cast<double>(a.size());
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> labels) {
    if (a.size() != labels.size()) throw DimensionError("adjusted_rand_index: lengths differ");
    if (a.empty()) throw ContractError("adjusted_rand_index: no points");
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> ra, rb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{a[i], labels[i]}] += 1.0;
        ra[a[i]] += 1.0;
        rb[labels[i]] += 1.0;
    }
    double index = 0.0, sa = 0.0, sb = 0.0;
    for (const auto& [_, c] : joint) index += choose2(c);
    for (const auto& [_, c] : ra) sa += choose2(c);
    for (const auto& [_, c] : rb) sb += choose2(c);
    const double total = choose2(static_cast<double>(a.size()));
    const double expected = total > 0.0 ? sa * sb / total : 0.0;
    const double max_index = 0.5 * (sa + sb);
    if (max_index == expected) return 1.0;  // both partitions trivial and identical in structure
    return (index - expected) / (max_index - expected);
}

std::vector<UserIntentEmbedding> collect_intent_embeddings(const IntentRecModel& model,
                                                           std::span<const UserSequence> users,
                                                           std::span<const LatentTrace> planted) {
    if (!model.config().hierarchical())
        throw ConfigError(std::string("variant ") + variant_name(model.config().variant) +
                          " has no intent embedding");
    std::map<std::int64_t, int> last_state;
    for (const auto& t : planted)
        if (!t.states.empty()) last_state[t.user_id] = t.states.back();
    std::vector<UserIntentEmbedding> out;
    for (const auto& u : users) {
        if (u.interactions.empty()) continue;
        Graph g;
        const ModelOutputs o = model.forward(g, u.interactions);
        const Tensor& z = o.intent->aggregation.z.value();
        const Tensor& al = o.intent->aggregation.alpha.value();
        const std::size_t last = z.rows() - 1;
        UserIntentEmbedding e;
        e.user_id = u.user_id;
        auto zr = z.data().subspan(last * z.cols(), z.cols());
        auto ar = al.data().subspan(last * al.cols(), al.cols());
        e.z.assign(zr.begin(), zr.end());
        e.alpha.assign(ar.begin(), ar.end());
        if (auto it = last_state.find(u.user_id); it != last_state.end()) e.planted = it->second;
        out.push_back(std::move(e));
    }
    return out;
}

PrimaryIntent primary_intent(std::span<const double> alpha, std::int64_t user_id) {
    if (alpha.empty()) throw ContractError("primary_intent: empty attention vector");
    PrimaryIntent p;
    p.user_id = user_id;
    std::size_t arg = 0;
    for (std::size_t i = 1; i < alpha.size(); ++i)
        if (alpha[i] > alpha[arg]) arg = i;
    double runner = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        if (i == arg) continue;
        if (alpha[i] == alpha[arg]) p.tie = true;
        runner = std::max(runner, alpha[i]);
    }
    p.head = static_cast<int>(arg);
    p.margin = alpha.size() > 1 ? alpha[arg] - runner : alpha[arg];
    return p;
}

AttentionReport attention_report(std::span<const UserIntentEmbedding> set, std::vector<std::string> head_names,
                                 std::size_t exemplars) {
    if (set.empty()) throw ContractError("attention_report: empty embedding set");
    AttentionReport r;
    r.head_names = std::move(head_names);
    const std::size_t m = set[0].alpha.size();
    if (r.head_names.size() != m) throw DimensionError("attention_report: head names do not match alpha width");
    r.histogram.assign(m, 0);
    std::vector<std::vector<std::pair<double, std::int64_t>>> by_head(m);
    for (const auto& e : set) {
        if (e.alpha.size() != m) throw DimensionError("attention_report: inconsistent alpha width");
        const PrimaryIntent p = primary_intent(e.alpha, e.user_id);
        r.users.push_back(p);
        ++r.histogram[static_cast<std::size_t>(p.head)];
        by_head[static_cast<std::size_t>(p.head)].push_back({p.margin, p.user_id});
    }
    for (auto& v : by_head) {
        std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
        std::vector<std::int64_t> ids;
        for (std::size_t i = 0; i < std::min(exemplars, v.size()); ++i) ids.push_back(v[i].second);
        r.exemplars.push_back(std::move(ids));
    }
    return r;
}

nlohmann::json AttentionReport::to_json() const {
    nlohmann::json hist = nlohmann::json::object(), ex = nlohmann::json::object();
    for (std::size_t h = 0; h < head_names.size(); ++h) {
        hist[head_names[h]] = histogram[h];
        ex[head_names[h]] = exemplars[h];
    }
    nlohmann::json us = nlohmann::json::array();
    for (const auto& u : users)
        us.push_back({{"user_id", u.user_id}, {"primary", head_names[static_cast<std::size_t>(u.head)]},
                      {"tie", u.tie}, {"margin", u.margin}});
    return {{"histogram", hist}, {"exemplars", ex}, {"users", us}};
}

}  // namespace intentrec
