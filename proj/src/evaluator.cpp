#include "intentrec/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "intentrec/errors.hpp"

namespace intentrec {

using nlohmann::json;

namespace {

// Kahan-compensated running sum.
struct KahanSum {
    double sum = 0.0, c = 0.0;
    void add(double x) {
        const double y = x - c;
        const double t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
};

}  // namespace

double reciprocal_rank(std::span<const double> scores, int target) {
    if (target < 0 || static_cast<std::size_t>(target) >= scores.size())
        throw IndexError("reciprocal_rank: target " + std::to_string(target) + " outside [0, " +
                         std::to_string(scores.size()) + ")");
    const double s = scores[static_cast<std::size_t>(target)];
    std::size_t higher = 0, equal = 0;
    for (double x : scores) {
        if (x > s) ++higher;
        else if (x == s) ++equal;
    }
    const double rank = 1.0 + static_cast<double>(higher) + (static_cast<double>(equal) - 1.0) / 2.0;
    return 1.0 / rank;
}

double best_reciprocal_rank(std::span<const double> scores, std::span<const int> positives) {
    if (positives.empty()) throw DataError("best_reciprocal_rank: empty positive set");
    double best = 0.0;
    for (int p : positives) best = std::max(best, reciprocal_rank(scores, p));
    return best;
}

double mrr(std::span<const double> rr) {
    if (rr.empty()) throw ContractError("mrr: no test users");
    KahanSum s;
    for (double x : rr) s.add(x);
    return s.sum / static_cast<double>(rr.size());
}

double wmrr(std::span<const double> rr, std::span<const double> durations) {
    if (rr.empty()) throw ContractError("wmrr: no test users");
    if (rr.size() != durations.size()) throw DimensionError("wmrr: ranks and durations differ in length");
    KahanSum num, den;
    for (std::size_t i = 0; i < rr.size(); ++i) {
        num.add(durations[i] * rr[i]);
        den.add(durations[i]);
    }
    if (!(den.sum > 0.0)) throw ContractError("wmrr: total duration is zero");
    return num.sum / den.sum;
}

std::optional<double> intent_mrr(std::span<const IntentSample> samples, const IntentHeadSpec& spec) {
    std::vector<double> rr;
    for (const auto& s : samples) {
        if (s.scores.size() != static_cast<std::size_t>(spec.cardinality))
            throw DimensionError("intent_mrr: head '" + spec.name + "' expects " + std::to_string(spec.cardinality) +
                                 " scores");
        if (spec.multi_label) {
            rr.push_back(best_reciprocal_rank(s.scores, s.positives));
        } else {
            if (!spec.core_mask.empty() &&
                (s.label < 0 || s.label >= static_cast<int>(spec.core_mask.size()) ||
                 !spec.core_mask[static_cast<std::size_t>(s.label)]))
                continue;
            rr.push_back(reciprocal_rank(s.scores, s.label));
        }
    }
    if (rr.empty()) return std::nullopt;
    return mrr(rr);
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("paired_t_test: lengths differ");
    if (a.size() < 2) throw ContractError("paired_t_test: need at least two pairs");
    TTestResult r;
    r.n = a.size();
    const auto n = static_cast<double>(a.size());
    KahanSum s;
    for (std::size_t i = 0; i < a.size(); ++i) s.add(a[i] - b[i]);
    const double mean = s.sum / n;
    KahanSum ss;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = (a[i] - b[i]) - mean;
        ss.add(d * d);
    }
    r.mean_difference = mean;
    const double var = ss.sum / (n - 1.0);
    if (!(var > 0.0)) return r;
    const double t = mean / std::sqrt(var / n);
    r.t = t;
    const boost::math::students_t dist(n - 1.0);
    r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
    return r;
}

// ---- reports --------------------------------------------------------------------

json EvalReport::to_json() const {
    json us = json::array();
    for (const auto& u : users) us.push_back({{"user_id", u.user_id}, {"rr", u.reciprocal_rank}, {"dur", u.duration}});
    return {{"variant", variant},         {"item_mrr", item_mrr},         {"item_wmrr", item_wmrr},
            {"intent_mrr", intent_mrr},   {"intent_counts", intent_counts}, {"test_users", users.size()},
            {"users", us}};
}

EvalReport EvalReport::from_json(const json& j) {
    try {
        EvalReport r;
        r.variant = j.at("variant").get<std::string>();
        r.item_mrr = j.at("item_mrr").get<double>();
        r.item_wmrr = j.at("item_wmrr").get<double>();
        r.intent_mrr = j.at("intent_mrr").get<std::map<std::string, double>>();
        r.intent_counts = j.at("intent_counts").get<std::map<std::string, std::size_t>>();
        for (const auto& u : j.at("users"))
            r.users.push_back({u.at("user_id").get<std::int64_t>(), u.at("rr").get<double>(), u.at("dur").get<double>()});
        return r;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed report: ") + e.what());
    }
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "metric,value\n";
    os << "item_mrr," << item_mrr << "\nitem_wmrr," << item_wmrr << '\n';
    for (const auto& [k, v] : intent_mrr) os << "intent_mrr_" << k << ',' << v << '\n';
    os << "test_users," << users.size() << '\n';
    return os.str();
}

std::vector<double> EvalReport::reciprocal_ranks() const {
    std::vector<double> out;
    for (const auto& u : users) out.push_back(u.reciprocal_rank);
    return out;
}

EvalReport evaluate(const IntentRecModel& model, std::span<const UserSequence> users) {
    if (users.empty()) throw DataError("evaluate: no test users");
    const ModelConfig& cfg = model.config();
    EvalReport rep;
    rep.variant = variant_name(cfg.variant);
    std::vector<std::vector<IntentSample>> head_samples(cfg.variant == Variant::V0 ? 0 : cfg.heads.size());
    std::vector<double> rr, dur;
    for (const auto& u : users) {
        if (u.interactions.size() < 2)
            throw DataError("evaluate: user " + std::to_string(u.user_id) + " has fewer than 2 interactions");
        const Interaction& target = u.interactions.back();
        if (target.item_id < 0 || target.item_id >= cfg.num_items)
            throw DataError("evaluate: user " + std::to_string(u.user_id) + " target item_id out of range");
        const std::span<const Interaction> history(u.interactions.data(), u.interactions.size() - 1);
        Graph g;
        const ModelOutputs out = model.forward(g, history);
        const std::size_t last = history.size() - 1;
        const Tensor& logits = out.item.logits.value();
        const std::span<const double> row = logits.data().subspan(last * logits.cols(), logits.cols());
        // Softmax is monotone, so ranking raw logits is equivalent.
        const double r = reciprocal_rank(row, target.item_id);
        rr.push_back(r);
        dur.push_back(target.duration);
        rep.users.push_back({u.user_id, r, target.duration});
        for (std::size_t h = 0; h < head_samples.size(); ++h) {
            const Tensor& sc = out.heads[h].scores.value();
            IntentSample s;
            const auto srow = sc.data().subspan(last * sc.cols(), sc.cols());
            s.scores.assign(srow.begin(), srow.end());
            if (cfg.heads[h].multi_label)
                s.positives = target.genres;
            else
                s.label = intent_label(target, cfg.heads[h].field);
            head_samples[h].push_back(std::move(s));
        }
    }
    rep.item_mrr = mrr(rr);
    double total = 0.0;
    for (double d : dur) total += d;
    rep.item_wmrr = total > 0.0 ? wmrr(rr, dur) : rep.item_mrr;
    for (std::size_t h = 0; h < head_samples.size(); ++h) {
        const auto& spec = cfg.heads[h];
        const auto v = intent_mrr(head_samples[h], spec);
        std::size_t count = 0;
        for (const auto& s : head_samples[h])
            if (spec.multi_label || spec.core_mask.empty() ||
                (s.label >= 0 && s.label < static_cast<int>(spec.core_mask.size()) &&
                 spec.core_mask[static_cast<std::size_t>(s.label)]))
                ++count;
        if (v) rep.intent_mrr[spec.name] = *v;
        rep.intent_counts[spec.name] = count;
    }
    return rep;
}

void write_report(const std::filesystem::path& json_path, const EvalReport& report) {
    if (json_path.has_parent_path()) std::filesystem::create_directories(json_path.parent_path());
    std::ofstream j(json_path);
    if (!j) throw IoError("cannot write " + json_path.string());
    j << report.to_json().dump(2) << '\n';
    auto csv_path = json_path;
    csv_path.replace_extension(".csv");
    std::ofstream c(csv_path);
    if (!c) throw IoError("cannot write " + csv_path.string());
    c << report.to_csv();
}

EvalReport read_report(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw IoError("cannot open report " + json_path.string());
    try {
        return EvalReport::from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw DataError("malformed report " + json_path.string() + ": " + e.what());
    }
}

double percent_delta(double baseline, double value) {
    if (baseline == 0.0) throw ContractError("percent_delta: baseline is zero");
    return (value - baseline) / baseline * 100.0;
}

json Comparison::to_json() const {
    json t = {{"n", t_test.n}, {"mean_difference", t_test.mean_difference}, {"degenerate", t_test.degenerate()}};
    if (t_test.t) t["t"] = *t_test.t;
    if (t_test.p_value) t["p_value"] = *t_test.p_value;
    return {{"mrr_delta_pct", mrr_delta_pct},
            {"wmrr_delta_pct", wmrr_delta_pct},
            {"intent_delta_pct", intent_delta_pct},
            {"t_test", t}};
}

Comparison compare(const EvalReport& a, const EvalReport& b) {
    std::map<std::int64_t, double> rb;
    for (const auto& u : b.users) rb[u.user_id] = u.reciprocal_rank;
    if (rb.size() != a.users.size()) throw DataError("compare: reports cover different test users");
    std::vector<double> xa, xb;
    for (const auto& u : a.users) {
        auto it = rb.find(u.user_id);
        if (it == rb.end()) throw DataError("compare: user " + std::to_string(u.user_id) + " missing from candidate");
        xa.push_back(u.reciprocal_rank);
        xb.push_back(it->second);
    }
    Comparison c;
    c.mrr_delta_pct = percent_delta(a.item_mrr, b.item_mrr);
    c.wmrr_delta_pct = percent_delta(a.item_wmrr, b.item_wmrr);
    for (const auto& [k, v] : a.intent_mrr) {
        auto it = b.intent_mrr.find(k);
        if (it != b.intent_mrr.end() && v != 0.0) c.intent_delta_pct[k] = percent_delta(v, it->second);
    }
    // Candidate minus baseline.
    if (xa.size() >= 2) c.t_test = paired_t_test(xb, xa);
    return c;
}

}  // namespace intentrec
