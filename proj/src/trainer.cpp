#include "intentrec/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "intentrec/errors.hpp"

namespace intentrec {

using nlohmann::json;

void TrainConfig::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("training.lambda must be finite and >= 0");
    if (!(learning_rate > 0.0)) throw ConfigError("training.learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("training.batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("training.epochs must be >= 0");
    if (threads < 1) throw ConfigError("training.threads must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw ConfigError("training betas must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("training.epsilon must be > 0");
}

std::vector<double> duration_weights(std::span<const double> durations, DurationWeighting scheme) {
    std::vector<double> w(durations.size(), 1.0);
    if (scheme == DurationWeighting::Uniform || durations.empty()) return w;
    double total = 0.0;
    for (std::size_t i = 0; i < durations.size(); ++i) {
        if (!(durations[i] >= 0.0) || !std::isfinite(durations[i]))
            throw DataError("duration must be finite and non-negative");
        w[i] = std::log1p(durations[i]);
        total += w[i];
    }
    if (total <= 0.0) return std::vector<double>(durations.size(), 1.0);
    const double s = static_cast<double>(durations.size()) / total;
    for (double& x : w) x *= s;
    return w;
}

int intent_label(const Interaction& it, IntentField field) {
    switch (field) {
        case IntentField::ActionType: return it.action_type;
        case IntentField::MovieShow: return it.movie_show;
        case IntentField::TimeSinceRelease: return it.time_since_release;
        case IntentField::Genre: break;
    }
    throw ContractError("genre is multi-label; use the positive set");
}

SequenceTargets make_targets(std::span<const Interaction> xs, std::span<const IntentHeadSpec> heads) {
    SequenceTargets t;
    const std::size_t n = xs.size();
    t.items.assign(n, -1);
    t.durations.assign(n, 0.0);
    t.heads.resize(heads.size());
    for (std::size_t h = 0; h < heads.size(); ++h) {
        if (heads[h].multi_label)
            t.heads[h].positives.assign(n, {});
        else
            t.heads[h].labels.assign(n, -1);
    }
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const Interaction& next = xs[k + 1];
        t.items[k] = next.item_id;
        t.durations[k] = next.duration;
        for (std::size_t h = 0; h < heads.size(); ++h) {
            if (heads[h].multi_label)
                t.heads[h].positives[k] = next.genres;
            else
                t.heads[h].labels[k] = intent_label(next, heads[h].field);
        }
    }
    return t;
}

Var item_loss(Var logits, std::span<const int> targets, std::span<const double> weights, double normalizer) {
    if (!(normalizer > 0.0)) throw ContractError("loss normalizer must be positive");
    Var l = weighted_cross_entropy(logits, targets, weights);
    return normalizer == 1.0 ? l : scale(l, 1.0 / normalizer);
}

Var intent_loss(Var logits, const HeadTargets& targets, std::span<const double> weights, const IntentHeadSpec& spec,
                double normalizer) {
    if (!(normalizer > 0.0)) throw ContractError("loss normalizer must be positive");
    Var l;
    if (spec.multi_label) {
        if (targets.positives.size() != logits.rows())
            throw DimensionError("intent_loss: positive sets do not match logits rows");
        // The final position carries no target; every other one needs a positive label.
        for (std::size_t r = 0; r + 1 < targets.positives.size(); ++r)
            if (weights[r] > 0.0 && targets.positives[r].empty())
                throw DataError("head '" + spec.name + "': empty positive label set at position " +
                                std::to_string(r));
        l = weighted_positive_bce(logits, targets.positives, weights);
    } else {
        l = weighted_cross_entropy(logits, targets.labels, weights);
    }
    return normalizer == 1.0 ? l : scale(l, 1.0 / normalizer);
}

Var total_loss(Var item, std::span<const Var> intents, double lambda) {
    if (intents.empty() || lambda == 0.0) return item;
    Var s = intents[0];
    for (std::size_t i = 1; i < intents.size(); ++i) s = add(s, intents[i]);
    return add(item, scale(s, lambda));
}

double total_loss(double item, std::span<const double> intents, double lambda) {
    double s = 0.0;
    for (double x : intents) s += x;
    return item + lambda * s;
}

// ---- Adam -------------------------------------------------------------------

Adam::Adam(ParameterSet& params, double lr, double b1, double b2, double eps)
    : params_(params), lr_(lr), beta1_(b1), beta2_(b2), eps_(eps) {
    for (const auto& p : params_) {
        m_.emplace_back(p->value.size(), 0.0);
        v_.emplace_back(p->value.size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Parameter& p = params_[i];
        if (p.grad.size() != p.value.size()) continue;  // never touched
        auto& m = m_[i];
        auto& v = v_[i];
        auto w = p.value.data();
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double g = p.grad[j];
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
            w[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
        }
        if (!p.value.all_finite()) throw NumericError("parameter '" + p.name + "' became non-finite after update");
    }
}

json Adam::state() const {
    json m = json::object(), v = json::object();
    for (std::size_t i = 0; i < params_.size(); ++i) {
        m[params_[i].name] = m_[i];
        v[params_[i].name] = v_[i];
    }
    return {{"step", t_}, {"m", m}, {"v", v}};
}

void Adam::restore(const json& s) {
    t_ = s.at("step").get<std::int64_t>();
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto& name = params_[i].name;
        auto m = s.at("m").at(name).get<std::vector<double>>();
        auto v = s.at("v").at(name).get<std::vector<double>>();
        if (m.size() != m_[i].size() || v.size() != v_[i].size())
            throw DataError("optimizer state for '" + name + "' has the wrong size");
        m_[i] = std::move(m);
        v_[i] = std::move(v);
    }
}

// ---- batches ----------------------------------------------------------------

namespace {

struct UserLoss {
    double item = 0.0;
    std::vector<double> intents;
};

[[noreturn]] void report_non_finite(const Graph& g, const std::string& context) {
    for (std::size_t id = 0; id < g.size(); ++id) {
        if (!g.value(id).all_finite())
            throw NumericError(context + ": first non-finite tensor is node " + std::to_string(id) + " (" +
                               op_name(g.kind(id)) + ", shape " + shape_string(g.value(id).shape()) + ")");
    }
    throw NumericError(context + ": loss is non-finite");
}

UserLoss user_loss(const IntentRecModel& model, const UserSequence& user, std::span<const double> weights,
                   double normalizer, double lambda, GradientBuffer* sink, bool backward) {
    const auto& heads = model.config().heads;
    const SequenceTargets t = make_targets(user.interactions, heads);
    Graph g(sink);
    const ModelOutputs out = model.forward(g, user.interactions);
    const Var li = item_loss(out.item.logits, t.items, weights, normalizer);
    std::vector<Var> lh;
    for (std::size_t h = 0; h < out.heads.size(); ++h)
        lh.push_back(intent_loss(out.heads[h].logits, t.heads[h], weights, heads[h], normalizer));
    const Var total = total_loss(li, lh, lambda);
    if (!std::isfinite(total.value().item())) report_non_finite(g, "user " + std::to_string(user.user_id));
    UserLoss r;
    r.item = li.value().item();
    for (const Var& v : lh) r.intents.push_back(v.value().item());
    if (backward) g.backward(total);
    return r;
}

// Per-position weights for every user in the batch, rescaled jointly.
std::vector<std::vector<double>> batch_weights(std::span<const UserSequence* const> batch,
                                               const TrainConfig& config, std::size_t& positions) {
    std::vector<double> flat;
    for (const UserSequence* u : batch)
        for (std::size_t k = 1; k < u->interactions.size(); ++k) flat.push_back(u->interactions[k].duration);
    positions = flat.size();
    const auto w = duration_weights(flat, config.weighting);
    std::vector<std::vector<double>> out;
    std::size_t at = 0;
    for (const UserSequence* u : batch) {
        std::vector<double> uw(u->interactions.size(), 0.0);
        for (std::size_t k = 0; k + 1 < u->interactions.size(); ++k) uw[k] = w[at++];
        out.push_back(std::move(uw));
    }
    return out;
}

LossBreakdown run_batch(const IntentRecModel& model, ParameterSet* params, std::span<const UserSequence* const> batch,
                        const TrainConfig& config) {
    config.validate();
    LossBreakdown res;
    res.intents.assign(model.config().variant == Variant::V0 ? 0 : model.config().heads.size(), 0.0);
    const auto weights = batch_weights(batch, config, res.positions);
    if (res.positions == 0) return res;
    const auto norm = static_cast<double>(res.positions);
    const bool backward = params != nullptr;

    std::vector<UserLoss> losses(batch.size());
    auto work = [&](std::size_t begin, std::size_t end, GradientBuffer* sink) {
        for (std::size_t i = begin; i < end; ++i)
            losses[i] = user_loss(model, *batch[i], weights[i], norm, config.lambda, sink, backward);
    };

    const std::size_t shards = std::min<std::size_t>(static_cast<std::size_t>(config.threads), batch.size());
    if (shards <= 1) {
        work(0, batch.size(), nullptr);
    } else {
        std::vector<std::unique_ptr<GradientBuffer>> buffers(shards);
        if (backward)
            for (auto& b : buffers) b = std::make_unique<GradientBuffer>(*params);
        std::vector<std::exception_ptr> errors(shards);
        std::vector<std::thread> pool;
        const std::size_t per = (batch.size() + shards - 1) / shards;
        for (std::size_t s = 0; s < shards; ++s) {
            const std::size_t b = std::min(batch.size(), s * per), e = std::min(batch.size(), b + per);
            pool.emplace_back([&, s, b, e] {
                try {
                    work(b, e, buffers[s].get());
                } catch (...) {
                    errors[s] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
        // Fixed shard order keeps the summation deterministic for a given thread count.
        if (backward)
            for (auto& b : buffers) b->flush_into(*params);
    }

    for (const UserLoss& u : losses) {
        res.item += u.item;
        for (std::size_t h = 0; h < u.intents.size(); ++h) res.intents[h] += u.intents[h];
    }
    res.total = total_loss(res.item, res.intents, config.lambda);
    return res;
}

}  // namespace

LossBreakdown batch_gradients(IntentRecModel& model, std::span<const UserSequence* const> batch,
                              const TrainConfig& config) {
    return run_batch(model, &model.params(), batch, config);
}

LossBreakdown batch_loss(const IntentRecModel& model, std::span<const UserSequence* const> batch,
                         const TrainConfig& config) {
    return run_batch(model, nullptr, batch, config);
}

// ---- epoch loop --------------------------------------------------------------

Trainer::Trainer(IntentRecModel& model, TrainConfig config)
    : model_(model),
      config_(config),
      adam_(model.params(), config.learning_rate, config.beta1, config.beta2, config.epsilon) {
    config_.validate();
}

EpochRecord Trainer::run_epoch(std::span<const UserSequence> users) {
    if (users.empty()) throw DataError("training set is empty");
    std::vector<const UserSequence*> order;
    for (const auto& u : users) order.push_back(&u);
    // Seeded by (seed, epoch) so a resumed run replays the same order.
    std::seed_seq seq{static_cast<std::uint32_t>(config_.seed), static_cast<std::uint32_t>(config_.seed >> 32),
                      static_cast<std::uint32_t>(epochs_completed_ + 1)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);

    EpochRecord rec;
    rec.epoch = epochs_completed_ + 1;
    const std::size_t nh = model_.config().variant == Variant::V0 ? 0 : model_.config().heads.size();
    rec.intent_losses.assign(nh, 0.0);
    std::size_t positions = 0;
    const auto bs = static_cast<std::size_t>(config_.batch_size);
    for (std::size_t b = 0; b < order.size(); b += bs) {
        const std::span<const UserSequence* const> batch(order.data() + b, std::min(bs, order.size() - b));
        model_.params().zero_grad();
        const LossBreakdown l = batch_gradients(model_, batch, config_);
        if (l.positions == 0) continue;
        adam_.step();
        const auto n = static_cast<double>(l.positions);
        rec.item_loss += l.item * n;
        for (std::size_t h = 0; h < nh; ++h) rec.intent_losses[h] += l.intents[h] * n;
        positions += l.positions;
    }
    if (positions > 0) {
        const auto n = static_cast<double>(positions);
        rec.item_loss /= n;
        for (double& x : rec.intent_losses) x /= n;
    }
    rec.total_loss = total_loss(rec.item_loss, rec.intent_losses, config_.lambda);
    ++epochs_completed_;
    return rec;
}

std::vector<EpochRecord> Trainer::train(std::span<const UserSequence> users,
                                        const std::function<void(const EpochRecord&)>& on_epoch) {
    std::vector<EpochRecord> trace;
    while (epochs_completed_ < config_.epochs) {
        trace.push_back(run_epoch(users));
        if (on_epoch) on_epoch(trace.back());
    }
    return trace;
}

std::vector<EpochRecord> train(IntentRecModel& model, std::span<const UserSequence> users, const TrainConfig& config) {
    Trainer t(model, config);
    return t.train(users);
}

// ---- checkpoints ---------------------------------------------------------------

namespace {

json trace_json(const std::vector<EpochRecord>& trace) {
    json arr = json::array();
    for (const auto& r : trace)
        arr.push_back({{"epoch", r.epoch}, {"item", r.item_loss}, {"intents", r.intent_losses}, {"total", r.total_loss}});
    return arr;
}

std::vector<EpochRecord> trace_from_json(const json& arr) {
    std::vector<EpochRecord> out;
    for (const auto& j : arr) {
        EpochRecord r;
        r.epoch = j.at("epoch").get<int>();
        r.item_loss = j.at("item").get<double>();
        r.intent_losses = j.at("intents").get<std::vector<double>>();
        r.total_loss = j.at("total").get<double>();
        out.push_back(std::move(r));
    }
    return out;
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("malformed checkpoint " + path.string() + ": " + e.what());
    }
}

CheckpointMeta meta_from_json(const json& doc, const std::filesystem::path& path) {
    try {
        if (doc.at("format_version").get<std::string>() != kCheckpointFormatVersion)
            throw DataError("checkpoint " + path.string() + " has unsupported format_version " +
                            doc.at("format_version").dump());
        CheckpointMeta m;
        m.config_hash = doc.at("config_hash").get<std::string>();
        m.config = doc.at("config");
        m.epochs_completed = doc.at("epochs_completed").get<int>();
        m.trace = trace_from_json(doc.at("trace"));
        return m;
    } catch (const json::exception& e) {
        throw DataError("malformed checkpoint " + path.string() + ": " + e.what());
    }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const CheckpointMeta& meta,
                     const Adam* optimizer) {
    json ps = json::object();
    for (const auto& p : params) {
        ps[p->name] = {{"shape", p->value.shape()},
                       {"data", std::vector<double>(p->value.data().begin(), p->value.data().end())}};
    }
    json doc = {{"format_version", kCheckpointFormatVersion},
                {"config_hash", meta.config_hash},
                {"config", meta.config},
                {"epochs_completed", meta.epochs_completed},
                {"trace", trace_json(meta.trace)},
                {"params", ps}};
    if (optimizer) doc["optimizer"] = optimizer->state();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out << doc.dump() << '\n';
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path) {
    return meta_from_json(read_json_file(path), path);
}

CheckpointMeta load_checkpoint(const std::filesystem::path& path, ParameterSet& params,
                               const std::string& expected_hash, Adam* optimizer) {
    const json doc = read_json_file(path);
    CheckpointMeta meta = meta_from_json(doc, path);
    if (!expected_hash.empty() && expected_hash != meta.config_hash)
        throw ConfigError("checkpoint config hash " + meta.config_hash + " does not match current config hash " +
                          expected_hash);
    try {
        const json& ps = doc.at("params");
        if (ps.size() != params.size())
            throw DataError("checkpoint holds " + std::to_string(ps.size()) + " parameters, model expects " +
                            std::to_string(params.size()));
        for (auto& p : params) {
            if (!ps.contains(p->name)) throw DataError("checkpoint is missing parameter '" + p->name + "'");
            const json& e = ps.at(p->name);
            const auto shape = e.at("shape").get<Shape>();
            if (shape != p->value.shape())
                throw DataError("parameter '" + p->name + "' has shape " + shape_string(shape) + " in checkpoint, " +
                                shape_string(p->value.shape()) + " in model");
            auto data = e.at("data").get<std::vector<double>>();
            if (data.size() != p->value.size())
                throw DataError("parameter '" + p->name + "' has " + std::to_string(data.size()) + " values, expected " +
                                std::to_string(p->value.size()));
            p->value.storage() = std::move(data);
        }
        if (optimizer && doc.contains("optimizer")) optimizer->restore(doc.at("optimizer"));
    } catch (const json::exception& e) {
        throw DataError("malformed checkpoint " + path.string() + ": " + e.what());
    }
    return meta;
}

std::string loss_trace_csv(const std::vector<EpochRecord>& trace, std::span<const IntentHeadSpec> heads) {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,item_loss";
    for (const auto& h : heads) os << ",loss_" << h.name;
    os << ",total_loss\n";
    for (const auto& r : trace) {
        os << r.epoch << ',' << r.item_loss;
        for (double x : r.intent_losses) os << ',' << x;
        os << ',' << r.total_loss << '\n';
    }
    return os.str();
}

}  // namespace intentrec
