#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "intentrec/errors.hpp"
#include "intentrec/evaluator.hpp"
#include "intentrec/trainer.hpp"

using namespace intentrec;
using intentrec::testing::micro_model;
using intentrec::testing::random_users;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::vector<const UserSequence*> pointers(const std::vector<UserSequence>& users) {
    std::vector<const UserSequence*> out;
    for (const auto& u : users) out.push_back(&u);
    return out;
}

std::vector<std::vector<double>> grads_of(const ParameterSet& ps) {
    std::vector<std::vector<double>> out;
    for (const auto& p : ps) out.push_back(p->grad);
    return out;
}

TrainConfig micro_training() {
    TrainConfig t = profile("micro").training;
    return t;
}

}  // namespace

TEST(DurationWeights, EqualDurationsGiveOnes) {
    const std::vector<double> d(5, 321.0);
    for (double w : duration_weights(d)) EXPECT_NEAR(w, 1.0, 1e-15);
}

TEST(DurationWeights, ZeroDurationIsSmallest) {
    const std::vector<double> d{50, 0, 3000, 7};
    const auto w = duration_weights(d);
    EXPECT_EQ(w[1], 0.0);
    EXPECT_EQ(*std::min_element(w.begin(), w.end()), w[1]);
}

TEST(DurationWeights, MeanIsOne) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 10000);
    std::vector<double> d(257);
    for (auto& x : d) x = u(rng);
    const auto w = duration_weights(d);
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size()), 1.0, 1e-9);
}

TEST(DurationWeights, AllZeroAndUniformScheme) {
    for (double w : duration_weights(std::vector<double>(4, 0.0))) EXPECT_EQ(w, 1.0);
    for (double w : duration_weights(std::vector<double>{1, 2000}, DurationWeighting::Uniform)) EXPECT_EQ(w, 1.0);
    EXPECT_THROW(duration_weights(std::vector<double>{-1.0}), DataError);
}

TEST(ItemLoss, ConfidentCorrectPredictionIsZero) {
    Graph g;
    Var logits = g.input(Tensor::row({0, 800, 0, 0}));
    EXPECT_NEAR(item_loss(logits, std::vector<int>{1}, std::vector<double>{1.0}).value().item(), 0.0, 1e-12);
}

TEST(ItemLoss, UniformOverFourIsLnFour) {
    Graph g;
    Var logits = g.input(Tensor::row({0.3, 0.3, 0.3, 0.3}));
    EXPECT_NEAR(item_loss(logits, std::vector<int>{2}, std::vector<double>{1.0}).value().item(), std::log(4.0), 1e-12);
}

TEST(ItemLoss, WeightScalesContribution) {
    Graph g;
    Var logits = g.input(Tensor::row({0.1, -0.4, 1.2}));
    const double one = item_loss(logits, std::vector<int>{0}, std::vector<double>{1.0}).value().item();
    const double two = item_loss(logits, std::vector<int>{0}, std::vector<double>{2.0}).value().item();
    EXPECT_DOUBLE_EQ(two, 2.0 * one);
}

TEST(IntentLoss, UniformElevenIsLnEleven) {
    const IntentHeadSpec spec = default_heads()[0];
    Graph g;
    HeadTargets t;
    t.labels = {7};
    EXPECT_NEAR(intent_loss(g.input(Tensor::zeros({1, 11})), t, std::vector<double>{1.0}, spec).value().item(),
                std::log(11.0), 1e-12);
}

TEST(IntentLoss, MultiLabelCertainPositivesIsZero) {
    const IntentHeadSpec spec = default_heads()[1];
    std::vector<double> z(21, -3.0);
    z[2] = z[5] = 800.0;
    Graph g;
    HeadTargets t;
    t.positives = {{2, 5}};
    EXPECT_EQ(intent_loss(g.input(Tensor({1, 21}, z)), t, std::vector<double>{1.0}, spec).value().item(), 0.0);
}

TEST(IntentLoss, MultiLabelHalfIsLnTwo) {
    const IntentHeadSpec spec = default_heads()[1];
    Graph g;
    HeadTargets t;
    t.positives = {{0}};
    EXPECT_NEAR(intent_loss(g.input(Tensor::zeros({1, 21})), t, std::vector<double>{1.0}, spec).value().item(),
                std::log(2.0), 1e-12);
}

TEST(IntentLoss, WeightedMultiLabelRowWithoutPositivesIsDataError) {
    const IntentHeadSpec spec = default_heads()[1];
    Graph g;
    HeadTargets t;
    t.positives = {{}, {}};
    // The last row has no successor, so only the first row is checked.
    EXPECT_THROW(intent_loss(g.input(Tensor::zeros({2, 21})), t, std::vector<double>{1.0, 0.0}, spec), DataError);
}

TEST(TotalLoss, Arithmetic) {
    EXPECT_DOUBLE_EQ(total_loss(2.0, std::vector<double>{0.5, 0.3}, 1.0), 2.8);
    EXPECT_EQ(total_loss(2.0, std::vector<double>{0.5, 0.3}, 0.0), 2.0);
    EXPECT_EQ(total_loss(2.0, std::vector<double>{}, 5.0), 2.0);
}

TEST(TotalLoss, LinearInLambda) {
    Graph g;
    Var item = g.input(Tensor::scalar(1.7));
    const std::vector<Var> intents{g.input(Tensor::scalar(0.4)), g.input(Tensor::scalar(0.9))};
    const double a = total_loss(item, intents, 0.25).value().item();
    const double b = total_loss(item, intents, 0.75).value().item();
    const double c = total_loss(item, intents, 0.5).value().item();
    EXPECT_NEAR(c, 0.5 * (a + b), 1e-12);
    EXPECT_NEAR(b - a, 0.5 * 1.3, 1e-12);
}

TEST(Targets, PositionTargetsNextInteraction) {
    const auto users = random_users(1, 1, 4, 12);
    const auto& xs = users[0].interactions;
    const SequenceTargets t = make_targets(xs, default_heads());
    ASSERT_EQ(t.items.size(), 4u);
    EXPECT_EQ(t.count(), 3u);
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_EQ(t.items[k], xs[k + 1].item_id);
        EXPECT_EQ(t.durations[k], xs[k + 1].duration);
        EXPECT_EQ(t.heads[0].labels[k], xs[k + 1].action_type);
        EXPECT_EQ(t.heads[1].positives[k], xs[k + 1].genres);
        EXPECT_EQ(t.heads[3].labels[k], xs[k + 1].time_since_release);
    }
    EXPECT_EQ(t.items[3], -1);
    EXPECT_EQ(t.durations[3], 0.0);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    ParameterSet ps;
    Parameter& w = ps.add("w", Tensor::row({1.0, -2.0, 0.5}));
    w.grad = {0.2, -4.0, 0.0};
    Adam adam(ps, 0.1);
    adam.step();
    EXPECT_NEAR(w.value[0], 1.0 - 0.1 * 0.2 / (0.2 + 1e-8), 1e-12);
    EXPECT_NEAR(w.value[1], -2.0 + 0.1 * 4.0 / (4.0 + 1e-8), 1e-12);
    EXPECT_EQ(w.value[2], 0.5);
    EXPECT_EQ(adam.steps(), 1);
}

TEST(Adam, MinimisesQuadratic) {
    ParameterSet ps;
    Parameter& w = ps.add("w", Tensor::row({3.0, -1.5}));
    Adam adam(ps, 0.05);
    for (int i = 0; i < 2000; ++i) {
        ps.zero_grad();
        Graph g;
        Var v = g.param(w);
        g.backward(sum(mul(v, v)));
        adam.step();
    }
    EXPECT_LT(std::abs(w.value[0]), 1e-3);
    EXPECT_LT(std::abs(w.value[1]), 1e-3);
}

TEST(Adam, StateRoundTrip) {
    ParameterSet a, b;
    Parameter& wa = a.add("w", Tensor::row({1.0, 2.0}));
    Parameter& wb = b.add("w", Tensor::row({1.0, 2.0}));
    Adam oa(a, 0.01), ob(b, 0.01);
    wa.grad = {0.5, -0.25};
    oa.step();
    ob.restore(oa.state());
    wb.value = wa.value;
    wa.grad = wb.grad = {0.1, 0.3};
    oa.step();
    ob.step();
    EXPECT_EQ(wa.value, wb.value);
}

TEST(Adam, NonFiniteUpdateIsNumericError) {
    ParameterSet ps;
    Parameter& w = ps.add("w", Tensor::row({1.0}));
    w.grad = {std::nan("")};
    Adam adam(ps, 0.1);
    EXPECT_THROW(adam.step(), NumericError);
}

TEST(Batch, ThreadedGradientsMatchSerial) {
    const auto users = random_users(3, 12, 5, 12);
    const auto batch = pointers(users);
    IntentRecModel a(micro_model()), b(micro_model());
    TrainConfig serial = micro_training(), threaded = micro_training();
    threaded.threads = 4;
    const LossBreakdown la = batch_gradients(a, batch, serial);
    const LossBreakdown lb = batch_gradients(b, batch, threaded);
    EXPECT_NEAR(la.total, lb.total, 1e-9);
    const auto ga = grads_of(a.params()), gb = grads_of(b.params());
    for (std::size_t i = 0; i < ga.size(); ++i)
        for (std::size_t j = 0; j < ga[i].size(); ++j) ASSERT_NEAR(ga[i][j], gb[i][j], 1e-9);
}

TEST(Batch, LossWithoutGradientsMatches) {
    const auto users = random_users(4, 6, 5, 12);
    const auto batch = pointers(users);
    IntentRecModel m(micro_model());
    const LossBreakdown a = batch_loss(m, batch, micro_training());
    const LossBreakdown b = batch_gradients(m, batch, micro_training());
    EXPECT_EQ(a.total, b.total);
    EXPECT_EQ(a.positions, 24u);
}

TEST(Batch, LambdaZeroLogsIntentLossButAddsNoGradient) {
    const auto users = random_users(5, 4, 5, 12);
    const auto batch = pointers(users);
    TrainConfig t = micro_training();
    t.lambda = 0.0;
    IntentRecModel with(micro_model()), plain(micro_model());
    const LossBreakdown l = batch_gradients(with, batch, t);
    for (double v : l.intents) EXPECT_GT(v, 0.0);
    EXPECT_EQ(l.total, l.item);

    // Reference: the item loss alone, built by hand with the same weights.
    std::vector<double> durations;
    for (const auto& u : users)
        for (std::size_t k = 1; k < u.size(); ++k) durations.push_back(u.interactions[k].duration);
    const auto w = duration_weights(durations);
    std::size_t at = 0;
    for (const auto& u : users) {
        std::vector<double> uw(u.size(), 0.0);
        for (std::size_t k = 0; k + 1 < u.size(); ++k) uw[k] = w[at++];
        Graph g;
        const ModelOutputs out = plain.forward(g, u.interactions);
        g.backward(item_loss(out.item.logits, make_targets(u.interactions, {}).items, uw,
                             static_cast<double>(durations.size())));
    }
    const auto ga = grads_of(with.params()), gb = grads_of(plain.params());
    for (std::size_t i = 0; i < ga.size(); ++i)
        for (std::size_t j = 0; j < ga[i].size(); ++j) ASSERT_NEAR(ga[i][j], gb[i][j], 1e-12);
}

TEST(Training, SameSeedSameTrace) {
    const auto users = random_users(6, 8, 5, 12);
    TrainConfig t = micro_training();
    t.epochs = 5;
    IntentRecModel a(micro_model()), b(micro_model());
    const auto ta = train(a, users, t), tb = train(b, users, t);
    ASSERT_EQ(ta.size(), 5u);
    for (std::size_t e = 0; e < ta.size(); ++e) {
        EXPECT_EQ(ta[e].total_loss, tb[e].total_loss);
        EXPECT_EQ(ta[e].intent_losses, tb[e].intent_losses);
    }
}

TEST(Training, OverfitsEightUsers) {
    RunConfig c = profile("micro");
    const Catalog cat = generate_catalog(c.data.num_items, 1);
    const auto users = generate_users(cat, c.data.generator).users;
    ASSERT_EQ(users.size(), 8u);
    IntentRecModel m(c.model);
    const auto trace = train(m, users, c.training);
    ASSERT_EQ(trace.size(), 200u);
    EXPECT_LT(trace.back().item_loss, 0.1 * trace.front().item_loss);
}

TEST(Training, HeavierIntentWeightImprovesIntentRanking) {
    // Single runs are noisy at this size, so the comparison is over three seeds.
    auto mean_intent_mrr = [](std::uint64_t seed, double lambda) {
        RunConfig c = profile("micro");
        c.model.variant = Variant::V3;
        c.data.num_items = c.model.num_items = 40;
        c.data.generator.num_users = 240;
        c.data.generator.seq_len_min = 8;
        c.data.generator.seq_len_max = 12;
        c.data.generator.seed = c.model.init_seed = c.training.seed = seed;
        c.training.epochs = 15;
        c.training.batch_size = 16;
        c.training.learning_rate = 5e-3;
        c.training.lambda = lambda;
        const Catalog cat = generate_catalog(c.data.num_items, seed);
        const DatasetSplit split = split_dataset(generate_users(cat, c.data.generator).users, {0.75, 0.0, 0.25}, seed);
        IntentRecModel m(c.model);
        train(m, split.train, c.training);
        const EvalReport r = evaluate(m, split.test);
        double s = 0.0;
        for (const auto& [name, v] : r.intent_mrr) s += v;
        return s / static_cast<double>(r.intent_mrr.size());
    };
    double heavy = 0.0, light = 0.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        heavy += mean_intent_mrr(seed, 1.0);
        light += mean_intent_mrr(seed, 0.01);
    }
    EXPECT_GE(heavy, light);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
    const fs::path dir = fs::temp_directory_path() / "intentrec_ckpt";
    fs::create_directories(dir);
    IntentRecModel m(micro_model());
    const auto users = random_users(7, 4, 5, 12);
    TrainConfig t = micro_training();
    t.epochs = 2;
    Trainer tr(m, t);
    CheckpointMeta meta;
    meta.config_hash = "abc";
    meta.config = {{"note", "unit"}};
    meta.trace = tr.train(users);
    meta.epochs_completed = 2;
    save_checkpoint(dir / "a.json", m.params(), meta, &tr.optimizer());

    IntentRecModel n(micro_model(Variant::V3, 99));
    Adam adam(n.params(), 0.01);
    const CheckpointMeta back = load_checkpoint(dir / "a.json", n.params(), "abc", &adam);
    EXPECT_EQ(back.epochs_completed, 2);
    EXPECT_EQ(back.trace.size(), 2u);
    save_checkpoint(dir / "b.json", n.params(), back, &adam);
    EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "b.json"));

    const auto eval_users = random_users(8, 5, 4, 12);
    EXPECT_EQ(evaluate(m, eval_users).item_mrr, evaluate(n, eval_users).item_mrr);
}

TEST(Checkpoint, RejectsTamperingAndHashMismatch) {
    const fs::path dir = fs::temp_directory_path() / "intentrec_ckpt_bad";
    fs::create_directories(dir);
    IntentRecModel m(micro_model());
    CheckpointMeta meta;
    meta.config_hash = "h1";
    save_checkpoint(dir / "c.json", m.params(), meta);
    EXPECT_THROW(load_checkpoint(dir / "c.json", m.params(), "h2"), ConfigError);

    auto doc = nlohmann::json::parse(slurp(dir / "c.json"));
    auto& first = doc["params"].begin().value();
    first["shape"][0] = first["shape"][0].get<int>() + 1;
    std::ofstream(dir / "t.json") << doc.dump();
    EXPECT_THROW(load_checkpoint(dir / "t.json", m.params()), DataError);
}

TEST(LossTrace, CsvHeaderNamesHeads) {
    std::vector<EpochRecord> trace{{1, 2.0, {0.5, 0.25, 0.1, 0.2}, 3.05}};
    const std::string csv = loss_trace_csv(trace, default_heads());
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "epoch,item_loss,loss_action_type,loss_genre,loss_movie_show,loss_tsr,total_loss");
}
