#include <filesystem>

#include <gtest/gtest.h>

#include "intentrec/config.hpp"
#include "intentrec/errors.hpp"

using namespace intentrec;
using nlohmann::json;
namespace fs = std::filesystem;

TEST(Duration, Units) {
    EXPECT_EQ(parse_duration("30m"), 1800);
    EXPECT_EQ(parse_duration("12h"), 12 * 3600);
    EXPECT_EQ(parse_duration("1d"), kSecondsPerDay);
    EXPECT_EQ(parse_duration("1w"), kSecondsPerWeek);
    EXPECT_EQ(parse_duration("1mo"), kSecondsPerMonth);
    EXPECT_EQ(parse_duration("90"), 90);
}

TEST(Duration, FormatRoundTrips) {
    for (const char* s : {"1w", "1mo", "3d", "30m", "90"}) EXPECT_EQ(parse_duration(format_duration(parse_duration(s))), parse_duration(s));
    EXPECT_EQ(format_duration(kSecondsPerWeek), "1w");
}

TEST(Duration, RejectsGarbage) {
    for (const char* s : {"", "w", "1y", "-3d", "1.5d"}) EXPECT_THROW(parse_duration(s), ConfigError) << s;
}

TEST(RunConfigJson, RoundTripsEveryProfile) {
    for (const char* name : {"micro", "desk", "paper"}) {
        const RunConfig c = profile(name);
        const RunConfig back = run_config_from_json(to_json(c));
        EXPECT_EQ(to_json(back), to_json(c)) << name;
        EXPECT_EQ(config_hash(back), config_hash(c));
    }
}

TEST(RunConfigJson, FileRoundTrip) {
    const fs::path p = fs::temp_directory_path() / "intentrec_cfg.json";
    const RunConfig c = profile("micro");
    save_run_config(p, c);
    EXPECT_EQ(config_hash(load_run_config(p)), config_hash(c));
}

TEST(RunConfigJson, UnknownKeyIsConfigError) {
    json doc = to_json(profile("micro"));
    doc["training"]["learning_rat"] = 0.1;
    EXPECT_THROW(run_config_from_json(doc), ConfigError);
    json top = to_json(profile("micro"));
    top["extra"] = 1;
    EXPECT_THROW(run_config_from_json(top), ConfigError);
}

TEST(RunConfigJson, PartialDocumentKeepsDefaults) {
    const RunConfig c = run_config_from_json(json{{"training", {{"epochs", 3}}}});
    EXPECT_EQ(c.training.epochs, 3);
    EXPECT_EQ(c.model.heads.size(), default_heads().size());
}

TEST(RunConfigJson, InvalidValuesRejected) {
    json doc = to_json(profile("micro"));
    doc["training"]["lambda"] = -1.0;
    EXPECT_THROW(run_config_from_json(doc), ConfigError);
    doc = to_json(profile("micro"));
    doc["model"]["variant"] = "V9";
    EXPECT_THROW(run_config_from_json(doc), ConfigError);
    EXPECT_THROW(load_run_config("/nonexistent/intentrec.json"), Error);
}

TEST(Profiles, UnknownNameRejected) { EXPECT_THROW(profile("huge"), ConfigError); }

TEST(Profiles, PaperSettings) {
    const RunConfig p = profile("paper");
    EXPECT_EQ(p.data.num_items, 35000);
    EXPECT_EQ(p.training.batch_size, 1024);
    EXPECT_EQ(p.training.epochs, 10);
    EXPECT_DOUBLE_EQ(p.training.learning_rate, 5e-4);
    EXPECT_DOUBLE_EQ(p.training.lambda, 1.0);
    EXPECT_EQ(p.model.heads.size(), 4u);
}

TEST(Profiles, EveryProfileValidates) {
    for (const char* name : {"micro", "desk", "paper"}) EXPECT_NO_THROW(profile(name).validate()) << name;
}

TEST(Hashes, SensitiveToModelShapeOnly) {
    const RunConfig a = profile("micro");
    RunConfig b = a;
    b.training.epochs += 1;
    EXPECT_EQ(model_hash(a.model), model_hash(b.model));
    EXPECT_NE(config_hash(a), config_hash(b));
    b.model.d_proj += 1;
    EXPECT_NE(model_hash(a.model), model_hash(b.model));
    EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Hashes, KnownFnvVector) {
    // Published FNV-1a 64 test vectors.
    EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
    EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(Overrides, SeedReachesEveryStream) {
    RunConfig c = profile("micro");
    Overrides o;
    o.seed = 77;
    apply_overrides(c, o);
    EXPECT_EQ(c.data.generator.seed, 77u);
    EXPECT_EQ(c.model.init_seed, 77u);
    EXPECT_EQ(c.training.seed, 77u);
}

TEST(Overrides, VariantSwitchesHeads) {
    RunConfig c = profile("micro");
    Overrides o;
    o.variant = Variant::V0;
    o.lambda = 0.0;
    o.epochs = 4;
    apply_overrides(c, o);
    EXPECT_TRUE(c.model.heads.empty());
    EXPECT_EQ(c.training.lambda, 0.0);
    EXPECT_EQ(c.training.epochs, 4);
    o = {};
    o.variant = Variant::V3;
    apply_overrides(c, o);
    EXPECT_EQ(c.model.heads.size(), 4u);
    EXPECT_NO_THROW(c.validate());
}

TEST(Overrides, RejectsNonsense) {
    RunConfig c = profile("micro");
    Overrides o;
    // Zero epochs is a valid untrained run; negative is not.
    o.epochs = -1;
    EXPECT_THROW(apply_overrides(c, o), ConfigError);
    o = {};
    o.lambda = -0.5;
    EXPECT_THROW(apply_overrides(c, o), ConfigError);
}
