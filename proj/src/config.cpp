#include "intentrec/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>

#include "intentrec/errors.hpp"

namespace intentrec {

using nlohmann::json;

namespace {

// Reads optional keys from one object and rejects anything it did not consume.
class Section {
   public:
    Section(const json& doc, std::string name) : name_(std::move(name)) {
        if (doc.contains(name_)) {
            if (!doc.at(name_).is_object()) throw ConfigError("section '" + name_ + "' must be an object");
            obj_ = &doc.at(name_);
        }
    }
    Section(const json* obj, std::string name) : obj_(obj), name_(std::move(name)) {}

    template <typename T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        if (!obj_ || !obj_->contains(key)) return;
        try {
            out = obj_->at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(name_ + "." + key + ": wrong type (" + obj_->at(key).dump() + ")");
        }
    }
    const json* raw(const char* key) {
        seen_.insert(key);
        return obj_ && obj_->contains(key) ? &obj_->at(key) : nullptr;
    }
    void finish() const {
        if (!obj_) return;
        for (const auto& [k, _] : obj_->items())
            if (!seen_.count(k)) throw ConfigError("unknown key '" + name_ + "." + k + "'");
    }

   private:
    const json* obj_ = nullptr;
    std::string name_;
    std::set<std::string> seen_;
};

const char* field_name(IntentField f) {
    switch (f) {
        case IntentField::ActionType: return "action_type";
        case IntentField::Genre: return "genre";
        case IntentField::MovieShow: return "movie_show";
        case IntentField::TimeSinceRelease: return "tsr";
    }
    return "?";
}

IntentField parse_field(const std::string& s) {
    if (s == "action_type") return IntentField::ActionType;
    if (s == "genre") return IntentField::Genre;
    if (s == "movie_show") return IntentField::MovieShow;
    if (s == "tsr") return IntentField::TimeSinceRelease;
    throw ConfigError("unknown intent field '" + s + "'");
}

const char* numeric_name(NumericFeature f) {
    switch (f) {
        case NumericFeature::Duration: return "duration";
        case NumericFeature::EpisodePosition: return "episode_position";
        case NumericFeature::TimeGap: return "time_gap";
    }
    return "?";
}

NumericFeature parse_numeric(const std::string& s) {
    if (s == "duration") return NumericFeature::Duration;
    if (s == "episode_position") return NumericFeature::EpisodePosition;
    if (s == "time_gap") return NumericFeature::TimeGap;
    throw ConfigError("unknown numeric feature '" + s + "'");
}

json encoder_json(const EncoderConfig& e) {
    return {{"d_model", e.d_model}, {"layers", e.layers}, {"heads", e.heads}, {"d_ffn", e.d_ffn}};
}

EncoderConfig encoder_from(const json* obj, const std::string& name, EncoderConfig e) {
    if (!obj) return e;
    if (!obj->is_object()) throw ConfigError(name + " must be an object");
    Section s(obj, name);
    s.read("d_model", e.d_model);
    s.read("layers", e.layers);
    s.read("heads", e.heads);
    s.read("d_ffn", e.d_ffn);
    s.finish();
    return e;
}

json head_json(const IntentHeadSpec& h) {
    json core = json::array();
    for (std::size_t i = 0; i < h.core_mask.size(); ++i)
        if (h.core_mask[i]) core.push_back(i);
    json j = {{"name", h.name}, {"field", field_name(h.field)}, {"cardinality", h.cardinality},
              {"multi_label", h.multi_label}};
    if (!h.core_mask.empty()) j["core_labels"] = core;
    return j;
}

IntentHeadSpec head_from(const json& j) {
    if (j.is_string()) {
        for (auto& d : default_heads())
            if (d.name == j.get<std::string>()) return d;
        throw ConfigError("unknown head '" + j.get<std::string>() + "'");
    }
    if (!j.is_object()) throw ConfigError("heads entries must be names or objects");
    IntentHeadSpec h;
    Section s(&j, "heads[]");
    std::string field = "action_type";
    std::vector<int> core;
    s.read("name", h.name);
    s.read("field", field);
    s.read("cardinality", h.cardinality);
    s.read("multi_label", h.multi_label);
    s.read("core_labels", core);
    s.finish();
    h.field = parse_field(field);
    if (!core.empty()) {
        h.core_mask.assign(static_cast<std::size_t>(std::max(h.cardinality, 0)), false);
        for (int c : core) {
            if (c < 0 || c >= h.cardinality) throw ConfigError("head '" + h.name + "': core label out of range");
            h.core_mask[static_cast<std::size_t>(c)] = true;
        }
    }
    return h;
}

}  // namespace

void RunConfig::validate() const {
    if (data.num_items < 2) throw ConfigError("data.num_items must be >= 2");
    if (model.num_items != data.num_items) throw ConfigError("model.num_items must equal data.num_items");
    const auto& g = data.generator;
    if (g.num_users < 1) throw ConfigError("data.num_users must be >= 1");
    if (g.seq_len_min < 2 || g.seq_len_max < g.seq_len_min)
        throw ConfigError("data.seq_len_min must be >= 2 and <= seq_len_max");
    if (g.latent_intents < 2) throw ConfigError("data.latent_intents must be >= 2");
    if (!(g.switch_gap_days > 0.0)) throw ConfigError("data.switch_gap_days must be > 0");
    if (!(g.off_genre_weight >= 0.0 && g.off_genre_weight <= 1.0))
        throw ConfigError("data.off_genre_weight must lie in [0, 1]");
    if (!(g.repeat_probability >= 0.0 && g.repeat_probability <= 1.0))
        throw ConfigError("data.repeat_probability must lie in [0, 1]");
    const auto& s = data.split;
    if (s.train < 0 || s.val < 0 || s.test < 0 || std::abs(s.train + s.val + s.test - 1.0) > 1e-9)
        throw ConfigError("data.split ratios must be non-negative and sum to 1");
    model.validate();
    training.validate();
}

std::int64_t parse_duration(const std::string& text) {
    std::size_t i = 0;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
    if (i == 0) throw ConfigError("bad duration '" + text + "'");
    std::int64_t value = 0;
    try {
        value = std::stoll(text.substr(0, i));
    } catch (const std::exception&) {
        throw ConfigError("bad duration '" + text + "'");
    }
    const std::string unit = text.substr(i);
    std::int64_t mult = 0;
    if (unit.empty() || unit == "s") mult = 1;
    else if (unit == "m") mult = 60;
    else if (unit == "h") mult = kSecondsPerHour;
    else if (unit == "d") mult = kSecondsPerDay;
    else if (unit == "w") mult = kSecondsPerWeek;
    else if (unit == "mo") mult = kSecondsPerMonth;
    else throw ConfigError("bad duration unit in '" + text + "' (use s, m, h, d, w or mo)");
    return value * mult;
}

std::string format_duration(std::int64_t seconds) {
    struct Unit {
        std::int64_t size;
        const char* name;
    };
    for (const Unit u : {Unit{kSecondsPerMonth, "mo"}, Unit{kSecondsPerWeek, "w"}, Unit{kSecondsPerDay, "d"},
                         Unit{kSecondsPerHour, "h"}, Unit{60, "m"}})
        if (seconds > 0 && seconds % u.size == 0) return std::to_string(seconds / u.size) + u.name;
    return std::to_string(seconds) + "s";
}

json to_json(const RunConfig& c) {
    const auto& g = c.data.generator;
    const auto& f = c.model.features;
    const auto& t = c.training;
    json numerics = json::array();
    for (auto n : f.numerics) numerics.push_back(numeric_name(n));
    json heads = json::array();
    for (const auto& h : c.model.heads) heads.push_back(head_json(h));
    return {
        {"data",
         {{"num_items", c.data.num_items},
          {"num_users", g.num_users},
          {"seq_len_min", g.seq_len_min},
          {"seq_len_max", g.seq_len_max},
          {"latent_intents", g.latent_intents},
          {"genre_concentration", g.genre_concentration},
          {"stickiness_min", g.stickiness_min},
          {"stickiness_max", g.stickiness_max},
          {"switch_gap_days", g.switch_gap_days},
          {"off_genre_weight", g.off_genre_weight},
          {"repeat_probability", g.repeat_probability},
          {"seed", g.seed},
          {"split", {c.data.split.train, c.data.split.val, c.data.split.test}}}},
        {"features",
         {{"d_item", f.d_item},
          {"d_action", f.d_action},
          {"d_genre", f.d_genre},
          {"d_movie_show", f.d_movie_show},
          {"d_tsr", f.d_tsr},
          {"d_short", f.d_short},
          {"short_model_dim", f.short_model_dim},
          {"short_heads", f.short_heads},
          {"short_ffn", f.short_ffn},
          {"short_encoder", f.short_encoder == ShortEncoderKind::Mean ? "mean" : "transformer"},
          {"window", format_duration(f.window_seconds)},
          {"numerics", numerics},
          {"duration_min", f.duration_min},
          {"duration_max", f.duration_max},
          {"gap_log_max", f.gap_log_max}}},
        {"model",
         {{"intent_encoder", encoder_json(c.model.intent_encoder)},
          {"item_encoder", encoder_json(c.model.item_encoder)},
          {"d_proj", c.model.d_proj},
          {"time_buckets", c.model.time_buckets},
          {"init_seed", c.model.init_seed}}},
        {"heads", heads},
        {"variant", variant_name(c.model.variant)},
        {"training",
         {{"lambda", t.lambda},
          {"learning_rate", t.learning_rate},
          {"batch_size", t.batch_size},
          {"epochs", t.epochs},
          {"seed", t.seed},
          {"threads", t.threads},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"epsilon", t.epsilon},
          {"duration_weighting", t.weighting == DurationWeighting::Uniform ? "uniform" : "log1p"}}},
    };
}

RunConfig run_config_from_json(const json& doc) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [k, _] : doc.items())
        if (k != "data" && k != "features" && k != "model" && k != "heads" && k != "variant" && k != "training" &&
            k != "profile")
            throw ConfigError("unknown config section '" + k + "'");

    RunConfig c;
    if (doc.contains("profile")) {
        if (!doc.at("profile").is_string()) throw ConfigError("profile must be a string");
        c = profile(doc.at("profile").get<std::string>());
    }

    {
        Section s(doc, "data");
        auto& g = c.data.generator;
        s.read("num_items", c.data.num_items);
        s.read("num_users", g.num_users);
        s.read("seq_len_min", g.seq_len_min);
        s.read("seq_len_max", g.seq_len_max);
        s.read("latent_intents", g.latent_intents);
        s.read("genre_concentration", g.genre_concentration);
        s.read("stickiness_min", g.stickiness_min);
        s.read("stickiness_max", g.stickiness_max);
        s.read("switch_gap_days", g.switch_gap_days);
        s.read("off_genre_weight", g.off_genre_weight);
        s.read("repeat_probability", g.repeat_probability);
        s.read("seed", g.seed);
        if (const json* sp = s.raw("split")) {
            if (!sp->is_array() || sp->size() != 3) throw ConfigError("data.split must be [train, val, test]");
            try {
                c.data.split = {sp->at(0).get<double>(), sp->at(1).get<double>(), sp->at(2).get<double>()};
            } catch (const json::exception&) {
                throw ConfigError("data.split entries must be numbers");
            }
        }
        s.finish();
        c.model.num_items = c.data.num_items;
    }
    {
        Section s(doc, "features");
        auto& f = c.model.features;
        s.read("d_item", f.d_item);
        s.read("d_action", f.d_action);
        s.read("d_genre", f.d_genre);
        s.read("d_movie_show", f.d_movie_show);
        s.read("d_tsr", f.d_tsr);
        s.read("d_short", f.d_short);
        s.read("short_model_dim", f.short_model_dim);
        s.read("short_heads", f.short_heads);
        s.read("short_ffn", f.short_ffn);
        std::string kind = f.short_encoder == ShortEncoderKind::Mean ? "mean" : "transformer";
        s.read("short_encoder", kind);
        if (kind == "mean") f.short_encoder = ShortEncoderKind::Mean;
        else if (kind == "transformer") f.short_encoder = ShortEncoderKind::Transformer;
        else throw ConfigError("features.short_encoder must be 'transformer' or 'mean'");
        if (const json* w = s.raw("window")) {
            if (w->is_string()) f.window_seconds = parse_duration(w->get<std::string>());
            else if (w->is_number_integer()) f.window_seconds = w->get<std::int64_t>();
            else throw ConfigError("features.window must be a duration string or seconds");
        }
        if (const json* ns = s.raw("numerics")) {
            if (!ns->is_array()) throw ConfigError("features.numerics must be an array");
            f.numerics.clear();
            for (const auto& n : *ns) {
                if (!n.is_string()) throw ConfigError("features.numerics entries must be strings");
                f.numerics.push_back(parse_numeric(n.get<std::string>()));
            }
        }
        s.read("duration_min", f.duration_min);
        s.read("duration_max", f.duration_max);
        s.read("gap_log_max", f.gap_log_max);
        s.finish();
    }
    {
        Section s(doc, "model");
        c.model.intent_encoder = encoder_from(s.raw("intent_encoder"), "model.intent_encoder", c.model.intent_encoder);
        c.model.item_encoder = encoder_from(s.raw("item_encoder"), "model.item_encoder", c.model.item_encoder);
        s.read("d_proj", c.model.d_proj);
        s.read("time_buckets", c.model.time_buckets);
        s.read("init_seed", c.model.init_seed);
        s.finish();
    }
    if (doc.contains("variant")) {
        if (!doc.at("variant").is_string()) throw ConfigError("variant must be a string");
        c.model.variant = parse_variant(doc.at("variant").get<std::string>());
    }
    if (doc.contains("heads")) {
        if (!doc.at("heads").is_array()) throw ConfigError("heads must be an array");
        c.model.heads.clear();
        for (const auto& h : doc.at("heads")) c.model.heads.push_back(head_from(h));
    } else if (c.model.variant == Variant::V0) {
        c.model.heads.clear();
    }
    {
        Section s(doc, "training");
        auto& t = c.training;
        s.read("lambda", t.lambda);
        s.read("learning_rate", t.learning_rate);
        s.read("batch_size", t.batch_size);
        s.read("epochs", t.epochs);
        s.read("seed", t.seed);
        s.read("threads", t.threads);
        s.read("beta1", t.beta1);
        s.read("beta2", t.beta2);
        s.read("epsilon", t.epsilon);
        std::string w = t.weighting == DurationWeighting::Uniform ? "uniform" : "log1p";
        s.read("duration_weighting", w);
        if (w == "uniform") t.weighting = DurationWeighting::Uniform;
        else if (w == "log1p") t.weighting = DurationWeighting::Log1p;
        else throw ConfigError("training.duration_weighting must be 'log1p' or 'uniform'");
        s.finish();
    }
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return run_config_from_json(doc);
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_json(config).dump(2) << '\n';
}

RunConfig profile(const std::string& name) {
    RunConfig c;
    if (name == "desk") {
        // A wider catalogue and no title repeats keep next-item prediction from
        // collapsing onto "replay the last title", so the intent signal shows.
        c.data.num_items = 1500;
        auto& g = c.data.generator;
        g.repeat_probability = 0.0;
        g.switch_gap_days = 21.0;
        g.genre_concentration = 0.45;
        g.off_genre_weight = 0.01;
        c.training.learning_rate = 2e-3;
        c.training.epochs = 12;
    } else if (name == "micro") {
        c.data.num_items = 12;
        c.data.generator.num_users = 8;
        c.data.generator.seq_len_min = 4;
        c.data.generator.seq_len_max = 5;
        c.data.generator.latent_intents = 3;
        auto& f = c.model.features;
        f.d_item = 4;
        f.d_action = f.d_genre = f.d_movie_show = f.d_tsr = 2;
        f.d_short = 4;
        f.short_model_dim = 4;
        f.short_heads = 2;
        f.short_ffn = 8;
        c.model.intent_encoder = {8, 1, 2, 8};
        c.model.item_encoder = {8, 1, 2, 8};
        c.model.d_proj = 4;
        c.model.time_buckets = 8;
        c.training.batch_size = 8;
        c.training.epochs = 200;
        c.training.learning_rate = 1e-2;
    } else if (name == "paper") {
        c.data.num_items = 35000;
        c.data.generator.num_users = 100000;
        c.data.generator.seq_len_min = 20;
        c.data.generator.seq_len_max = 100;
        auto& f = c.model.features;
        f.d_item = 400;
        f.d_action = 20;
        f.d_genre = 60;
        f.d_movie_show = 20;
        f.d_tsr = 20;
        f.numerics = {NumericFeature::Duration, NumericFeature::EpisodePosition, NumericFeature::TimeGap};
        f.d_short = 200;
        f.short_model_dim = 200;
        f.short_heads = 8;
        f.short_ffn = 512;
        c.model.intent_encoder = {600, 2, 8, 512};
        c.model.item_encoder = {800, 2, 8, 512};
        c.model.d_proj = 200;
        c.training.learning_rate = 5e-4;
        c.training.batch_size = 1024;
        c.training.epochs = 10;
        c.training.lambda = 1.0;
    } else {
        throw ConfigError("unknown profile '" + name + "' (expected micro, desk or paper)");
    }
    c.model.num_items = c.data.num_items;
    return c;
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string model_hash(const ModelConfig& model) {
    RunConfig c;
    c.model = model;
    c.data.num_items = model.num_items;
    json j = to_json(c);
    j.at("model").erase("init_seed");  // affects values, not the schema
    const json shaped = {{"num_items", model.num_items},
                         {"features", j.at("features")},
                         {"model", j.at("model")},
                         {"heads", j.at("heads")},
                         {"variant", j.at("variant")}};
    return fnv1a_hex(shaped.dump());
}

std::string config_hash(const RunConfig& config) { return fnv1a_hex(to_json(config).dump()); }

void apply_overrides(RunConfig& c, const Overrides& o) {
    if (o.seed) {
        c.data.generator.seed = *o.seed;
        c.model.init_seed = *o.seed;
        c.training.seed = *o.seed;
    }
    if (o.epochs) c.training.epochs = *o.epochs;
    if (o.lambda) c.training.lambda = *o.lambda;
    if (o.threads) c.training.threads = *o.threads;
    if (o.variant) {
        c.model.variant = *o.variant;
        if (*o.variant == Variant::V0) c.model.heads.clear();
        else if (c.model.heads.empty()) c.model.heads = default_heads();
    }
    c.validate();
}

}  // namespace intentrec
