#include "intentrec/intentrec.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "intentrec/errors.hpp"
#include "intentrec/pipeline.hpp"

using namespace intentrec;

struct ir_config {
    RunConfig value;
};

struct ir_model {
    RunConfig config;
    std::unique_ptr<IntentRecModel> model;
};

namespace {

thread_local std::string g_last_error;

ir_status fail(ir_status s, const std::string& msg) {
    g_last_error = msg;
    return s;
}

template <class F>
ir_status guarded(F&& f) {
    try {
        f();
        g_last_error.clear();
        return IR_OK;
    } catch (const Error& e) {
        return fail(static_cast<ir_status>(static_cast<int>(e.kind())), e.what());
    } catch (const nlohmann::json::exception& e) {
        return fail(IR_ERR_CONFIG, e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return fail(IR_ERR_IO, e.what());
    } catch (const std::bad_alloc&) {
        return fail(IR_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(IR_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(IR_ERR_INTERNAL, "unknown exception");
    }
}

void hand_out(const nlohmann::json& j, char** out) {
    if (!out) return;
    const std::string s = j.dump(2);
    char* buf = static_cast<char*>(std::malloc(s.size() + 1));
    if (!buf) throw std::bad_alloc();
    std::memcpy(buf, s.c_str(), s.size() + 1);
    *out = buf;
}

ProgressFn relay(ir_progress_fn fn, void* user) {
    if (!fn) return {};
    return [fn, user](const std::string& msg) { fn(msg.c_str(), user); };
}

#define IR_REQUIRE(cond, what) \
    if (!(cond)) return fail(IR_ERR_INVALID_ARGUMENT, what)

}  // namespace

extern "C" {

const char* ir_version(void) { return kEngineVersion; }

const char* ir_last_error(void) { return g_last_error.c_str(); }

const char* ir_status_name(ir_status status) {
    switch (status) {
        case IR_OK: return "ok";
        case IR_ERR_CONFIG: return "config error";
        case IR_ERR_DATA: return "data error";
        case IR_ERR_NUMERIC: return "numeric error";
        case IR_ERR_DIMENSION: return "dimension error";
        case IR_ERR_INDEX: return "index error";
        case IR_ERR_CONTRACT: return "contract error";
        case IR_ERR_IO: return "io error";
        case IR_ERR_INVALID_ARGUMENT: return "invalid argument";
        case IR_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

ir_status ir_config_profile(const char* name, ir_config** out) {
    IR_REQUIRE(name && out, "name and out must be non-null");
    return guarded([&] { *out = new ir_config{profile(name)}; });
}

ir_status ir_config_load(const char* path, ir_config** out) {
    IR_REQUIRE(path && out, "path and out must be non-null");
    return guarded([&] { *out = new ir_config{load_config_or_manifest(path)}; });
}

ir_status ir_config_from_json(const char* json, ir_config** out) {
    IR_REQUIRE(json && out, "json and out must be non-null");
    return guarded([&] {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(json);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(std::string("config is not valid JSON: ") + e.what());
        }
        *out = new ir_config{run_config_from_json(doc)};
    });
}

ir_status ir_config_save(const ir_config* config, const char* path) {
    IR_REQUIRE(config && path, "config and path must be non-null");
    return guarded([&] { save_run_config(path, config->value); });
}

void ir_config_free(ir_config* config) { delete config; }

namespace {
ir_status override_with(ir_config* config, const Overrides& o) {
    IR_REQUIRE(config, "config must be non-null");
    return guarded([&] {
        RunConfig next = config->value;
        apply_overrides(next, o);
        next.validate();
        config->value = std::move(next);
    });
}
}  // namespace

ir_status ir_config_set_seed(ir_config* config, uint64_t seed) {
    Overrides o;
    o.seed = seed;
    return override_with(config, o);
}

ir_status ir_config_set_epochs(ir_config* config, int epochs) {
    Overrides o;
    o.epochs = epochs;
    return override_with(config, o);
}

ir_status ir_config_set_lambda(ir_config* config, double lambda) {
    Overrides o;
    o.lambda = lambda;
    return override_with(config, o);
}

ir_status ir_config_set_variant(ir_config* config, const char* variant) {
    IR_REQUIRE(variant, "variant must be non-null");
    Overrides o;
    try {
        o.variant = parse_variant(variant);
    } catch (const Error& e) {
        return fail(static_cast<ir_status>(static_cast<int>(e.kind())), e.what());
    }
    return override_with(config, o);
}

ir_status ir_config_set_threads(ir_config* config, int threads) {
    Overrides o;
    o.threads = threads;
    return override_with(config, o);
}

ir_status ir_config_hash(const ir_config* config, char* buf, size_t buf_len) {
    IR_REQUIRE(config && buf, "config and buf must be non-null");
    return guarded([&] {
        const std::string h = config_hash(config->value);
        if (buf_len < h.size() + 1) throw ContractError("hash buffer needs " + std::to_string(h.size() + 1) + " bytes");
        std::memcpy(buf, h.c_str(), h.size() + 1);
    });
}

ir_status ir_generate(const ir_config* config, const char* out_dir, int force, char** json_out) {
    IR_REQUIRE(config && out_dir, "config and out_dir must be non-null");
    return guarded([&] { hand_out(cmd_generate(config->value, out_dir, force != 0), json_out); });
}

ir_status ir_train(const ir_config* config, const char* data_dir, const char* out_dir, int resume,
                   ir_progress_fn progress, void* user, char** json_out) {
    IR_REQUIRE(config && data_dir && out_dir, "config, data_dir and out_dir must be non-null");
    return guarded(
        [&] { hand_out(cmd_train(config->value, data_dir, out_dir, resume != 0, relay(progress, user)), json_out); });
}

ir_status ir_evaluate(const char* checkpoint, const char* data_dir, const char* out_dir, const char* split,
                      char** json_out) {
    IR_REQUIRE(checkpoint && data_dir && out_dir, "checkpoint, data_dir and out_dir must be non-null");
    return guarded([&] { hand_out(cmd_evaluate(checkpoint, data_dir, out_dir, split ? split : "test"), json_out); });
}

ir_status ir_compare(const char* baseline_report, const char* candidate_report, const char* out_file,
                     char** json_out) {
    IR_REQUIRE(baseline_report && candidate_report, "report paths must be non-null");
    return guarded(
        [&] { hand_out(cmd_compare(baseline_report, candidate_report, out_file ? out_file : ""), json_out); });
}

ir_status ir_cluster(const char* checkpoint, const char* data_dir, const char* out_dir, int k, size_t exemplars,
                     uint64_t seed, char** json_out) {
    IR_REQUIRE(checkpoint && data_dir && out_dir, "checkpoint, data_dir and out_dir must be non-null");
    return guarded([&] { hand_out(cmd_cluster(checkpoint, data_dir, out_dir, k, exemplars, seed), json_out); });
}

ir_status ir_ablate(const ir_config* config, const char* out_dir, ir_ablation_mode mode, const uint64_t* seeds,
                    size_t seed_count, ir_progress_fn progress, void* user, char** json_out) {
    IR_REQUIRE(config && out_dir, "config and out_dir must be non-null");
    IR_REQUIRE(seeds || seed_count == 0, "seeds must be non-null when seed_count > 0");
    AblationMode m;
    switch (mode) {
        case IR_ABLATE_ARCHITECTURE: m = AblationMode::Architecture; break;
        case IR_ABLATE_HEADS: m = AblationMode::Heads; break;
        case IR_ABLATE_BOTH: m = AblationMode::Both; break;
        default: return fail(IR_ERR_INVALID_ARGUMENT, "unknown ablation mode");
    }
    return guarded([&] {
        const std::vector<std::uint64_t> s(seeds, seeds + seed_count);
        hand_out(cmd_ablate(config->value, out_dir, m, s, relay(progress, user)), json_out);
    });
}

ir_status ir_inspect(const char* path, char** json_out) {
    IR_REQUIRE(path, "path must be non-null");
    return guarded([&] { hand_out(cmd_inspect(path), json_out); });
}

void ir_string_free(char* s) { std::free(s); }

ir_status ir_model_create(const ir_config* config, ir_model** out) {
    IR_REQUIRE(config && out, "config and out must be non-null");
    return guarded([&] {
        auto m = std::make_unique<ir_model>();
        m->config = config->value;
        m->config.validate();
        m->model = std::make_unique<IntentRecModel>(m->config.model);
        *out = m.release();
    });
}

ir_status ir_model_load(const char* checkpoint, ir_model** out) {
    IR_REQUIRE(checkpoint && out, "checkpoint and out must be non-null");
    return guarded([&] {
        auto m = std::make_unique<ir_model>();
        const CheckpointMeta meta = read_checkpoint_meta(checkpoint);
        m->config = run_config_from_json(meta.config);
        m->model = std::make_unique<IntentRecModel>(m->config.model);
        load_checkpoint(checkpoint, m->model->params(), model_hash(m->config.model));
        *out = m.release();
    });
}

void ir_model_free(ir_model* model) { delete model; }

ir_status ir_model_num_items(const ir_model* model, int32_t* out) {
    IR_REQUIRE(model && out, "model and out must be non-null");
    *out = model->config.model.num_items;
    return IR_OK;
}

ir_status ir_model_num_parameters(const ir_model* model, size_t* out) {
    IR_REQUIRE(model && out, "model and out must be non-null");
    *out = model->model->params().scalar_count();
    return IR_OK;
}

ir_status ir_model_score(const ir_model* model, const ir_interaction* history, size_t length, double* scores,
                         size_t scores_len) {
    IR_REQUIRE(model && scores, "model and scores must be non-null");
    IR_REQUIRE(history && length > 0, "history must hold at least one interaction");
    return guarded([&] {
        const auto n_items = static_cast<std::size_t>(model->config.model.num_items);
        if (scores_len < n_items)
            throw DimensionError("scores buffer holds " + std::to_string(scores_len) + ", need " +
                                 std::to_string(n_items));
        UserSequence seq;
        for (std::size_t i = 0; i < length; ++i) {
            const ir_interaction& src = history[i];
            if (src.genre_count < 0 || src.genre_count > 3)
                throw DataError("interaction " + std::to_string(i) + ": genre_count must be in [0, 3]");
            Interaction x;
            x.timestamp = src.timestamp;
            x.item_id = src.item_id;
            x.action_type = src.action_type;
            x.genres.assign(src.genres, src.genres + src.genre_count);
            x.movie_show = src.movie_show;
            x.time_since_release = src.tsr_bucket;
            x.duration = src.duration;
            x.episode_position = src.episode_position;
            seq.interactions.push_back(std::move(x));
        }
        validate_sequence(seq, model->config.model.num_items);
        Graph g;
        const ModelOutputs out = model->model->forward(g, seq.interactions);
        const Tensor& logits = out.item.logits.value();
        const std::size_t last = logits.rows() - 1;
        for (std::size_t j = 0; j < n_items; ++j) scores[j] = logits.at(last, j);
    });
}

}  // extern "C"
