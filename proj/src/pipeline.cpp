#include "intentrec/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "intentrec/errors.hpp"

namespace intentrec {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
}

json read_json(const fs::path& p) {
    try {
        return json::parse(read_file(p));
    } catch (const json::parse_error& e) {
        throw DataError(p.string() + " is not valid JSON: " + e.what());
    }
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

json artifact(const fs::path& p) { return {{"path", p.filename().string()}, {"fnv1a", fnv1a_hex(read_file(p))}}; }

json manifest(const std::string& command, const RunConfig& config, json fields) {
    json m = {{"manifest_version", kManifestVersion},
              {"engine_version", kEngineVersion},
              {"command", command},
              {"config", to_json(config)},
              {"config_hash", config_hash(config)},
              {"model_hash", model_hash(config.model)},
              {"seed", config.data.generator.seed},
              {"variant", variant_name(config.model.variant)},
              {"created_at", utc_now()}};
    for (auto& [k, v] : fields.items()) m[k] = v;
    return m;
}

bool non_empty_dir(const fs::path& p) { return fs::exists(p) && fs::is_directory(p) && !fs::is_empty(p); }

struct LoadedModel {
    RunConfig config;
    std::unique_ptr<IntentRecModel> model;
    CheckpointMeta meta;
};

LoadedModel load_model(const fs::path& checkpoint) {
    LoadedModel lm;
    const CheckpointMeta head = read_checkpoint_meta(checkpoint);
    lm.config = run_config_from_json(head.config);
    lm.model = std::make_unique<IntentRecModel>(lm.config.model);
    lm.meta = load_checkpoint(checkpoint, lm.model->params(), model_hash(lm.config.model));
    return lm;
}

// Names every feature-schema field that differs between the dataset's config and the model's.
void check_schema(const RunConfig& model_cfg, const fs::path& data_dir) {
    const fs::path mpath = data_dir / files::kManifest;
    if (!fs::exists(mpath)) return;
    const json data_cfg = read_json(mpath).at("config");
    std::vector<std::string> bad;
    if (data_cfg.at("data").at("num_items") != model_cfg.data.num_items) bad.push_back("data.num_items");
    if (!bad.empty()) {
        std::string msg = "dataset schema does not match checkpoint:";
        for (const auto& b : bad) msg += " " + b;
        throw DataError(msg);
    }
}

}  // namespace

Dataset make_dataset(const RunConfig& config) {
    config.validate();
    Dataset d;
    d.catalog = generate_catalog(config.data.num_items, config.data.generator.seed);
    GeneratedUsers gen = generate_users(d.catalog, config.data.generator);
    d.split = split_dataset(gen.users, config.data.split, config.data.generator.seed);
    d.latent = std::move(gen.latent);
    return d;
}

Dataset load_dataset(const fs::path& dir, int num_items) {
    Dataset d;
    d.catalog = read_catalog(dir / files::kCatalog);
    if (static_cast<int>(d.catalog.size()) != num_items)
        throw DataError("dataset catalog holds " + std::to_string(d.catalog.size()) + " items, config expects " +
                        std::to_string(num_items));
    d.split.train = read_jsonl(dir / files::kTrain, num_items);
    d.split.val = read_jsonl(dir / files::kVal, num_items);
    d.split.test = read_jsonl(dir / files::kTest, num_items);
    if (fs::exists(dir / files::kLatent)) d.latent = read_latent_jsonl(dir / files::kLatent);
    return d;
}

RunConfig load_config_or_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + " is not valid JSON: " + e.what());
    }
    if (doc.is_object() && doc.contains("manifest_version")) {
        RunConfig c = run_config_from_json(doc.at("config"));
        if (doc.contains("config_hash") && doc.at("config_hash").get<std::string>() != config_hash(c))
            throw ConfigError("manifest " + path.string() + " config hash " + doc.at("config_hash").get<std::string>() +
                              " does not match its embedded config (" + config_hash(c) + ")");
        return c;
    }
    return run_config_from_json(doc);
}

json cmd_generate(const RunConfig& config, const fs::path& out, bool force) {
    config.validate();
    if (non_empty_dir(out) && !force)
        throw ConfigError("output directory " + out.string() + " is not empty; pass --force to overwrite");
    if (force && fs::exists(out)) {
        for (const char* f : {files::kCatalog, files::kTrain, files::kVal, files::kTest, files::kLatent, files::kManifest})
            fs::remove(out / f);
    }
    fs::create_directories(out);
    const Dataset d = make_dataset(config);
    write_catalog(out / files::kCatalog, d.catalog);
    write_jsonl(out / files::kTrain, d.split.train);
    write_jsonl(out / files::kVal, d.split.val);
    write_jsonl(out / files::kTest, d.split.test);
    write_latent_jsonl(out / files::kLatent, d.latent);
    json m = manifest("generate", config,
                      {{"dataset", out.string()},
                       {"counts", {{"train", d.split.train.size()}, {"val", d.split.val.size()}, {"test", d.split.test.size()}}},
                       {"artifacts",
                        {artifact(out / files::kCatalog), artifact(out / files::kTrain), artifact(out / files::kVal),
                         artifact(out / files::kTest), artifact(out / files::kLatent)}}});
    write_file(out / files::kManifest, m.dump(2) + "\n");
    return m;
}

json cmd_train(const RunConfig& config, const fs::path& data_dir, const fs::path& out, bool resume,
               const ProgressFn& progress) {
    config.validate();
    const Dataset d = load_dataset(data_dir, config.data.num_items);
    if (d.split.train.empty()) throw DataError("training split is empty");
    IntentRecModel model(config.model);
    Trainer trainer(model, config.training);
    const fs::path ckpt = out / files::kCheckpoint;
    CheckpointMeta meta;
    meta.config = to_json(config);
    meta.config_hash = model_hash(config.model);
    if (resume && fs::exists(ckpt)) {
        CheckpointMeta prev = load_checkpoint(ckpt, model.params(), meta.config_hash, &trainer.optimizer());
        trainer.set_epochs_completed(prev.epochs_completed);
        meta.trace = std::move(prev.trace);
        if (progress) progress("resuming after epoch " + std::to_string(prev.epochs_completed));
    }
    fs::create_directories(out);
    trainer.train(d.split.train, [&](const EpochRecord& r) {
        meta.trace.push_back(r);
        meta.epochs_completed = trainer.epochs_completed();
        if (progress) {
            std::ostringstream os;
            os << "epoch " << r.epoch << " item_loss " << r.item_loss << " total " << r.total_loss;
            progress(os.str());
        }
    });
    meta.epochs_completed = trainer.epochs_completed();
    save_checkpoint(ckpt, model.params(), meta, &trainer.optimizer());
    write_file(out / files::kLossTrace, loss_trace_csv(meta.trace, model.config().heads));
    json m = manifest("train", config,
                      {{"dataset", data_dir.string()},
                       {"checkpoint", (out / files::kCheckpoint).string()},
                       {"epochs_completed", meta.epochs_completed},
                       {"artifacts", {artifact(ckpt), artifact(out / files::kLossTrace)}}});
    write_file(out / files::kManifest, m.dump(2) + "\n");
    return m;
}

json cmd_evaluate(const fs::path& checkpoint, const fs::path& data_dir, const fs::path& out, const std::string& split) {
    LoadedModel lm = load_model(checkpoint);
    check_schema(lm.config, data_dir);
    const Dataset d = load_dataset(data_dir, lm.config.data.num_items);
    const std::vector<UserSequence>* users = nullptr;
    if (split == "test") users = &d.split.test;
    else if (split == "val") users = &d.split.val;
    else throw ConfigError("evaluation split must be 'test' or 'val'");
    const EvalReport rep = evaluate(*lm.model, *users);
    fs::create_directories(out);
    write_report(out / files::kReport, rep);
    json m = manifest("evaluate", lm.config,
                      {{"dataset", data_dir.string()},
                       {"checkpoint", checkpoint.string()},
                       {"split", split},
                       {"reports", {(out / files::kReport).string(), (out / "report.csv").string()}},
                       {"artifacts", {artifact(out / files::kReport), artifact(out / "report.csv")}},
                       {"item_mrr", rep.item_mrr},
                       {"item_wmrr", rep.item_wmrr}});
    write_file(out / files::kManifest, m.dump(2) + "\n");
    return m;
}

json cmd_compare(const fs::path& a, const fs::path& b, const fs::path& out_file) {
    const EvalReport ra = read_report(a), rb = read_report(b);
    json j = compare(ra, rb).to_json();
    j["baseline"] = a.string();
    j["candidate"] = b.string();
    if (!out_file.empty()) write_file(out_file, j.dump(2) + "\n");
    return j;
}

json cmd_cluster(const fs::path& checkpoint, const fs::path& data_dir, const fs::path& out, int k,
                 std::size_t exemplars, std::uint64_t seed) {
    LoadedModel lm = load_model(checkpoint);
    check_schema(lm.config, data_dir);
    const Dataset d = load_dataset(data_dir, lm.config.data.num_items);
    std::vector<UserSequence> users = d.split.train;
    users.insert(users.end(), d.split.val.begin(), d.split.val.end());
    users.insert(users.end(), d.split.test.begin(), d.split.test.end());
    const auto set = collect_intent_embeddings(*lm.model, users, d.latent);
    PointSet pts;
    std::vector<int> planted;
    for (const auto& e : set) {
        pts.push_back(e.z);
        planted.push_back(e.planted);
    }
    const KMeansResult km = kmeans_pp(pts, k, seed);
    const Projection proj = pca_project(pts, 2);

    std::ostringstream csv;
    csv.precision(17);
    csv << "user_id,cluster,x,y,planted\n";
    for (std::size_t i = 0; i < set.size(); ++i)
        csv << set[i].user_id << ',' << km.assignments[i] << ',' << proj.coords[i][0] << ',' << proj.coords[i][1] << ','
            << set[i].planted << '\n';
    fs::create_directories(out);
    write_file(out / "assignments.csv", csv.str());

    // Exemplars per cluster: users closest to the center.
    json clusters = json::array();
    for (int c = 0; c < k; ++c) {
        std::vector<std::pair<double, std::int64_t>> members;
        for (std::size_t i = 0; i < set.size(); ++i) {
            if (km.assignments[i] != c) continue;
            double dist = 0.0;
            for (std::size_t j = 0; j < pts[i].size(); ++j) {
                const double diff = pts[i][j] - km.centers[static_cast<std::size_t>(c)][j];
                dist += diff * diff;
            }
            members.push_back({dist, set[i].user_id});
        }
        std::stable_sort(members.begin(), members.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
        std::vector<std::int64_t> ex;
        for (std::size_t i = 0; i < std::min(exemplars, members.size()); ++i) ex.push_back(members[i].second);
        clusters.push_back({{"cluster", c}, {"size", members.size()}, {"exemplars", ex}});
    }
    json summary = {{"k", k},
                    {"inertia", km.inertia},
                    {"iterations", km.iterations},
                    {"explained_variance_ratio", proj.explained_variance_ratio},
                    {"clusters", clusters}};
    const bool has_planted = std::all_of(planted.begin(), planted.end(), [](int p) { return p >= 0; });
    if (has_planted && !planted.empty()) {
        summary["purity"] = cluster_purity(km.assignments, planted);
        summary["adjusted_rand_index"] = adjusted_rand_index(km.assignments, planted);
    }
    write_file(out / "clusters.json", summary.dump(2) + "\n");

    std::vector<std::string> names;
    for (const auto& h : lm.config.model.heads) names.push_back(h.name);
    const AttentionReport ar = attention_report(set, names, exemplars);
    write_file(out / "attention.json", ar.to_json().dump(2) + "\n");

    json m = manifest("cluster", lm.config,
                      {{"dataset", data_dir.string()},
                       {"checkpoint", checkpoint.string()},
                       {"k", k},
                       {"reports", {(out / "clusters.json").string(), (out / "attention.json").string(),
                                    (out / "assignments.csv").string()}},
                       {"artifacts", {artifact(out / "clusters.json"), artifact(out / "attention.json"),
                                      artifact(out / "assignments.csv")}}});
    write_file(out / files::kManifest, m.dump(2) + "\n");
    return summary;
}

json cmd_inspect(const fs::path& path) {
    if (fs::is_directory(path)) {
        if (fs::exists(path / files::kManifest)) return cmd_inspect(path / files::kManifest);
        throw IoError(path.string() + " holds no manifest");
    }
    const json doc = read_json(path);
    if (doc.contains("manifest_version")) {
        json out = doc;
        out.erase("config");
        // Re-verify every listed artifact against its recorded hash.
        if (doc.contains("artifacts")) {
            json checks = json::array();
            for (const auto& a : doc.at("artifacts")) {
                const fs::path p = path.parent_path() / a.at("path").get<std::string>();
                const bool ok = fs::exists(p) && fnv1a_hex(read_file(p)) == a.at("fnv1a").get<std::string>();
                checks.push_back({{"path", a.at("path")}, {"ok", ok}});
            }
            out["artifact_checks"] = checks;
        }
        return out;
    }
    if (doc.contains("format_version") && doc.contains("params")) {
        json params = json::object();
        std::size_t scalars = 0;
        for (const auto& [name, p] : doc.at("params").items()) {
            params[name] = p.at("shape");
            scalars += p.at("data").size();
        }
        return {{"kind", "checkpoint"},
                {"format_version", doc.at("format_version")},
                {"config_hash", doc.at("config_hash")},
                {"variant", doc.at("config").at("variant")},
                {"epochs_completed", doc.at("epochs_completed")},
                {"parameters", params},
                {"scalar_count", scalars},
                {"trace", doc.at("trace")}};
    }
    if (doc.contains("item_mrr")) {
        json out = doc;
        out.erase("users");
        out["kind"] = "report";
        return out;
    }
    return {{"kind", "unknown"}};
}

// ---- ablation ------------------------------------------------------------------

double AblationRow::mean_mrr() const {
    return mrr.empty() ? 0.0 : std::accumulate(mrr.begin(), mrr.end(), 0.0) / static_cast<double>(mrr.size());
}

double AblationRow::mean_wmrr() const {
    return wmrr.empty() ? 0.0 : std::accumulate(wmrr.begin(), wmrr.end(), 0.0) / static_cast<double>(wmrr.size());
}

const AblationRow& AblationTable::row(const std::string& name) const {
    for (const auto& r : rows)
        if (r.name == name) return r;
    throw IndexError("ablation table '" + title + "' has no row '" + name + "'");
}

std::string AblationTable::markdown() const {
    const AblationRow& base = row(baseline);
    std::ostringstream os;
    os << std::fixed;
    os << "### " << title << " (relative to " << baseline << ")\n\n";
    os << "| variant | MRR | WMRR | MRR %Δ | WMRR %Δ |\n|---|---|---|---|---|\n";
    for (const auto& r : rows) {
        os << "| " << r.name << " | " << std::setprecision(4) << r.mean_mrr() << " | " << r.mean_wmrr() << " | "
           << std::showpos << std::setprecision(2) << percent_delta(base.mean_mrr(), r.mean_mrr()) << "% | "
           << percent_delta(base.mean_wmrr(), r.mean_wmrr()) << "% |" << std::noshowpos << '\n';
    }
    return os.str();
}

std::string AblationTable::csv() const {
    const AblationRow& base = row(baseline);
    std::ostringstream os;
    os.precision(17);
    os << "variant,seed_index,mrr,wmrr,mean_mrr,mean_wmrr,mrr_delta_pct,wmrr_delta_pct\n";
    for (const auto& r : rows)
        for (std::size_t s = 0; s < r.mrr.size(); ++s)
            os << r.name << ',' << s << ',' << r.mrr[s] << ',' << r.wmrr[s] << ',' << r.mean_mrr() << ','
               << r.mean_wmrr() << ',' << percent_delta(base.mean_mrr(), r.mean_mrr()) << ','
               << percent_delta(base.mean_wmrr(), r.mean_wmrr()) << '\n';
    return os.str();
}

EvalReport train_and_evaluate(const RunConfig& config, const Dataset& data) {
    config.validate();
    IntentRecModel model(config.model);
    train(model, data.split.train, config.training);
    return evaluate(model, data.split.test);
}

namespace {

struct RowSpec {
    std::string name;
    std::function<void(RunConfig&)> apply;
};

std::vector<RowSpec> architecture_rows() {
    return {
        {"V0", [](RunConfig& c) { c.model.variant = Variant::V0; c.model.heads.clear(); }},
        {"V1", [](RunConfig& c) { c.model.variant = Variant::V1; }},
        {"V2", [](RunConfig& c) { c.model.variant = Variant::V2; }},
        {"V3-1w", [](RunConfig& c) { c.model.variant = Variant::V3; c.model.features.window_seconds = kSecondsPerWeek; }},
        {"V3-1m", [](RunConfig& c) { c.model.variant = Variant::V3; c.model.features.window_seconds = kSecondsPerMonth; }},
    };
}

std::vector<RowSpec> head_rows() {
    auto only = [](const std::string& head) {
        return [head](RunConfig& c) {
            c.model.variant = Variant::V3;
            std::vector<IntentHeadSpec> keep;
            for (const auto& h : default_heads())
                if (h.name == head) keep.push_back(h);
            c.model.heads = keep;
        };
    };
    return {
        {"only-ActionType", only("action_type")},
        {"only-Genre", only("genre")},
        {"only-Movie/Show", only("movie_show")},
        {"only-TSR", only("tsr")},
        {"all", [](RunConfig& c) { c.model.variant = Variant::V3; c.model.heads = default_heads(); }},
    };
}

}  // namespace

AblationResult run_ablation(const RunConfig& base, AblationMode mode, const std::vector<std::uint64_t>& seeds,
                            const ProgressFn& progress) {
    if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
    AblationResult res;
    res.seeds = seeds;
    res.architecture.title = "Architecture ablation";
    res.architecture.baseline = "V1";
    res.heads.title = "Prediction-head ablation";
    res.heads.baseline = "V0";

    const bool arch = mode != AblationMode::Heads;
    const bool heads = mode != AblationMode::Architecture;
    const auto arows = architecture_rows();
    const auto hrows = head_rows();
    if (arch)
        for (const auto& r : arows) res.architecture.rows.push_back({r.name, {}, {}});
    // The head table is relative to v0, so it carries a v0 row even when run alone.
    if (heads) {
        res.heads.rows.push_back({"V0", {}, {}});
        for (const auto& r : hrows) res.heads.rows.push_back({r.name, {}, {}});
    }

    // Runs are cached by row name within a seed, so shared rows (V0, and V3-1w with all heads)
    // train once.
    for (const std::uint64_t seed : seeds) {
        RunConfig seeded = base;
        Overrides o;
        o.seed = seed;
        apply_overrides(seeded, o);
        const Dataset data = make_dataset(seeded);
        std::map<std::string, EvalReport> cache;
        auto run = [&](const RowSpec& spec, const std::string& key) -> const EvalReport& {
            auto it = cache.find(key);
            if (it != cache.end()) return it->second;
            RunConfig c = seeded;
            spec.apply(c);
            c.validate();
            if (progress) progress("seed " + std::to_string(seed) + ": training " + spec.name);
            return cache.emplace(key, train_and_evaluate(c, data)).first->second;
        };
        auto record = [](AblationTable& t, const std::string& name, const EvalReport& r) {
            for (auto& row : t.rows)
                if (row.name == name) {
                    row.mrr.push_back(r.item_mrr);
                    row.wmrr.push_back(r.item_wmrr);
                }
        };
        if (arch)
            for (const auto& r : arows) record(res.architecture, r.name, run(r, r.name == "V3-1w" ? "V3-all-1w" : r.name));
        if (heads) {
            record(res.heads, "V0", run(arows[0], "V0"));
            for (const auto& r : hrows) {
                const std::string key = r.name == "all" && base.model.features.window_seconds == kSecondsPerWeek
                                            ? "V3-all-1w"
                                            : r.name;
                record(res.heads, r.name, run(r, key));
            }
        }
    }
    return res;
}

json cmd_ablate(const RunConfig& base, const fs::path& out, AblationMode mode, const std::vector<std::uint64_t>& seeds,
                const ProgressFn& progress) {
    const AblationResult res = run_ablation(base, mode, seeds, progress);
    fs::create_directories(out);
    std::string md;
    json tables = json::object();
    if (!res.architecture.rows.empty()) {
        md += res.architecture.markdown() + "\n";
        write_file(out / "ablation_architecture.csv", res.architecture.csv());
        tables["architecture"] = (out / "ablation_architecture.csv").string();
    }
    if (!res.heads.rows.empty()) {
        md += res.heads.markdown() + "\n";
        write_file(out / "ablation_heads.csv", res.heads.csv());
        tables["heads"] = (out / "ablation_heads.csv").string();
    }
    write_file(out / "ablation.md", md);
    json artifacts = json::array();
    for (const char* f : {"ablation.md", "ablation_architecture.csv", "ablation_heads.csv"})
        if (fs::exists(out / f)) artifacts.push_back(artifact(out / f));
    json m = manifest("ablate", base, {{"seeds", seeds}, {"tables", tables}, {"artifacts", artifacts}});
    write_file(out / files::kManifest, m.dump(2) + "\n");
    return m;
}

}  // namespace intentrec
