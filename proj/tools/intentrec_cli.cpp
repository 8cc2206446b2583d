// intentrec: command-line front end over the C API.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "intentrec/intentrec.h"

namespace {

struct Global {
    std::string config;
    std::string profile = "desk";
    std::optional<std::uint64_t> seed;
    std::string out;
    bool force = false;
    std::optional<int> threads;
};

// Releases the config handle on scope exit.
struct ConfigHandle {
    ir_config* ptr = nullptr;
    ~ConfigHandle() { ir_config_free(ptr); }
};

[[noreturn]] void die(ir_status s) {
    std::fprintf(stderr, "intentrec: %s: %s\n", ir_status_name(s), ir_last_error());
    std::exit(static_cast<int>(s));
}

void check(ir_status s) {
    if (s != IR_OK) die(s);
}

void print_and_free(char* json) {
    if (json) {
        std::printf("%s\n", json);
        ir_string_free(json);
    }
}

void progress(const char* msg, void*) {
    std::fprintf(stderr, "%s\n", msg);
    std::fflush(stderr);
}

ConfigHandle load_config(const Global& g, std::optional<int> epochs, std::optional<double> lambda,
                         const std::string& variant) {
    ConfigHandle h;
    check(g.config.empty() ? ir_config_profile(g.profile.c_str(), &h.ptr) : ir_config_load(g.config.c_str(), &h.ptr));
    if (g.seed) check(ir_config_set_seed(h.ptr, *g.seed));
    if (g.threads) check(ir_config_set_threads(h.ptr, *g.threads));
    if (epochs) check(ir_config_set_epochs(h.ptr, *epochs));
    if (lambda) check(ir_config_set_lambda(h.ptr, *lambda));
    if (!variant.empty()) check(ir_config_set_variant(h.ptr, variant.c_str()));
    return h;
}

std::string need_out(const Global& g) {
    if (g.out.empty()) {
        std::fprintf(stderr, "intentrec: --out is required for this command\n");
        std::exit(IR_ERR_CONFIG);
    }
    return g.out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical intent-aware sequential recommender"};
    app.set_version_flag("--version", std::string(ir_version()));
    app.require_subcommand(1);
    app.fallthrough();

    Global g;
    app.add_option("--config", g.config, "Config file or manifest to run from");
    app.add_option("--profile", g.profile, "Built-in profile when --config is absent")
        ->check(CLI::IsMember({"micro", "desk", "paper"}));
    app.add_option("--seed", g.seed, "Seed for data, init and shuffling");
    app.add_option("--out", g.out, "Output directory (or file for compare)");
    app.add_flag("--force", g.force, "Overwrite a non-empty output directory");
    app.add_option("--threads", g.threads, "Worker threads for gradient computation")->check(CLI::PositiveNumber);

    std::optional<int> epochs;
    std::optional<double> lambda;
    std::string variant;
    std::string data_dir, checkpoint, split = "test";
    bool resume = false;

    auto* gen = app.add_subcommand("generate", "Generate a planted-intent dataset");

    auto* train = app.add_subcommand("train", "Train one variant on a dataset");
    train->add_option("--data", data_dir, "Dataset directory")->required();
    train->add_option("--variant", variant, "v0, v1, v2 or v3");
    train->add_option("--epochs", epochs, "Epoch count");
    train->add_option("--lambda", lambda, "Intent-loss weight");
    train->add_flag("--resume", resume, "Continue from the checkpoint in --out");

    auto* eval = app.add_subcommand("evaluate", "Score a checkpoint on a dataset split");
    eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    eval->add_option("--data", data_dir, "Dataset directory")->required();
    eval->add_option("--split", split, "test or val")->check(CLI::IsMember({"test", "val"}));

    std::string report_a, report_b;
    auto* cmp = app.add_subcommand("compare", "Relative deltas and paired t-test between two reports");
    cmp->add_option("baseline", report_a, "Baseline report.json")->required();
    cmp->add_option("candidate", report_b, "Candidate report.json")->required();

    std::string mode = "both";
    std::vector<std::uint64_t> seeds{1, 2, 3};
    auto* abl = app.add_subcommand("ablate", "Architecture and prediction-head ablation tables");
    abl->add_option("--mode", mode, "architecture, heads or both")
        ->check(CLI::IsMember({"architecture", "heads", "both"}));
    abl->add_option("--seeds", seeds, "Seeds to average over")->expected(1, -1);
    abl->add_option("--epochs", epochs, "Epoch count");

    int k = 6;
    std::size_t exemplars = 10;
    std::uint64_t kmeans_seed = 1;
    auto* clu = app.add_subcommand("cluster", "Cluster final-position intent embeddings");
    clu->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    clu->add_option("--data", data_dir, "Dataset directory")->required();
    clu->add_option("--k", k, "Cluster count")->check(CLI::PositiveNumber);
    clu->add_option("--exemplars", exemplars, "Exemplar users per cluster and head");
    clu->add_option("--kmeans-seed", kmeans_seed, "Seed for K-means++ seeding");

    std::string inspect_path;
    auto* ins = app.add_subcommand("inspect", "Summarise a manifest, checkpoint or report");
    ins->add_option("path", inspect_path, "Artifact path or run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : IR_ERR_CONFIG;
    }

    char* json = nullptr;
    if (gen->parsed()) {
        auto cfg = load_config(g, std::nullopt, std::nullopt, "");
        check(ir_generate(cfg.ptr, need_out(g).c_str(), g.force ? 1 : 0, &json));
    } else if (train->parsed()) {
        auto cfg = load_config(g, epochs, lambda, variant);
        check(ir_train(cfg.ptr, data_dir.c_str(), need_out(g).c_str(), resume ? 1 : 0, progress, nullptr, &json));
    } else if (eval->parsed()) {
        check(ir_evaluate(checkpoint.c_str(), data_dir.c_str(), need_out(g).c_str(), split.c_str(), &json));
    } else if (cmp->parsed()) {
        check(ir_compare(report_a.c_str(), report_b.c_str(), g.out.empty() ? nullptr : g.out.c_str(), &json));
    } else if (abl->parsed()) {
        auto cfg = load_config(g, epochs, std::nullopt, "");
        const ir_ablation_mode m = mode == "architecture" ? IR_ABLATE_ARCHITECTURE
                                   : mode == "heads"      ? IR_ABLATE_HEADS
                                                          : IR_ABLATE_BOTH;
        check(ir_ablate(cfg.ptr, need_out(g).c_str(), m, seeds.data(), seeds.size(), progress, nullptr, &json));
    } else if (clu->parsed()) {
        if (g.seed) kmeans_seed = *g.seed;
        check(ir_cluster(checkpoint.c_str(), data_dir.c_str(), need_out(g).c_str(), k, exemplars, kmeans_seed,
                         &json));
    } else if (ins->parsed()) {
        check(ir_inspect(inspect_path.c_str(), &json));
    }
    print_and_free(json);
    return 0;
}
