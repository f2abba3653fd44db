#pragma once

// Batch commands behind the `molepair` executable. Each command writes a
// self-describing output directory; run_cli maps failures onto exit codes.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "molepair/baselines.hpp"
#include "molepair/metrics.hpp"
#include "molepair/trainer.hpp"

namespace molepair::cli {

namespace fs = std::filesystem;

// 0 success, 2 usage, 3 data, 4 numeric, 1 anything else.
int exit_code_for(const std::exception& e);

struct GenSynthOptions {
    fs::path config;
    fs::path out;
    std::optional<std::uint64_t> seed;
    bool write_csv = false;
};
/// Writes dataset.mper, manifest.json and synth_config.json (plus dataset.csv).
EmbeddingSet cmd_gen_synth(const GenSynthOptions& opts);

struct TrainOptions {
    fs::path data;
    std::optional<fs::path> config;
    fs::path out;
    std::optional<std::uint64_t> seed;
    std::optional<double> beta;
    std::optional<double> lambda;
    std::optional<std::size_t> epochs;
};

struct TrainSummary {
    TrainResult result;
    MetricsReport test;
};

/// Trains, scores the test split and writes config.json, checkpoint.bin,
/// final_checkpoint.bin, dynamics.csv, scores.csv, metrics.json, roc.csv, pr.csv.
TrainSummary cmd_train(const TrainOptions& opts);

/// Reads a TrainConfig file (or defaults) and applies command-line overrides.
TrainConfig resolve_train_config(const TrainOptions& opts);

inline const std::vector<std::string> kBaselineMethods = {"msp",         "odin", "energy",
                                                          "mahalanobis", "knn",  "lof"};

struct BaselineOptions {
    fs::path data;
    std::string method;
    fs::path out;
    std::optional<fs::path> config;  // ClassifierConfig JSON
    std::optional<std::uint64_t> seed;
    std::string task = "binary";
    double odin_epsilon = 0.0014;
    double odin_temperature = 1000.0;
    std::size_t knn_k = 50;
    std::size_t lof_neighbors = 20;
    std::string feature_space = "penultimate";  // or "input"
    bool shrink = true;
};

/// Scores the test split with one baseline. Reuses <out>/classifier.bin when it
/// was trained on the same data with the same classifier config.
MetricsReport cmd_baseline(const BaselineOptions& opts);

struct MetricsCommandOptions {
    fs::path scores;   // id,method,score
    fs::path data;     // supplies the ID/OOD tag of each id
    fs::path out;
    std::string aupr_positive = "OOD";
    std::string fpr95_mode = "step";
};
MetricsReport cmd_metrics(const MetricsCommandOptions& opts);

struct AblateOptions {
    fs::path data;
    std::optional<fs::path> config;
    std::vector<double> betas;
    std::vector<double> lambdas;
    fs::path out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs;
    std::size_t jobs = 1;
};

struct AblationRow {
    double beta = 0.0;
    double lambda = 0.0;
    double test_auroc = 0.0;
};

/// One training run per (beta, lambda), seeded base + grid index, merged in grid
/// order into ablation.csv.
std::vector<AblationRow> cmd_ablate(const AblateOptions& opts);

struct DynamicsOptions {
    fs::path run_dir;
    std::optional<fs::path> out;  // defaults to <run_dir>/weight_groups.csv
    double boundary_epsilon = 0.05;
};
WeightGroups cmd_dynamics(const DynamicsOptions& opts);

/// Parses argv, runs one command, prints errors to stderr and returns the exit code.
int run_cli(int argc, char** argv);

}  // namespace molepair::cli
