#pragma once

// Comparison detectors: classifier-confidence scores (MSP, ODIN, Energy) and
// feature-space distances (Mahalanobis, KNN, LOF). Every scorer returns one
// value per row, larger = more OOD.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "molepair/data.hpp"
#include "molepair/head.hpp"

namespace molepair {

enum class TaskMode { kBinary, kMulticlass, kMultitask };

std::string_view to_string(TaskMode mode);
TaskMode parse_task_mode(std::string_view text);  // "binary" | "multiclass" | "multitask"

struct ClassifierConfig {
    TaskMode mode = TaskMode::kBinary;
    std::vector<std::size_t> hidden{64, 64};
    double lr = 0.01;
    double weight_decay = 5e-4;  // coupled L2, as in plain Adam
    std::size_t epochs = 500;
    std::size_t patience = 30;
    std::size_t batch_size = 128;
    std::uint64_t seed = 42;

    void validate() const;
    std::string to_json() const;
    static ClassifierConfig from_json(std::string_view text);
    bool operator==(const ClassifierConfig&) const = default;
};

/// Inputs with their training targets. Binary and multitask targets are 0/1 with
/// one column per output; multiclass targets are a single column of class indices.
struct LabeledFeatures {
    Matrix x;
    Matrix targets;
};

/// Supervised view of an EmbeddingSet's ID records.
struct PreparedLabels {
    LabeledFeatures train;
    LabeledFeatures val;               // may be empty
    std::vector<int> train_classes;    // per train row; binarized for binary mode
    std::size_t num_outputs = 1;
    std::optional<double> threshold;   // median split applied to continuous labels
};

/// Reads the ID train/val labels. Binary mode median-binarizes non-0/1 labels with
/// the train median (>= rule). Throws SchemaError if any needed label is missing.
PreparedLabels prepare_labels(const EmbeddingSet& data, TaskMode mode,
                              std::string_view purpose = "classifier");

struct ClassifierHead {
    Mlp net;
    TaskMode mode = TaskMode::kBinary;
    std::optional<double> threshold;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    double best_val_loss = 0.0;

    std::size_t num_outputs() const { return net.config().output_dim(); }
    Matrix logits(const Matrix& x) const { return net.predict(x); }
    /// Activations entering the final linear layer.
    Matrix features(const Matrix& x) const { return net.penultimate(x); }
};

/// Mean cross-entropy of `logits` against `targets` for the given mode.
double classification_loss(const Matrix& logits, const Matrix& targets, TaskMode mode,
                           Matrix* grad = nullptr);

/// Adam with coupled L2, shuffled minibatches, early stopping on val loss
/// (train loss when `val` is empty); returns the best checkpoint.
ClassifierHead train_classifier(const LabeledFeatures& train, const LabeledFeatures& val,
                                std::size_t num_outputs, const ClassifierConfig& cfg);
ClassifierHead train_classifier(const EmbeddingSet& data, const ClassifierConfig& cfg);

void save_classifier(const std::filesystem::path& path, const ClassifierHead& clf,
                     const ClassifierConfig& cfg);
/// Returns the head; fills `cfg` with the config it was trained under.
ClassifierHead load_classifier(const std::filesystem::path& path, ClassifierConfig* cfg = nullptr);

/// Per-row confidence: max(p, 1-p) (binary), max softmax (multiclass), task mean (multitask).
std::vector<double> confidence(const Matrix& logits, TaskMode mode);

std::vector<double> score_msp(const ClassifierHead& clf, const Matrix& batch);
std::vector<double> score_odin(const ClassifierHead& clf, const Matrix& batch,
                               double epsilon = 0.0014, double temperature = 1000.0);
std::vector<double> score_energy(const ClassifierHead& clf, const Matrix& batch);
/// Energy of raw logits, -logsumexp; single logits are augmented to [z, -z].
std::vector<double> energy_from_logits(const Matrix& logits, TaskMode mode);

enum class CovarianceEstimate { kLedoitWolf, kEmpirical, kRidge };
std::string_view to_string(CovarianceEstimate e);

struct FeatureStats {
    Matrix means;              // one row per class (a single row for the global mean)
    Matrix covariance;         // the estimate actually used
    Matrix precision;
    Matrix cholesky;           // lower factor of `covariance`
    double shrinkage = 0.0;    // Ledoit-Wolf intensity, 0 when not shrunk
    CovarianceEstimate estimate = CovarianceEstimate::kEmpirical;
};

/// Class means and pooled covariance. Empty `classes` fits one global mean.
/// With `shrink`, tries Ledoit-Wolf first; any estimate that is not positive
/// definite falls through to the next (empirical, then ridge 1e-6 * trace / d).
FeatureStats fit_feature_stats(const Matrix& features, const std::vector<int>& classes = {},
                               bool shrink = true);

/// Ledoit-Wolf intensity for already-centred rows, shrinking toward trace/d * I.
double ledoit_wolf_shrinkage(const Matrix& centred);

/// Minimum Mahalanobis distance over the fitted means.
std::vector<double> score_mahalanobis(const FeatureStats& stats, const Matrix& batch);

struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;  // population std; 1 where a column is constant

    static Standardizer fit(const Matrix& train);
    Matrix apply(const Matrix& x) const;
};

/// Mean Euclidean distance to the k nearest train rows (ties by train index).
std::vector<double> score_knn(const Matrix& train, const Matrix& batch, std::size_t k = 50);

/// Local outlier factor of each query against the train set (novelty mode).
std::vector<double> score_lof(const Matrix& train, const Matrix& batch, std::size_t n_neighbors = 20);

}  // namespace molepair
