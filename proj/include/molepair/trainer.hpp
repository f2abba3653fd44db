#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "molepair/data.hpp"
#include "molepair/head.hpp"
#include "molepair/pairloss.hpp"

namespace molepair {

struct TrainConfig {
    std::size_t epochs = 500;
    std::size_t batch_size = 512;  // half ID, half OOD
    LossConfig loss;
    HeadConfig head;
    OptimizerConfig opt;
    std::uint64_t seed = 42;
    bool select_best_on_val = true;
    double dynamics_epsilon = 0.05;

    void validate() const;
    std::string to_json() const;
    /// Missing keys keep their defaults.
    static TrainConfig from_json(std::string_view text);
};

struct DynamicsRecord {
    std::size_t epoch = 0;
    double misranked_frac = 0.0;  // Pr(delta < 0)
    double boundary_mass = 0.0;   // Pr(|delta| < eps)
    double mean_margin = 0.0;     // E[delta]
    double train_loss = 0.0;
    std::optional<double> val_auroc;
};

/// Exact counts over every ood x id pair, delta = ood - id.
struct PairStats {
    std::uint64_t total = 0;
    std::uint64_t negative = 0;         // delta < 0
    std::uint64_t boundary = 0;         // |delta| < eps
    std::uint64_t nonneg_below_eps = 0; // 0 <= delta < eps
    std::uint64_t at_least_eps = 0;     // delta >= eps
    double mean_margin = 0.0;
};

/// Sort-based O((m + k) log m) pair counting; agrees exactly with the double loop.
PairStats pair_stats(const std::vector<double>& id_scores, const std::vector<double>& ood_scores,
                     double epsilon);

struct Batch {
    std::vector<std::size_t> id_rows;   // row indices into the EmbeddingSet
    std::vector<std::size_t> ood_rows;
};

/// One epoch of balanced minibatches over the train split. The longer side is
/// shuffled and truncated to whole half-batches; the shorter side is consumed in
/// fresh permutations, reshuffled whenever fewer than batch_size / 2 remain.
std::vector<Batch> make_balanced_batches(const EmbeddingSet& set, std::size_t batch_size, Rng& rng);

/// Eval-mode pair statistics of `head` on one split (both tags required).
DynamicsRecord compute_dynamics(const ScoringHead& head, const EmbeddingSet& set, double epsilon,
                                SplitTag split = SplitTag::kTrain);

struct TrainResult {
    ScoringHead head;          // best-on-val if selection is enabled, else final
    ScoringHead final_head;
    std::vector<DynamicsRecord> dynamics;
    std::size_t best_epoch = 0;  // 0 = the initialization
    std::optional<double> best_val_auroc;
    std::optional<double> final_val_auroc;
};

/// Raised when the objective turns non-finite; carries the last finite head.
class TrainingAborted : public NumericError {
public:
    TrainingAborted(const std::string& what, ScoringHead last_good, std::size_t epoch)
        : NumericError(what), last_good_(std::move(last_good)), epoch_(epoch) {}
    const ScoringHead& last_good() const noexcept { return last_good_; }
    std::size_t epoch() const noexcept { return epoch_; }

private:
    ScoringHead last_good_;
    std::size_t epoch_;
};

using EpochCallback = std::function<void(const DynamicsRecord&)>;

TrainResult train(const EmbeddingSet& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

struct WeightGroup {
    std::uint64_t count = 0;
    double mean_weight = 0.0;  // meaningless when count == 0
};

struct WeightGroups {
    WeightGroup hard;      // delta < 0
    WeightGroup boundary;  // |delta| < eps
    WeightGroup easy;      // delta > 0
    std::uint64_t pairs_examined = 0;
};

/// Mean hard-pair weight per group over all pairs, or over a seeded uniform
/// sample of `sample_pairs` pairs when m * k exceeds `max_exact_pairs`.
WeightGroups weight_groups(const std::vector<double>& id_scores,
                           const std::vector<double>& ood_scores, double beta,
                           double boundary_eps = 0.05, std::uint64_t max_exact_pairs = 10'000'000,
                           std::uint64_t sample_pairs = 1'000'000, std::uint64_t seed = 0);

std::string dynamics_to_csv(const std::vector<DynamicsRecord>& records);
std::string weight_groups_to_csv(const WeightGroups& groups);

}  // namespace molepair
