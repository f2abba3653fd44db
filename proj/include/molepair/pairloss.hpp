#pragma once

// The pairwise preference objective over ID/OOD score pairs.
//
// For an ID score e_in and an OOD score e_out the margin is
// delta = e_out - e_in (positive = correctly ranked). The Bradley-Terry
// probability that the ID sample is preferred is sigmoid(beta * delta), and
// the per-pair loss is log(1 + exp(-beta * delta)).

#include <span>
#include <vector>

#include "molepair/numerics.hpp"

namespace molepair {

struct LossConfig {
    double beta = 0.1;
    double lambda = 0.01;

    void validate() const;  // beta > 0, lambda >= 0
};

/// All ood x id margins of a minibatch and their hard-pair weights.
struct MarginBatch {
    std::vector<double> id_scores;   // m
    std::vector<double> ood_scores;  // k
    Matrix margins;                  // k x m, margins(j, i) = ood[j] - id[i]
    Matrix weights;                  // k x m, beta * sigmoid(-beta * margin)

    /// Throws InvalidParameter if either side is empty or beta <= 0.
    static MarginBatch build(std::vector<double> id_scores, std::vector<double> ood_scores,
                             double beta);
};

struct LossResult {
    double loss = 0.0;
    std::vector<double> id_grad;   // dL/d(id score)
    std::vector<double> ood_grad;  // dL/d(ood score)
};

/// sigmoid(beta * (e_out - e_in)).
double pair_probability(double e_in, double e_out, double beta);

/// Mean over all k*m pairs of log1pexp(-beta * margin), with exact score gradients.
LossResult mole_pair_loss(const MarginBatch& batch, const LossConfig& cfg);

/// lambda * (mean(id^2) + mean(ood^2)) and its gradients (2 lambda s / n per side).
LossResult l2_regularizer(std::span<const double> id_scores, std::span<const double> ood_scores,
                          double lambda);

/// Pairwise loss plus the l2 gauge term, gradients summed.
LossResult total_loss(const MarginBatch& batch, const LossConfig& cfg);

/// w(delta) = beta * sigmoid(-beta * delta), in (0, beta), strictly decreasing.
double hard_pair_weight(double delta, double beta);

/// First-order margin increase of one gradient step of size `lr` on a single pair:
/// lr * w(delta) * ||d||^2, where d is the difference of the two score gradients.
double predicted_margin_gain(double delta, double beta, double lr, double dir_norm_sq);

}  // namespace molepair
