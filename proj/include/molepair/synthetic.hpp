#pragma once

// Gaussian verification worlds with closed-form posteriors, the two-point
// pairwise risk and its minimizer, and the Bayes-consistent canonical scorer.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "molepair/data.hpp"
#include "molepair/numerics.hpp"

namespace molepair {

/// Two Gaussian components, ID and OOD, with a prior on ID.
class GaussianWorld {
public:
    /// Throws SchemaError on dim 0, shape mismatches, non-SPD covariances or a prior outside (0,1).
    GaussianWorld(std::vector<double> id_mean, Matrix id_cov, std::vector<double> ood_mean,
                  Matrix ood_cov, double prior_id = 0.5);

    /// Isotropic unit-variance world with the given means.
    static GaussianWorld isotropic(std::vector<double> id_mean, std::vector<double> ood_mean,
                                   double variance = 1.0, double prior_id = 0.5);

    std::size_t dim() const noexcept { return id_mean_.size(); }
    double prior_id() const noexcept { return prior_id_; }
    const std::vector<double>& id_mean() const noexcept { return id_mean_; }
    const std::vector<double>& ood_mean() const noexcept { return ood_mean_; }
    const Matrix& id_cov() const noexcept { return id_cov_; }
    const Matrix& ood_cov() const noexcept { return ood_cov_; }

    double log_density(DistTag component, std::span<const double> x) const;
    /// log Pr(ID | x) - log Pr(OOD | x).
    double log_odds(std::span<const double> x) const;

    /// n draws from one component.
    Matrix sample(DistTag component, std::size_t n, Rng& rng) const;

    std::string to_json() const;
    static GaussianWorld from_json(std::string_view text);

private:
    std::vector<double> id_mean_;
    std::vector<double> ood_mean_;
    Matrix id_cov_;
    Matrix ood_cov_;
    Matrix id_chol_;
    Matrix ood_chol_;
    double id_logdet_ = 0.0;
    double ood_logdet_ = 0.0;
    double prior_id_ = 0.5;
};

/// eta(x) = Pr(ID | x).
double posterior(const GaussianWorld& world, std::span<const double> x);

struct TwoPointProblem {
    double eta_s = 0.5;   // Pr(ID | S)
    double eta_sp = 0.5;  // Pr(ID | S')
    double beta = 1.0;

    double alpha() const { return eta_s * (1.0 - eta_sp); }
    double alpha_prime() const { return eta_sp * (1.0 - eta_s); }
    /// Throws InvalidParameter on posteriors outside [0,1], beta <= 0, or alpha = alpha' = 0.
    void validate() const;
};

/// alpha log(1 + e^{-beta z}) + alpha' log(1 + e^{beta z}), z = f(S) - f(S').
double two_point_risk(const TwoPointProblem& p, double z);

/// beta^{-1} log(alpha / alpha'). Throws InvalidParameter if a posterior is 0 or 1.
double two_point_optimum(const TwoPointProblem& p);

/// beta^{-1} logit(eta). Throws NumericError at eta in {0, 1}.
double canonical_from_posterior(double eta, double beta);

/// Bayes-consistent ID-preference score f*(x) = beta^{-1} logit(eta(x)); the OOD
/// affinity is its negation. Throws NumericError if the log-odds is not finite.
double canonical_scorer(const GaussianWorld& world, std::span<const double> x, double beta);

/// Pr(a < b) for a ~ N(0,1), b ~ N(mu,1) independent: Phi(mu / sqrt(2)).
double bayes_auroc_1d(double mu);

/// Everything gen-synth needs to materialize a dataset.
struct SynthConfig {
    std::optional<GaussianWorld> world;
    // counts[dist][split]
    SplitManifest counts;
    std::uint64_t seed = 42;
    // label = label_weights . x + label_noise * N(0,1); defaults to e_0 when empty.
    std::vector<double> label_weights;
    double label_noise = 0.0;

    static SynthConfig from_json(std::string_view text);
    std::string to_json() const;
};

/// Samples every (split, dist) cell in a fixed order: train, val, test x ID, OOD.
EmbeddingSet generate_dataset(const SynthConfig& cfg);

}  // namespace molepair
