#include "molepair/pairloss.hpp"

#include <string>

namespace molepair {

void LossConfig::validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) {
        throw InvalidParameter("beta must be positive, got " + std::to_string(beta));
    }
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw InvalidParameter("lambda must be non-negative, got " + std::to_string(lambda));
    }
}

MarginBatch MarginBatch::build(std::vector<double> id_scores, std::vector<double> ood_scores,
                               double beta) {
    if (id_scores.empty() || ood_scores.empty()) {
        throw InvalidParameter("margin batch needs at least one ID and one OOD score");
    }
    if (!(beta > 0.0)) {
        throw InvalidParameter("beta must be positive");
    }
    MarginBatch b;
    const std::size_t m = id_scores.size();
    const std::size_t k = ood_scores.size();
    b.margins = Matrix(k, m);
    b.weights = Matrix(k, m);
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t i = 0; i < m; ++i) {
            const double delta = ood_scores[j] - id_scores[i];
            b.margins(j, i) = delta;
            b.weights(j, i) = hard_pair_weight(delta, beta);
        }
    }
    b.id_scores = std::move(id_scores);
    b.ood_scores = std::move(ood_scores);
    return b;
}

double pair_probability(double e_in, double e_out, double beta) {
    return sigmoid(beta * (e_out - e_in));
}

LossResult mole_pair_loss(const MarginBatch& batch, const LossConfig& cfg) {
    cfg.validate();
    const std::size_t m = batch.id_scores.size();
    const std::size_t k = batch.ood_scores.size();
    if (m == 0 || k == 0) {
        throw InvalidParameter("pairwise loss needs at least one ID and one OOD score");
    }
    if (batch.margins.rows() != k || batch.margins.cols() != m) {
        throw ShapeError("margin matrix does not match the score vectors");
    }
    const double beta = cfg.beta;
    const double scale = 1.0 / static_cast<double>(k * m);
    LossResult r;
    r.id_grad.assign(m, 0.0);
    r.ood_grad.assign(k, 0.0);
    // Running mean, so identical pair terms average to exactly that term.
    double mean = 0.0;
    std::size_t seen = 0;
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t i = 0; i < m; ++i) {
            const double delta = batch.margins(j, i);
            mean += (log1pexp(-beta * delta) - mean) / static_cast<double>(++seen);
            // d/d(delta) log1pexp(-beta delta) = -beta * sigmoid(-beta delta)
            const double w = beta * sigmoid(-beta * delta) * scale;
            r.ood_grad[j] -= w;
            r.id_grad[i] += w;
        }
    }
    r.loss = mean;
    return r;
}

LossResult l2_regularizer(std::span<const double> id_scores, std::span<const double> ood_scores,
                          double lambda) {
    if (!(lambda >= 0.0)) {
        throw InvalidParameter("lambda must be non-negative");
    }
    LossResult r;
    r.id_grad.assign(id_scores.size(), 0.0);
    r.ood_grad.assign(ood_scores.size(), 0.0);
    auto side = [lambda](std::span<const double> s, std::vector<double>& grad) {
        if (s.empty()) return 0.0;
        const double n = static_cast<double>(s.size());
        double sq = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            sq += s[i] * s[i];
            grad[i] = 2.0 * lambda * s[i] / n;
        }
        return sq / n;
    };
    const double id_part = side(id_scores, r.id_grad);
    const double ood_part = side(ood_scores, r.ood_grad);
    r.loss = lambda * (id_part + ood_part);
    return r;
}

LossResult total_loss(const MarginBatch& batch, const LossConfig& cfg) {
    LossResult pair = mole_pair_loss(batch, cfg);
    const LossResult reg = l2_regularizer(batch.id_scores, batch.ood_scores, cfg.lambda);
    pair.loss += reg.loss;
    for (std::size_t i = 0; i < pair.id_grad.size(); ++i) pair.id_grad[i] += reg.id_grad[i];
    for (std::size_t j = 0; j < pair.ood_grad.size(); ++j) pair.ood_grad[j] += reg.ood_grad[j];
    return pair;
}

double hard_pair_weight(double delta, double beta) {
    if (!(beta > 0.0)) {
        throw InvalidParameter("beta must be positive");
    }
    return beta * sigmoid(-beta * delta);
}

double predicted_margin_gain(double delta, double beta, double lr, double dir_norm_sq) {
    if (!(lr > 0.0)) throw InvalidParameter("step size must be positive");
    if (!(dir_norm_sq >= 0.0)) throw InvalidParameter("direction norm must be non-negative");
    return lr * hard_pair_weight(delta, beta) * dir_norm_sq;
}

}  // namespace molepair
