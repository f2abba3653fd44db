#pragma once

// Threshold-free detection metrics. Convention throughout: a higher score means
// "more OOD". AUROC is Pr(id < ood) with ties counted one half.

#include <cstdint>
#include <string>
#include <vector>

namespace molepair {

struct DetectionScores {
    std::vector<double> id_scores;
    std::vector<double> ood_scores;
    std::string method;
    std::uint64_t seed = 0;

    /// Throws InvalidParameter if a side is empty or a score is non-finite.
    void validate() const;
};

struct RocPoint {
    double threshold;
    double tpr;  // fraction of OOD with score >= threshold
    double fpr;  // fraction of ID with score >= threshold
};

struct PrPoint {
    double threshold;
    double precision;
    double recall;
};

enum class AuprPositive { kOod, kId };
enum class Fpr95Mode { kStep, kInterpolated };

struct MetricsOptions {
    AuprPositive aupr_positive = AuprPositive::kOod;
    Fpr95Mode fpr95_mode = Fpr95Mode::kStep;
};

struct MetricsReport {
    double auroc = 0.0;
    double aupr = 0.0;
    double fpr95 = 0.0;
    std::vector<RocPoint> roc;
    std::vector<PrPoint> pr;
};

/// Mann-Whitney estimate via one sort; bit-identical to the brute-force pair count.
double auroc(const DetectionScores& scores);

/// Step-wise average precision, sum_i (R_i - R_{i-1}) P_i, over distinct thresholds.
double aupr(const DetectionScores& scores, AuprPositive positive = AuprPositive::kOod);

/// Fraction of OOD accepted as ID (score <= tau) at the tightest threshold tau that
/// accepts at least 95% of ID samples.
double fpr_at_95_tpr(const DetectionScores& scores, Fpr95Mode mode = Fpr95Mode::kStep);

/// ROC points sweeping the threshold from high to low (OOD positive).
std::vector<RocPoint> roc_curve(const DetectionScores& scores);
/// PR points sweeping the threshold from high to low.
std::vector<PrPoint> pr_curve(const DetectionScores& scores,
                              AuprPositive positive = AuprPositive::kOod);

MetricsReport evaluate(const DetectionScores& scores, const MetricsOptions& options = {});

/// Scalars plus provenance as a JSON document (curves live in the CSV files).
std::string metrics_to_json(const MetricsReport& report, const DetectionScores& scores,
                            const MetricsOptions& options = {});
std::string roc_to_csv(const std::vector<RocPoint>& points);  // threshold,tpr,fpr
std::string pr_to_csv(const std::vector<PrPoint>& points);    // threshold,precision,recall

}  // namespace molepair
