#include "molepair/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include <nlohmann/json.hpp>

#include "molepair/data.hpp"
#include "molepair/error.hpp"

namespace molepair {

namespace {

struct Tagged {
    double score;
    bool positive;
};

/// Tie groups in descending score order: (threshold, positives, negatives).
struct TieGroup {
    double threshold;
    std::size_t positives;
    std::size_t negatives;
};

std::vector<TieGroup> descending_groups(const std::vector<double>& positives,
                                        const std::vector<double>& negatives) {
    std::vector<Tagged> all;
    all.reserve(positives.size() + negatives.size());
    for (double s : positives) all.push_back({s, true});
    for (double s : negatives) all.push_back({s, false});
    std::sort(all.begin(), all.end(), [](const Tagged& a, const Tagged& b) { return a.score > b.score; });
    std::vector<TieGroup> groups;
    for (std::size_t i = 0; i < all.size();) {
        TieGroup g{all[i].score, 0, 0};
        std::size_t j = i;
        while (j < all.size() && all[j].score == all[i].score) {
            (all[j].positive ? g.positives : g.negatives)++;
            ++j;
        }
        groups.push_back(g);
        i = j;
    }
    return groups;
}

std::vector<double> negated(const std::vector<double>& v) {
    std::vector<double> out(v.size());
    std::transform(v.begin(), v.end(), out.begin(), [](double x) { return -x; });
    return out;
}

}  // namespace

void DetectionScores::validate() const {
    if (id_scores.empty() || ood_scores.empty()) {
        throw InvalidParameter("detection scores need at least one ID and one OOD score");
    }
    auto finite = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    if (!finite(id_scores) || !finite(ood_scores)) {
        throw InvalidParameter("detection scores must be finite");
    }
}

double auroc(const DetectionScores& scores) {
    scores.validate();
    // Ascending walk over tie groups; twice_count accumulates 2 * (wins + ties / 2)
    // so the sum stays an exact integer.
    auto groups = descending_groups(scores.ood_scores, scores.id_scores);
    std::reverse(groups.begin(), groups.end());
    std::uint64_t id_below = 0;
    std::uint64_t twice_count = 0;
    for (const auto& g : groups) {
        twice_count += 2 * g.positives * id_below + g.positives * g.negatives;
        id_below += g.negatives;
    }
    const double pairs = static_cast<double>(scores.id_scores.size()) *
                         static_cast<double>(scores.ood_scores.size());
    return static_cast<double>(twice_count) / (2.0 * pairs);
}

std::vector<PrPoint> pr_curve(const DetectionScores& scores, AuprPositive positive) {
    scores.validate();
    const bool ood_pos = positive == AuprPositive::kOod;
    const auto& pos = ood_pos ? scores.ood_scores : scores.id_scores;
    const auto& neg = ood_pos ? scores.id_scores : scores.ood_scores;
    // For ID-as-positive, low scores are the confident positives.
    const auto groups = ood_pos ? descending_groups(pos, neg)
                                : descending_groups(negated(pos), negated(neg));
    std::vector<PrPoint> out;
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (const auto& g : groups) {
        tp += g.positives;
        fp += g.negatives;
        out.push_back({ood_pos ? g.threshold : -g.threshold,
                       static_cast<double>(tp) / static_cast<double>(tp + fp),
                       static_cast<double>(tp) / static_cast<double>(pos.size())});
    }
    return out;
}

double aupr(const DetectionScores& scores, AuprPositive positive) {
    double area = 0.0;
    double prev_recall = 0.0;
    for (const auto& p : pr_curve(scores, positive)) {
        area += (p.recall - prev_recall) * p.precision;
        prev_recall = p.recall;
    }
    return area;
}

std::vector<RocPoint> roc_curve(const DetectionScores& scores) {
    scores.validate();
    const auto groups = descending_groups(scores.ood_scores, scores.id_scores);
    std::vector<RocPoint> out;
    std::size_t tp = 0;
    std::size_t fp = 0;
    const double k = static_cast<double>(scores.ood_scores.size());
    const double m = static_cast<double>(scores.id_scores.size());
    for (const auto& g : groups) {
        tp += g.positives;
        fp += g.negatives;
        out.push_back({g.threshold, static_cast<double>(tp) / k, static_cast<double>(fp) / m});
    }
    return out;
}

double fpr_at_95_tpr(const DetectionScores& scores, Fpr95Mode mode) {
    scores.validate();
    std::vector<double> id = scores.id_scores;
    std::vector<double> ood = scores.ood_scores;
    std::sort(id.begin(), id.end());
    std::sort(ood.begin(), ood.end());
    const std::size_t m = id.size();
    const double k = static_cast<double>(ood.size());
    auto ood_at_or_below = [&](double s) {
        return static_cast<double>(std::upper_bound(ood.begin(), ood.end(), s) - ood.begin());
    };

    if (mode == Fpr95Mode::kStep) {
        // Smallest count c with c / m >= 0.95, i.e. 20 c >= 19 m.
        const std::size_t need = (19 * m + 19) / 20;
        const double s = id[need - 1];
        return ood_at_or_below(s) / k;
    }

    // Interpolated: walk the ID-positive ROC (accept if score <= s) and interpolate
    // FPR linearly in TPR at exactly 0.95.
    double prev_tpr = 0.0;
    double prev_fpr = 0.0;
    for (std::size_t i = 0; i < m;) {
        std::size_t j = i;
        while (j < m && id[j] == id[i]) ++j;
        const double tpr = static_cast<double>(j) / static_cast<double>(m);
        const double fpr = ood_at_or_below(id[i]) / k;
        if (tpr >= 0.95) {
            if (tpr == prev_tpr) return fpr;
            const double t = (0.95 - prev_tpr) / (tpr - prev_tpr);
            return prev_fpr + t * (fpr - prev_fpr);
        }
        prev_tpr = tpr;
        prev_fpr = fpr;
        i = j;
    }
    return 1.0;
}

MetricsReport evaluate(const DetectionScores& scores, const MetricsOptions& options) {
    MetricsReport r;
    r.auroc = auroc(scores);
    r.aupr = aupr(scores, options.aupr_positive);
    r.fpr95 = fpr_at_95_tpr(scores, options.fpr95_mode);
    r.roc = roc_curve(scores);
    r.pr = pr_curve(scores, options.aupr_positive);
    return r;
}

std::string metrics_to_json(const MetricsReport& report, const DetectionScores& scores,
                            const MetricsOptions& options) {
    const nlohmann::ordered_json j = {
        {"method", scores.method},
        {"seed", scores.seed},
        {"n_id", scores.id_scores.size()},
        {"n_ood", scores.ood_scores.size()},
        {"auroc", report.auroc},
        {"aupr", report.aupr},
        {"fpr95", report.fpr95},
        {"aupr_positive", options.aupr_positive == AuprPositive::kOod ? "OOD" : "ID"},
        {"fpr95_mode", options.fpr95_mode == Fpr95Mode::kStep ? "step" : "interpolated"},
        {"roc_points", report.roc.size()},
        {"pr_points", report.pr.size()},
    };
    return j.dump(2) + "\n";
}

std::string roc_to_csv(const std::vector<RocPoint>& points) {
    std::string out = "threshold,tpr,fpr\n";
    for (const auto& p : points) {
        out += format_double(p.threshold) + "," + format_double(p.tpr) + "," +
               format_double(p.fpr) + "\n";
    }
    return out;
}

std::string pr_to_csv(const std::vector<PrPoint>& points) {
    std::string out = "threshold,precision,recall\n";
    for (const auto& p : points) {
        out += format_double(p.threshold) + "," + format_double(p.precision) + "," +
               format_double(p.recall) + "\n";
    }
    return out;
}

}  // namespace molepair
