#include "molepair/synthetic.hpp"

#include <numbers>

#include <nlohmann/json.hpp>

namespace molepair {

namespace {

using json = nlohmann::json;

std::vector<double> parse_mean(const json& j, std::size_t dim, const char* name) {
    if (!j.is_array()) {
        throw SchemaError(std::string(name) + " must be an array of length dim");
    }
    auto v = j.get<std::vector<double>>();
    if (v.size() != dim) {
        throw SchemaError(std::string(name) + " has length " + std::to_string(v.size()) +
                          ", expected " + std::to_string(dim));
    }
    return v;
}

// Covariance as a scalar (isotropic variance), a diagonal vector, or a full matrix.
Matrix parse_cov(const json& j, std::size_t dim, const char* name) {
    if (j.is_number()) {
        return j.get<double>() * Matrix::identity(dim);
    }
    if (j.is_array() && !j.empty() && j[0].is_number()) {
        const auto diag = j.get<std::vector<double>>();
        if (diag.size() != dim) {
            throw SchemaError(std::string(name) + " diagonal has the wrong length");
        }
        Matrix m(dim, dim);
        for (std::size_t i = 0; i < dim; ++i) m(i, i) = diag[i];
        return m;
    }
    if (j.is_array() && j.size() == dim) {
        Matrix m(dim, dim);
        for (std::size_t r = 0; r < dim; ++r) {
            const auto row = j[r].get<std::vector<double>>();
            if (row.size() != dim) {
                throw SchemaError(std::string(name) + " row " + std::to_string(r) + " has the wrong length");
            }
            for (std::size_t c = 0; c < dim; ++c) m(r, c) = row[c];
        }
        return m;
    }
    throw SchemaError(std::string(name) + " must be a scalar, a diagonal or a dim x dim matrix");
}

json cov_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    }
    return rows;
}

double log_density_impl(std::span<const double> x, const std::vector<double>& mean,
                        const Matrix& chol, double logdet) {
    if (x.size() != mean.size()) {
        throw ShapeError("point has dim " + std::to_string(x.size()) + ", world has dim " +
                         std::to_string(mean.size()));
    }
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r[i] = x[i] - mean[i];
    forward_substitute(chol, r);
    double quad = 0.0;
    for (double v : r) quad += v * v;
    const double d = static_cast<double>(x.size());
    return -0.5 * (quad + logdet + d * std::log(2.0 * std::numbers::pi));
}

}  // namespace

GaussianWorld::GaussianWorld(std::vector<double> id_mean, Matrix id_cov,
                             std::vector<double> ood_mean, Matrix ood_cov, double prior_id)
    : id_mean_(std::move(id_mean)),
      ood_mean_(std::move(ood_mean)),
      id_cov_(std::move(id_cov)),
      ood_cov_(std::move(ood_cov)),
      prior_id_(prior_id) {
    const std::size_t d = id_mean_.size();
    if (d == 0) {
        throw SchemaError("world dim must be positive");
    }
    if (ood_mean_.size() != d || id_cov_.rows() != d || id_cov_.cols() != d ||
        ood_cov_.rows() != d || ood_cov_.cols() != d) {
        throw SchemaError("world means and covariances must all have dim " + std::to_string(d));
    }
    if (!(prior_id_ > 0.0 && prior_id_ < 1.0)) {
        throw SchemaError("prior_id must lie strictly inside (0, 1)");
    }
    auto factor = [](const Matrix& cov, Matrix& chol, double& logdet, const char* name) {
        for (std::size_t r = 0; r < cov.rows(); ++r) {
            for (std::size_t c = r + 1; c < cov.cols(); ++c) {
                if (std::abs(cov(r, c) - cov(c, r)) > 1e-12 * (1.0 + std::abs(cov(r, c)))) {
                    throw SchemaError(std::string(name) + " is not symmetric");
                }
            }
        }
        if (!cholesky(cov, chol)) {
            throw SchemaError(std::string(name) + " is not positive definite");
        }
        logdet = 0.0;
        for (std::size_t i = 0; i < chol.rows(); ++i) logdet += 2.0 * std::log(chol(i, i));
    };
    factor(id_cov_, id_chol_, id_logdet_, "id_cov");
    factor(ood_cov_, ood_chol_, ood_logdet_, "ood_cov");
}

GaussianWorld GaussianWorld::isotropic(std::vector<double> id_mean, std::vector<double> ood_mean,
                                       double variance, double prior_id) {
    const std::size_t d = id_mean.size();
    return GaussianWorld(std::move(id_mean), variance * Matrix::identity(d), std::move(ood_mean),
                         variance * Matrix::identity(d), prior_id);
}

double GaussianWorld::log_density(DistTag component, std::span<const double> x) const {
    return component == DistTag::kId ? log_density_impl(x, id_mean_, id_chol_, id_logdet_)
                                     : log_density_impl(x, ood_mean_, ood_chol_, ood_logdet_);
}

double GaussianWorld::log_odds(std::span<const double> x) const {
    return std::log(prior_id_) - std::log1p(-prior_id_) + log_density(DistTag::kId, x) -
           log_density(DistTag::kOod, x);
}

Matrix GaussianWorld::sample(DistTag component, std::size_t n, Rng& rng) const {
    const std::size_t d = dim();
    const auto& mean = component == DistTag::kId ? id_mean_ : ood_mean_;
    const auto& chol = component == DistTag::kId ? id_chol_ : ood_chol_;
    Matrix out(n, d);
    std::vector<double> z(d);
    for (std::size_t r = 0; r < n; ++r) {
        for (double& v : z) v = rng.normal();
        auto row = out.row(r);
        for (std::size_t i = 0; i < d; ++i) {
            double v = mean[i];
            for (std::size_t k = 0; k <= i; ++k) v += chol(i, k) * z[k];
            row[i] = v;
        }
    }
    return out;
}

std::string GaussianWorld::to_json() const {
    const json j = {{"dim", dim()},
                    {"prior_id", prior_id_},
                    {"id_mean", id_mean_},
                    {"ood_mean", ood_mean_},
                    {"id_cov", cov_to_json(id_cov_)},
                    {"ood_cov", cov_to_json(ood_cov_)}};
    return j.dump();
}

GaussianWorld GaussianWorld::from_json(std::string_view text) {
    try {
        const json j = json::parse(text);
        const auto dim = j.at("dim").get<long long>();
        if (dim <= 0) {
            throw SchemaError("world dim must be positive, got " + std::to_string(dim));
        }
        const auto d = static_cast<std::size_t>(dim);
        return GaussianWorld(parse_mean(j.at("id_mean"), d, "id_mean"),
                             parse_cov(j.value("id_cov", json(1.0)), d, "id_cov"),
                             parse_mean(j.at("ood_mean"), d, "ood_mean"),
                             parse_cov(j.value("ood_cov", json(1.0)), d, "ood_cov"),
                             j.value("prior_id", 0.5));
    } catch (const json::exception& e) {
        throw SchemaError(std::string("world config: ") + e.what());
    }
}

double posterior(const GaussianWorld& world, std::span<const double> x) {
    return sigmoid(world.log_odds(x));
}

// ---------------------------------------------------------------------------

void TwoPointProblem::validate() const {
    if (!(eta_s >= 0.0 && eta_s <= 1.0) || !(eta_sp >= 0.0 && eta_sp <= 1.0)) {
        throw InvalidParameter("posteriors must lie in [0, 1]");
    }
    if (!(beta > 0.0)) {
        throw InvalidParameter("beta must be positive");
    }
    if (alpha() == 0.0 && alpha_prime() == 0.0) {
        throw InvalidParameter("degenerate two-point problem: alpha = alpha' = 0");
    }
}

double two_point_risk(const TwoPointProblem& p, double z) {
    p.validate();
    return p.alpha() * log1pexp(-p.beta * z) + p.alpha_prime() * log1pexp(p.beta * z);
}

double two_point_optimum(const TwoPointProblem& p) {
    p.validate();
    if (p.eta_s <= 0.0 || p.eta_s >= 1.0 || p.eta_sp <= 0.0 || p.eta_sp >= 1.0) {
        throw InvalidParameter("two-point optimum is infinite when a posterior is 0 or 1");
    }
    // log(alpha / alpha') as a difference of logits keeps precision near 0 and 1.
    const double logit_s = std::log(p.eta_s) - std::log1p(-p.eta_s);
    const double logit_sp = std::log(p.eta_sp) - std::log1p(-p.eta_sp);
    return (logit_s - logit_sp) / p.beta;
}

double canonical_from_posterior(double eta, double beta) {
    if (!(beta > 0.0)) throw InvalidParameter("beta must be positive");
    if (!(eta > 0.0 && eta < 1.0)) {
        throw NumericError("canonical score is infinite at posterior " + std::to_string(eta));
    }
    return (std::log(eta) - std::log1p(-eta)) / beta;
}

double canonical_scorer(const GaussianWorld& world, std::span<const double> x, double beta) {
    if (!(beta > 0.0)) throw InvalidParameter("beta must be positive");
    const double lo = world.log_odds(x);
    if (!std::isfinite(lo)) {
        throw NumericError("canonical score is infinite: posterior on the boundary");
    }
    return lo / beta;
}

double bayes_auroc_1d(double mu) { return normal_cdf(mu / std::sqrt(2.0)); }

// ---------------------------------------------------------------------------

SynthConfig SynthConfig::from_json(std::string_view text) {
    SynthConfig cfg;
    try {
        const json j = json::parse(text);
        if (!j.contains("world")) {
            throw SchemaError("synthetic config needs a 'world' object");
        }
        cfg.world = GaussianWorld::from_json(j.at("world").dump());
        cfg.seed = j.value("seed", std::uint64_t{42});
        if (j.contains("counts")) {
            cfg.counts = SplitManifest::from_json(json{{"counts", j.at("counts")}}.dump());
        }
        cfg.counts.seed = cfg.seed;
        if (j.contains("label_weights")) {
            cfg.label_weights = j.at("label_weights").get<std::vector<double>>();
            if (cfg.label_weights.size() != cfg.world->dim()) {
                throw SchemaError("label_weights must have length dim");
            }
        }
        cfg.label_noise = j.value("label_noise", 0.0);
        if (!(cfg.label_noise >= 0.0)) {
            throw SchemaError("label_noise must be non-negative");
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("synthetic config: ") + e.what());
    }
    return cfg;
}

std::string SynthConfig::to_json() const {
    json j = json::parse(counts.to_json());
    j.erase("source_files");
    j["seed"] = seed;
    if (world) j["world"] = json::parse(world->to_json());
    if (!label_weights.empty()) j["label_weights"] = label_weights;
    j["label_noise"] = label_noise;
    return j.dump(2) + "\n";
}

EmbeddingSet generate_dataset(const SynthConfig& cfg) {
    if (!cfg.world) {
        throw SchemaError("synthetic config has no world");
    }
    const GaussianWorld& world = *cfg.world;
    const std::size_t d = world.dim();
    std::vector<double> weights = cfg.label_weights;
    if (weights.empty()) {
        weights.assign(d, 0.0);
        weights[0] = 1.0;
    }
    Rng rng(cfg.seed);
    std::vector<RecordMeta> records;
    std::vector<double> values;
    for (SplitTag s : kAllSplits) {
        for (DistTag t : kAllDists) {
            const std::size_t n = cfg.counts.at(t, s);
            Rng cell_rng = rng.split();
            const Matrix x = world.sample(t, n, cell_rng);
            for (std::size_t i = 0; i < n; ++i) {
                RecordMeta rec;
                rec.id = std::string(to_string(s)) + "-" + std::string(to_string(t)) + "-" +
                         std::to_string(i);
                rec.dist = t;
                rec.split = s;
                double label = dot(weights, x.row(i));
                if (cfg.label_noise > 0.0) label += cfg.label_noise * cell_rng.normal();
                rec.label = label;
                records.push_back(std::move(rec));
                values.insert(values.end(), x.row(i).begin(), x.row(i).end());
            }
        }
    }
    const std::size_t n = records.size();
    return EmbeddingSet(d, std::move(records), Matrix(n, d, std::move(values)));
}

}  // namespace molepair
