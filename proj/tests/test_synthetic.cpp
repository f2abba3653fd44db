#include <doctest.h>

#include <cmath>

#include "molepair/error.hpp"
#include "molepair/metrics.hpp"
#include "molepair/synthetic.hpp"

using namespace molepair;

namespace {

GaussianWorld one_d(double ood_mean) {
    return GaussianWorld::isotropic({0.0}, {ood_mean});
}

double numeric_optimum(const TwoPointProblem& p) {
    return golden_section_minimize([&](double z) { return two_point_risk(p, z); }, -200.0, 200.0, 1e-10);
}

TwoPointProblem random_problem(Rng& rng) {
    return {rng.uniform_real(0.02, 0.98), rng.uniform_real(0.02, 0.98), rng.uniform_real(0.2, 5.0)};
}

}  // namespace

TEST_CASE("world construction errors") {
    CHECK_THROWS_AS(GaussianWorld::isotropic({}, {}), SchemaError);
    CHECK_THROWS_AS(GaussianWorld::isotropic({0.0}, {0.0, 1.0}), SchemaError);
    CHECK_THROWS_AS(GaussianWorld::isotropic({0.0}, {1.0}, 1.0, 1.0), SchemaError);
    CHECK_THROWS_AS(GaussianWorld({0.0, 0.0}, Matrix{{1, 2}, {2, 1}}, {1.0, 1.0}, Matrix::identity(2)), SchemaError);
    CHECK_THROWS_AS(GaussianWorld::from_json(R"({"dim":0,"id_mean":[],"ood_mean":[]})"), SchemaError);
}

TEST_CASE("world json round-trip") {
    const GaussianWorld w({0.0, 1.0}, Matrix{{2.0, 0.5}, {0.5, 1.0}}, {1.0, -1.0}, Matrix{{1.0, 0.0}, {0.0, 3.0}}, 0.3);
    const GaussianWorld back = GaussianWorld::from_json(w.to_json());
    CHECK(back.id_mean() == w.id_mean());
    CHECK(back.ood_cov() == w.ood_cov());
    CHECK(back.prior_id() == w.prior_id());
    const std::vector<double> x{0.3, -0.7};
    CHECK(back.log_odds(x) == w.log_odds(x));
}

TEST_CASE("posterior examples") {
    const auto sym = GaussianWorld::isotropic({-1.0, 2.0}, {1.0, -2.0});
    CHECK(posterior(sym, std::vector<double>{0.0, 0.0}) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(posterior(sym, std::vector<double>{-8.0, 16.0}) > 1.0 - 1e-12);
    CHECK(posterior(one_d(2.0), std::vector<double>{1.0}) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("posterior matches Bayes rule on explicit densities") {
    const GaussianWorld w({0.5, -1.0}, Matrix{{1.5, 0.3}, {0.3, 0.8}}, {-0.5, 1.0}, Matrix{{0.7, -0.2}, {-0.2, 2.0}}, 0.3);
    auto density = [](std::vector<double> mu, double a, double b, double c, const std::vector<double>& x) {
        // 2x2 covariance [[a,b],[b,c]]
        const double det = a * c - b * b;
        const double dx = x[0] - mu[0], dy = x[1] - mu[1];
        const double q = (c * dx * dx - 2 * b * dx * dy + a * dy * dy) / det;
        return std::exp(-0.5 * q) / (2 * M_PI * std::sqrt(det));
    };
    Rng rng(2);
    for (int t = 0; t < 50; ++t) {
        const std::vector<double> x{rng.normal() * 2, rng.normal() * 2};
        const double pi = 0.3 * density({0.5, -1.0}, 1.5, 0.3, 0.8, x);
        const double po = 0.7 * density({-0.5, 1.0}, 0.7, -0.2, 2.0, x);
        CHECK(posterior(w, x) == doctest::Approx(pi / (pi + po)).epsilon(1e-12));
    }
}

TEST_CASE("two-point risk examples") {
    const TwoPointProblem eq{0.3, 0.3, 2.0};
    for (double z = 0.5; z < 5; z += 0.5) CHECK(two_point_risk(eq, z) == doctest::Approx(two_point_risk(eq, -z)));
    CHECK(std::abs(numeric_optimum(eq)) < 1e-6);

    const TwoPointProblem p{0.9, 0.5, 1.0};
    CHECK(two_point_risk(p, 0.0) == doctest::Approx((p.alpha() + p.alpha_prime()) * std::log(2.0)).epsilon(1e-15));
    const double hand = 0.45 * std::log(1 + std::exp(-1.0)) + 0.05 * std::log(1 + std::exp(1.0));
    CHECK(two_point_risk(p, 1.0) == doctest::Approx(hand).epsilon(1e-14));
}

TEST_CASE("two-point problem validation") {
    CHECK_THROWS_AS(two_point_risk({1.2, 0.5, 1.0}, 0.0), InvalidParameter);
    CHECK_THROWS_AS(two_point_risk({0.5, 0.5, 0.0}, 0.0), InvalidParameter);
    CHECK_THROWS_AS(two_point_risk({1.0, 1.0, 1.0}, 0.0), InvalidParameter);
    CHECK_THROWS_AS(two_point_optimum({1.0, 0.5, 1.0}), InvalidParameter);
    CHECK_THROWS_AS(two_point_optimum({0.5, 0.0, 1.0}), InvalidParameter);
}

TEST_CASE("two-point optimum examples") {
    CHECK(two_point_optimum({0.4, 0.4, 3.0}) == 0.0);
    const TwoPointProblem p{0.9, 0.5, 1.0};
    CHECK(two_point_optimum(p) == doctest::Approx(std::log(9.0)).epsilon(1e-14));
    CHECK(two_point_optimum(p) == doctest::Approx(2.19722).epsilon(1e-5));
    CHECK(std::abs(numeric_optimum(p) - std::log(9.0)) < 1e-6);
    CHECK(two_point_optimum({0.9, 0.5, 2.0}) == doctest::Approx(std::log(9.0) / 2).epsilon(1e-14));
}

TEST_CASE("numerical minimizer agrees with the closed form") {
    Rng rng(100);
    for (int t = 0; t < 100; ++t) {
        const auto p = random_problem(rng);
        const double z = two_point_optimum(p);
        CHECK(std::abs(numeric_optimum(p) - z) < 1e-6);
        if (p.eta_s != p.eta_sp) CHECK((z > 0) == (p.eta_s > p.eta_sp));
    }
}

TEST_CASE("two-point risk is strictly convex") {
    Rng rng(7);
    for (int t = 0; t < 20; ++t) {
        // Beta capped so the curvature at |z| = 10 stays above rounding.
        const TwoPointProblem p{rng.uniform_real(0.02, 0.98), rng.uniform_real(0.02, 0.98), rng.uniform_real(0.2, 2.0)};
        const double h = 0.5;
        for (double z = -10; z <= 10; z += 0.25) {
            CHECK(two_point_risk(p, z + h) - 2 * two_point_risk(p, z) + two_point_risk(p, z - h) > 0.0);
        }
    }
}

TEST_CASE("canonical scorer") {
    CHECK(canonical_from_posterior(0.5, 0.7) == 0.0);
    CHECK_THROWS_AS(canonical_from_posterior(1.0, 1.0), NumericError);
    CHECK_THROWS_AS(canonical_from_posterior(0.0, 1.0), NumericError);
    const auto w = GaussianWorld::isotropic({0.0, 0.0}, {1.5, -0.5});
    CHECK(std::abs(canonical_scorer(w, std::vector<double>{0.75, -0.25}, 2.0)) < 1e-15);

    Rng rng(9);
    for (int t = 0; t < 30; ++t) {
        const std::vector<double> a{rng.normal(), rng.normal()};
        const std::vector<double> b{rng.normal(), rng.normal()};
        const double beta = rng.uniform_real(0.1, 3);
        const TwoPointProblem p{posterior(w, a), posterior(w, b), beta};
        CHECK(canonical_scorer(w, a, beta) - canonical_scorer(w, b, beta) ==
              doctest::Approx(two_point_optimum(p)).epsilon(1e-9));
    }
}

TEST_CASE("canonical scorer is monotone in the likelihood ratio on a 1-D grid") {
    const auto w = one_d(2.0);
    double prev = INFINITY;
    double prev_ratio = INFINITY;
    for (double x = -5; x <= 7; x += 0.1) {
        const std::vector<double> v{x};
        const double ratio = w.log_density(DistTag::kId, v) - w.log_density(DistTag::kOod, v);
        const double f = canonical_scorer(w, v, 0.5);
        CHECK(ratio < prev_ratio);
        CHECK(f < prev);
        prev = f;
        prev_ratio = ratio;
    }
}

TEST_CASE("canonical scorer minimizes the empirical pairwise risk") {
    const auto w = one_d(2.0);
    const double beta = 1.0;
    Rng rng(11);
    std::vector<double> xs;
    for (int i = 0; i < 400; ++i) {
        const DistTag t = rng.uniform_real() < w.prior_id() ? DistTag::kId : DistTag::kOod;
        xs.push_back(w.sample(t, 1, rng)(0, 0));
    }
    std::vector<double> eta;
    for (double x : xs) eta.push_back(posterior(w, std::vector<double>{x}));
    // Conditional pairwise risk over all sampled pairs.
    auto risk = [&](auto&& f) {
        std::vector<double> fx;
        for (double x : xs) fx.push_back(f(x));
        double s = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            for (std::size_t j = i + 1; j < xs.size(); ++j) {
                s += two_point_risk({eta[i], eta[j], beta}, fx[i] - fx[j]);
            }
        }
        return s;
    };
    auto canon = [&](double x) { return canonical_scorer(w, std::vector<double>{x}, beta); };
    const double best = risk(canon);
    Rng pert(12);
    for (int t = 0; t < 50; ++t) {
        const double scale = pert.uniform_real(-0.4, 0.4);
        const double wiggle = pert.uniform_real(-0.4, 0.4);
        const double freq = pert.uniform_real(0.5, 3.0);
        const double other = risk([&](double x) { return canon(x) * (1 + scale) + wiggle * std::sin(freq * x); });
        CHECK(best < other);
    }
    CHECK(risk([&](double x) { return canon(x) + 5.0; }) == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("increasing transforms of the canonical scorer keep the AUROC") {
    const auto w = GaussianWorld::isotropic({0.0, 0.0}, {1.0, 1.0});
    Rng rng(13);
    const Matrix id = w.sample(DistTag::kId, 300, rng);
    const Matrix ood = w.sample(DistTag::kOod, 300, rng);
    auto scores_for = [&](auto&& g) {
        DetectionScores s;
        for (std::size_t i = 0; i < id.rows(); ++i) s.id_scores.push_back(g(-canonical_scorer(w, id.row(i), 1.0)));
        for (std::size_t i = 0; i < ood.rows(); ++i) s.ood_scores.push_back(g(-canonical_scorer(w, ood.row(i), 1.0)));
        return s;
    };
    const double base = auroc(scores_for([](double v) { return v; }));
    CHECK(auroc(scores_for([](double v) { return std::exp(v); })) == base);
    CHECK(auroc(scores_for([](double v) { return v * v * v + 2 * v; })) == base);
    CHECK(auroc(scores_for([](double v) { return std::atan(v / 10); })) == base);
}

TEST_CASE("bayes auroc in one dimension") {
    CHECK(bayes_auroc_1d(0.0) == 0.5);
    CHECK(bayes_auroc_1d(40.0) == doctest::Approx(1.0));
    CHECK(bayes_auroc_1d(2.0) == doctest::Approx(0.92135).epsilon(1e-5));
    Rng rng(20);
    const std::size_t n = 10'000'000;
    std::size_t below = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = rng.normal();
        const double b = 2.0 + rng.normal();
        below += a < b;
    }
    CHECK(std::abs(static_cast<double>(below) / static_cast<double>(n) - bayes_auroc_1d(2.0)) < 5e-4);
}

TEST_CASE("sampling moments") {
    const GaussianWorld w({1.0, -2.0}, Matrix{{2.0, 0.6}, {0.6, 1.0}}, {0.0, 0.0}, Matrix::identity(2));
    Rng rng(5);
    const Matrix x = w.sample(DistTag::kId, 200000, rng);
    const auto mean = column_means(x);
    CHECK(mean[0] == doctest::Approx(1.0).epsilon(0.01));
    CHECK(mean[1] == doctest::Approx(-2.0).epsilon(0.01));
    double c01 = 0, c00 = 0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        c00 += (x(i, 0) - mean[0]) * (x(i, 0) - mean[0]);
        c01 += (x(i, 0) - mean[0]) * (x(i, 1) - mean[1]);
    }
    CHECK(c00 / 200000 == doctest::Approx(2.0).epsilon(0.02));
    CHECK(c01 / 200000 == doctest::Approx(0.6).epsilon(0.03));
}

TEST_CASE("synthetic dataset generation") {
    const std::string cfg_text = R"({
        "world": {"dim": 3, "id_mean": [0, 0, 0], "ood_mean": [2, 0, 0]},
        "counts": {"train": {"ID": 20, "OOD": 10}, "val": {"ID": 5, "OOD": 6}, "test": {"ID": 7, "OOD": 8}},
        "seed": 3
    })";
    const SynthConfig cfg = SynthConfig::from_json(cfg_text);
    const EmbeddingSet a = generate_dataset(cfg);
    CHECK(a.size() == 56);
    CHECK(a.dim() == 3);
    CHECK(a.count(DistTag::kId, SplitTag::kTrain) == 20);
    CHECK(a.count(DistTag::kOod, SplitTag::kVal) == 6);
    CHECK(a.count(DistTag::kOod, SplitTag::kTest) == 8);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.records()[i].label == a.embeddings()(i, 0));
    CHECK(generate_dataset(cfg) == a);
    CHECK(generate_dataset(SynthConfig::from_json(cfg.to_json())) == a);
    auto other = cfg;
    other.seed = 4;
    CHECK_FALSE(generate_dataset(other) == a);

    CHECK_THROWS_AS(SynthConfig::from_json(R"({"counts": {}})"), SchemaError);
    CHECK_THROWS_AS(SynthConfig::from_json(R"({"world": {"dim": 1, "id_mean": [0], "ood_mean": [1]},
        "label_weights": [1, 2]})"), SchemaError);
    CHECK_THROWS_AS(SynthConfig::from_json("{not json"), SchemaError);
}
