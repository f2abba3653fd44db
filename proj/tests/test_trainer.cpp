#include <doctest.h>

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "molepair/error.hpp"
#include "molepair/metrics.hpp"
#include "molepair/synthetic.hpp"
#include "molepair/trainer.hpp"

using namespace molepair;

namespace {

struct Row {
    DistTag dist;
    SplitTag split;
    std::vector<double> x;
};

EmbeddingSet make_set(const std::vector<Row>& rows) {
    std::vector<RecordMeta> recs;
    Matrix x(rows.size(), rows.front().x.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        recs.push_back({"r" + std::to_string(i), rows[i].dist, rows[i].split, std::nullopt});
        for (std::size_t j = 0; j < rows[i].x.size(); ++j) x(i, j) = rows[i].x[j];
    }
    return EmbeddingSet(rows.front().x.size(), recs, x);
}

EmbeddingSet counts_set(std::size_t n_id, std::size_t n_ood) {
    std::vector<Row> rows;
    for (std::size_t i = 0; i < n_id; ++i) rows.push_back({DistTag::kId, SplitTag::kTrain, {double(i)}});
    for (std::size_t i = 0; i < n_ood; ++i) rows.push_back({DistTag::kOod, SplitTag::kTrain, {double(i)}});
    return make_set(rows);
}

// Identity scorer on 1-D inputs.
ScoringHead identity_head() {
    HeadConfig hc;
    hc.layer_dims = {1, 1};
    hc.dropout = 0.0;
    ScoringHead h(hc, 1);
    auto& layers = h.net().mutable_layers();
    layers[0].weight(0, 0) = 1.0;
    layers[0].bias[0] = 0.0;
    return h;
}

EmbeddingSet separable_world(std::size_t n_train, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.world = GaussianWorld::isotropic({-2.0, -2.0}, {2.0, 2.0});
    for (DistTag t : kAllDists) {
        cfg.counts.at(t, SplitTag::kTrain) = n_train;
        cfg.counts.at(t, SplitTag::kVal) = 100;
        cfg.counts.at(t, SplitTag::kTest) = 100;
    }
    cfg.seed = seed;
    return generate_dataset(cfg);
}

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch_size = 64;
    cfg.head.layer_dims = {2, 16, 1};
    cfg.opt.lr = 1e-2;
    cfg.opt.step_size = 10;
    cfg.loss.beta = 1.0;
    return cfg;
}

PairStats brute_stats(const std::vector<double>& id, const std::vector<double>& ood, double eps) {
    PairStats s;
    double sum = 0.0;
    for (double o : ood) {
        for (double i : id) {
            const double d = o - i;
            ++s.total;
            s.negative += d < 0;
            s.boundary += std::abs(d) < eps;
            s.nonneg_below_eps += d >= 0 && d < eps;
            s.at_least_eps += d >= eps;
            sum += d;
        }
    }
    s.mean_margin = sum / static_cast<double>(s.total);
    return s;
}

}  // namespace

TEST_CASE("train config validation and json") {
    TrainConfig cfg;
    cfg.head.layer_dims = {3, 1};
    cfg.validate();
    CHECK(cfg.epochs == 500);
    CHECK(cfg.batch_size == 512);
    auto odd = cfg;
    odd.batch_size = 5;
    CHECK_THROWS_AS(odd.validate(), InvalidParameter);
    auto wide = cfg;
    wide.head.layer_dims = {3, 2};
    CHECK_THROWS_AS(wide.validate(), InvalidParameter);
    auto bad_eps = cfg;
    bad_eps.dynamics_epsilon = 0.0;
    CHECK_THROWS_AS(bad_eps.validate(), InvalidParameter);

    cfg.loss.beta = 0.3;
    cfg.opt.lr = 0.02;
    cfg.seed = 9;
    const TrainConfig back = TrainConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());
    CHECK(back.loss.beta == 0.3);
    const TrainConfig partial = TrainConfig::from_json(R"({"epochs": 3})");
    CHECK(partial.epochs == 3);
    CHECK(partial.batch_size == 512);
}

TEST_CASE("balanced batches") {
    SUBCASE("4 + 4 with batch 4") {
        Rng rng(1);
        const auto b = make_balanced_batches(counts_set(4, 4), 4, rng);
        CHECK(b.size() == 2);
        std::set<std::size_t> seen;
        for (const auto& batch : b) {
            CHECK(batch.id_rows.size() == 2);
            CHECK(batch.ood_rows.size() == 2);
            seen.insert(batch.id_rows.begin(), batch.id_rows.end());
            seen.insert(batch.ood_rows.begin(), batch.ood_rows.end());
        }
        CHECK(seen.size() == 8);
    }
    SUBCASE("2 + 100 with batch 4 reuses the ID pair") {
        const EmbeddingSet s = counts_set(2, 100);
        Rng rng(2);
        const auto b = make_balanced_batches(s, 4, rng);
        CHECK(b.size() == 50);
        std::set<std::size_t> ood;
        for (const auto& batch : b) {
            auto ids = batch.id_rows;
            std::sort(ids.begin(), ids.end());
            CHECK(ids == std::vector<std::size_t>{0, 1});
            for (std::size_t r : batch.ood_rows) {
                CHECK(s.records()[r].dist == DistTag::kOod);
                ood.insert(r);
            }
        }
        CHECK(ood.size() == 100);
    }
    SUBCASE("leftover of the longer side is dropped") {
        Rng rng(3);
        CHECK(make_balanced_batches(counts_set(7, 5), 4, rng).size() == 3);
    }
    SUBCASE("same seed gives the same schedule") {
        const EmbeddingSet s = counts_set(13, 29);
        Rng a(5), b(5), c(6);
        const auto x = make_balanced_batches(s, 6, a);
        const auto y = make_balanced_batches(s, 6, b);
        const auto z = make_balanced_batches(s, 6, c);
        REQUIRE(x.size() == y.size());
        bool differs = false;
        for (std::size_t i = 0; i < x.size(); ++i) {
            CHECK(x[i].id_rows == y[i].id_rows);
            CHECK(x[i].ood_rows == y[i].ood_rows);
            differs |= x[i].ood_rows != z[i].ood_rows;
        }
        CHECK(differs);
    }
    SUBCASE("too few on a side") {
        Rng rng(1);
        CHECK_THROWS_AS(make_balanced_batches(counts_set(1, 10), 4, rng), CapacityError);
        CHECK_THROWS_AS(make_balanced_batches(counts_set(10, 0 + 1), 4, rng), CapacityError);
        CHECK_THROWS_AS(make_balanced_batches(counts_set(10, 10), 3, rng), InvalidParameter);
    }
}

TEST_CASE("pair stats agree with the double loop") {
    Rng rng(4);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> id(1 + rng.uniform_index(40)), ood(1 + rng.uniform_index(40));
        const bool grid = t % 2 == 0;
        for (double& v : id) v = grid ? double(rng.uniform_index(10)) / 20.0 : rng.normal();
        for (double& v : ood) v = grid ? double(rng.uniform_index(10)) / 20.0 : rng.normal() + 0.3;
        const double eps = grid ? 0.05 : rng.uniform_real(0.01, 1.0);
        const PairStats a = pair_stats(id, ood, eps);
        const PairStats b = brute_stats(id, ood, eps);
        CHECK(a.total == b.total);
        CHECK(a.negative == b.negative);
        CHECK(a.boundary == b.boundary);
        CHECK(a.nonneg_below_eps == b.nonneg_below_eps);
        CHECK(a.at_least_eps == b.at_least_eps);
        CHECK(a.mean_margin == doctest::Approx(b.mean_margin).epsilon(1e-12));
        CHECK(a.negative + a.at_least_eps + a.nonneg_below_eps == a.total);
    }
}

TEST_CASE("dynamics of fixed scorers") {
    const ScoringHead head = identity_head();
    SUBCASE("constant scores") {
        ScoringHead flat = head;
        flat.net().mutable_layers()[0].weight(0, 0) = 0.0;
        const auto s = make_set({{DistTag::kId, SplitTag::kTrain, {1}}, {DistTag::kId, SplitTag::kTrain, {2}},
                                 {DistTag::kOod, SplitTag::kTrain, {3}}});
        const auto d = compute_dynamics(flat, s, 0.05);
        CHECK(d.misranked_frac == 0.0);
        CHECK(d.boundary_mass == 1.0);
        CHECK(d.mean_margin == 0.0);
    }
    SUBCASE("perfect scorer") {
        const auto s = make_set({{DistTag::kId, SplitTag::kTrain, {0}}, {DistTag::kId, SplitTag::kTrain, {0.2}},
                                 {DistTag::kOod, SplitTag::kTrain, {0.3}}, {DistTag::kOod, SplitTag::kTrain, {1}}});
        const auto d = compute_dynamics(head, s, 0.05);
        CHECK(d.misranked_frac == 0.0);
        CHECK(d.boundary_mass == 0.0);
        CHECK(d.mean_margin > 0.0);
    }
    SUBCASE("two by two by hand") {
        // Margins: 0.5, -0.5, 0.02, -0.98
        const auto s = make_set({{DistTag::kId, SplitTag::kTrain, {0}}, {DistTag::kId, SplitTag::kTrain, {1}},
                                 {DistTag::kOod, SplitTag::kTrain, {0.5}}, {DistTag::kOod, SplitTag::kTrain, {0.02}},
                                 {DistTag::kOod, SplitTag::kVal, {9}}});
        const auto d = compute_dynamics(head, s, 0.05);
        CHECK(d.misranked_frac == 0.5);
        CHECK(d.boundary_mass == 0.25);
        CHECK(d.mean_margin == doctest::Approx(-0.24).epsilon(1e-14));
        CHECK_THROWS_AS(compute_dynamics(head, s, 0.05, SplitTag::kVal), CapacityError);
    }
}

TEST_CASE("zero epochs returns the initialization") {
    const EmbeddingSet data = separable_world(40, 1);
    TrainConfig cfg = small_config();
    cfg.epochs = 0;
    const TrainResult r = train(data, cfg);
    CHECK(r.dynamics.empty());
    CHECK(r.best_epoch == 0);
    CHECK(r.head == ScoringHead(cfg.head, Rng(cfg.seed).next_u64()));
    CHECK(r.final_head == r.head);
}

TEST_CASE("training preconditions") {
    const EmbeddingSet data = separable_world(40, 1);
    TrainConfig cfg = small_config();
    auto wrong_dim = cfg;
    wrong_dim.head.layer_dims = {3, 4, 1};
    CHECK_THROWS_AS(train(data, wrong_dim), ShapeError);

    std::vector<Row> rows;
    for (int i = 0; i < 40; ++i) rows.push_back({DistTag::kId, SplitTag::kTrain, {double(i), 0}});
    for (int i = 0; i < 4; ++i) rows.push_back({DistTag::kId, SplitTag::kVal, {double(i), 1}});
    for (int i = 0; i < 4; ++i) rows.push_back({DistTag::kOod, SplitTag::kVal, {double(i), 2}});
    const EmbeddingSet no_ood = make_set(rows);
    int epochs_seen = 0;
    CHECK_THROWS_AS(train(no_ood, cfg, [&](const DynamicsRecord&) { ++epochs_seen; }), CapacityError);
    CHECK(epochs_seen == 0);

    auto big_batch = cfg;
    big_batch.batch_size = 200;
    CHECK_THROWS_AS(train(data, big_batch), CapacityError);
}

TEST_CASE("separable data is ranked almost perfectly within 50 epochs") {
    const EmbeddingSet data = separable_world(500, 7);
    const TrainConfig cfg = small_config();
    std::vector<DynamicsRecord> seen;
    const TrainResult r = train(data, cfg, [&](const DynamicsRecord& d) { seen.push_back(d); });
    REQUIRE(r.dynamics.size() == 50);
    CHECK(seen.size() == 50);
    CHECK(r.dynamics.back().misranked_frac < 0.01);
    for (std::size_t e = 0; e < r.dynamics.size(); ++e) {
        const auto& d = r.dynamics[e];
        CHECK(d.epoch == e + 1);
        CHECK(d.val_auroc.has_value());
        CHECK(std::isfinite(d.train_loss));
    }
    CHECK(compute_dynamics(r.final_head, data, cfg.dynamics_epsilon).misranked_frac ==
          r.dynamics.back().misranked_frac);

    // Best-on-validation selection.
    REQUIRE(r.best_val_auroc.has_value());
    REQUIRE(r.final_val_auroc.has_value());
    CHECK(*r.best_val_auroc >= *r.final_val_auroc);
    CHECK(r.best_epoch >= 1);
    CHECK(*r.best_val_auroc == *r.dynamics[r.best_epoch - 1].val_auroc);
    for (std::size_t e = 0; e + 1 < r.best_epoch; ++e) CHECK(*r.dynamics[e].val_auroc < *r.best_val_auroc);
    DetectionScores val;
    for (DistTag t : kAllDists) {
        const auto rows = data.indices(t, SplitTag::kVal);
        const auto s = r.head.score(data.embeddings().gather_rows(rows));
        (t == DistTag::kId ? val.id_scores : val.ood_scores) = s;
    }
    CHECK(auroc(val) == *r.best_val_auroc);
}

TEST_CASE("training is bitwise deterministic") {
    const EmbeddingSet data = separable_world(60, 3);
    TrainConfig cfg = small_config();
    cfg.epochs = 5;
    cfg.batch_size = 16;
    const TrainResult a = train(data, cfg);
    const TrainResult b = train(data, cfg);
    CHECK(a.final_head.net().flat_parameters() == b.final_head.net().flat_parameters());
    CHECK(dynamics_to_csv(a.dynamics) == dynamics_to_csv(b.dynamics));
    cfg.seed = 43;
    CHECK(train(data, cfg).final_head.net().flat_parameters() != a.final_head.net().flat_parameters());
}

TEST_CASE("selection disabled returns the final head") {
    const EmbeddingSet data = separable_world(60, 3);
    TrainConfig cfg = small_config();
    cfg.epochs = 3;
    cfg.select_best_on_val = false;
    const TrainResult r = train(data, cfg);
    CHECK(r.head == r.final_head);
}

TEST_CASE("non-finite loss aborts with the last good head") {
    std::vector<Row> rows;
    for (int i = 0; i < 8; ++i) rows.push_back({DistTag::kId, SplitTag::kTrain, {1e200 * (i + 1), 1e200}});
    for (int i = 0; i < 8; ++i) rows.push_back({DistTag::kOod, SplitTag::kTrain, {-1e200 * (i + 1), 1e200}});
    const EmbeddingSet data = make_set(rows);
    TrainConfig cfg = small_config();
    cfg.batch_size = 4;
    cfg.select_best_on_val = false;
    try {
        train(data, cfg);
        FAIL("expected the run to abort");
    } catch (const TrainingAborted& e) {
        CHECK(e.epoch() == 1);
        CHECK(e.last_good() == ScoringHead(cfg.head, Rng(cfg.seed).next_u64()));
    }
}

TEST_CASE("weight groups") {
    const double beta = 0.1;
    const std::vector<double> id{0.0, 1.0};
    const std::vector<double> ood{0.5, 0.02};
    // Margins: 0.5, -0.5, 0.02, -0.98
    const WeightGroups g = weight_groups(id, ood, beta);
    CHECK(g.pairs_examined == 4);
    CHECK(g.hard.count == 2);
    CHECK(g.easy.count == 2);
    CHECK(g.boundary.count == 1);
    CHECK(g.hard.mean_weight ==
          doctest::Approx((hard_pair_weight(-0.5, beta) + hard_pair_weight(-0.98, beta)) / 2).epsilon(1e-14));
    CHECK(g.boundary.mean_weight == doctest::Approx(hard_pair_weight(0.02, beta)).epsilon(1e-14));
    CHECK(g.hard.mean_weight > g.easy.mean_weight);

    const WeightGroups none = weight_groups({0.0}, {1.0, 2.0}, beta);
    CHECK(none.hard.count == 0);
    CHECK(weight_groups_to_csv(none) ==
          "group,mean_weight,count\nhard,,0\nboundary,,0\neasy," + format_double(none.easy.mean_weight) + ",2\n");

    Rng rng(6);
    std::vector<double> many_id(300), many_ood(300);
    for (double& v : many_id) v = rng.normal();
    for (double& v : many_ood) v = rng.normal() + 0.5;
    const WeightGroups exact = weight_groups(many_id, many_ood, 1.0);
    const WeightGroups sampled = weight_groups(many_id, many_ood, 1.0, 0.05, 1000, 50000, 3);
    CHECK(sampled.pairs_examined == 50000);
    CHECK(sampled.hard.mean_weight == doctest::Approx(exact.hard.mean_weight).epsilon(0.01));
    CHECK(sampled.easy.mean_weight == doctest::Approx(exact.easy.mean_weight).epsilon(0.01));
    const WeightGroups again = weight_groups(many_id, many_ood, 1.0, 0.05, 1000, 50000, 3);
    CHECK(again.hard.mean_weight == sampled.hard.mean_weight);
}

TEST_CASE("dynamics csv") {
    std::vector<DynamicsRecord> recs(2);
    recs[0] = {1, 0.5, 0.25, -0.24, 0.7, std::nullopt};
    recs[1] = {2, 0.0, 0.0, 1.5, 0.1, 0.9};
    CHECK(dynamics_to_csv(recs) ==
          "epoch,misranked_frac,boundary_mass,mean_margin,train_loss,val_auroc\n"
          "1,0.5,0.25,-0.24,0.7,\n2,0,0,1.5,0.1,0.9\n");
}
