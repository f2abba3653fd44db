#include "molepair/trainer.hpp"

#include <algorithm>
#include <numeric>

#include <nlohmann/json.hpp>

#include "molepair/metrics.hpp"

namespace molepair {

namespace {

using json = nlohmann::ordered_json;

std::vector<double> concat(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

struct SplitScores {
    std::vector<double> id;
    std::vector<double> ood;
};

SplitScores score_split(const ScoringHead& head, const EmbeddingSet& set, SplitTag split) {
    const auto id_rows = set.indices(DistTag::kId, split);
    const auto ood_rows = set.indices(DistTag::kOod, split);
    return {head.score(set.embeddings().gather_rows(id_rows)),
            head.score(set.embeddings().gather_rows(ood_rows))};
}

bool has_both(const EmbeddingSet& set, SplitTag split) {
    return set.count(DistTag::kId, split) > 0 && set.count(DistTag::kOod, split) > 0;
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size < 2 || batch_size % 2 != 0) {
        throw InvalidParameter("batch size must be even and at least 2, got " +
                               std::to_string(batch_size));
    }
    loss.validate();
    head.validate();
    if (head.output_dim() != 1) {
        throw InvalidParameter("scoring head must end in a single output");
    }
    opt.validate();
    if (!(dynamics_epsilon > 0.0)) {
        throw InvalidParameter("dynamics epsilon must be positive");
    }
}

std::string TrainConfig::to_json() const {
    const json j = {
        {"epochs", epochs},
        {"batch_size", batch_size},
        {"beta", loss.beta},
        {"lambda", loss.lambda},
        {"head", {{"layer_dims", head.layer_dims}, {"dropout", head.dropout}, {"activation", "relu"}}},
        {"optimizer",
         {{"lr", opt.lr},
          {"weight_decay", opt.weight_decay},
          {"beta1", opt.beta1},
          {"beta2", opt.beta2},
          {"eps", opt.eps},
          {"clip_norm", opt.clip_norm},
          {"step_size", opt.step_size},
          {"gamma", opt.gamma}}},
        {"seed", seed},
        {"select_best_on_val", select_best_on_val},
        {"dynamics_epsilon", dynamics_epsilon},
    };
    return j.dump(2) + "\n";
}

TrainConfig TrainConfig::from_json(std::string_view text) {
    TrainConfig c;
    try {
        const json j = json::parse(text);
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.loss.beta = j.value("beta", c.loss.beta);
        c.loss.lambda = j.value("lambda", c.loss.lambda);
        if (j.contains("head")) {
            const auto& h = j.at("head");
            c.head.layer_dims = h.value("layer_dims", c.head.layer_dims);
            c.head.dropout = h.value("dropout", c.head.dropout);
            if (h.value("activation", std::string("relu")) != "relu") {
                throw SchemaError("only the relu activation is supported");
            }
        }
        if (j.contains("optimizer")) {
            const auto& o = j.at("optimizer");
            c.opt.lr = o.value("lr", c.opt.lr);
            c.opt.weight_decay = o.value("weight_decay", c.opt.weight_decay);
            c.opt.beta1 = o.value("beta1", c.opt.beta1);
            c.opt.beta2 = o.value("beta2", c.opt.beta2);
            c.opt.eps = o.value("eps", c.opt.eps);
            c.opt.clip_norm = o.value("clip_norm", c.opt.clip_norm);
            c.opt.step_size = o.value("step_size", c.opt.step_size);
            c.opt.gamma = o.value("gamma", c.opt.gamma);
        }
        c.seed = j.value("seed", c.seed);
        c.select_best_on_val = j.value("select_best_on_val", c.select_best_on_val);
        c.dynamics_epsilon = j.value("dynamics_epsilon", c.dynamics_epsilon);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("train config: ") + e.what());
    }
    return c;
}

// ---------------------------------------------------------------------------

PairStats pair_stats(const std::vector<double>& id_scores, const std::vector<double>& ood_scores,
                     double epsilon) {
    if (id_scores.empty() || ood_scores.empty()) {
        throw InvalidParameter("pair statistics need at least one ID and one OOD score");
    }
    std::vector<double> id = id_scores;
    std::sort(id.begin(), id.end());
    PairStats s;
    s.total = static_cast<std::uint64_t>(id.size()) * ood_scores.size();
    for (double o : ood_scores) {
        // Each predicate on delta = o - id[i] is monotone in i over the sorted ids,
        // so partition points reproduce the brute-force count exactly.
        auto first_where = [&](auto pred) {
            return static_cast<std::uint64_t>(
                std::partition_point(id.begin(), id.end(), [&](double v) { return !pred(o - v); }) -
                id.begin());
        };
        const std::uint64_t m = id.size();
        const std::uint64_t at_least_eps = first_where([&](double d) { return d < epsilon; });
        const std::uint64_t nonneg = first_where([](double d) { return d < 0.0; });
        const std::uint64_t above_neg_eps = first_where([&](double d) { return d <= -epsilon; });
        s.negative += m - nonneg;
        s.at_least_eps += at_least_eps;
        s.nonneg_below_eps += nonneg - at_least_eps;
        s.boundary += above_neg_eps - at_least_eps;
    }
    const double mean_id = std::accumulate(id_scores.begin(), id_scores.end(), 0.0) /
                           static_cast<double>(id_scores.size());
    const double mean_ood = std::accumulate(ood_scores.begin(), ood_scores.end(), 0.0) /
                            static_cast<double>(ood_scores.size());
    s.mean_margin = mean_ood - mean_id;
    return s;
}

std::vector<Batch> make_balanced_batches(const EmbeddingSet& set, std::size_t batch_size, Rng& rng) {
    if (batch_size < 2 || batch_size % 2 != 0) {
        throw InvalidParameter("batch size must be even and at least 2");
    }
    const std::size_t half = batch_size / 2;
    std::vector<std::size_t> id_rows = set.indices(DistTag::kId, SplitTag::kTrain);
    std::vector<std::size_t> ood_rows = set.indices(DistTag::kOod, SplitTag::kTrain);
    for (const auto* side : {&id_rows, &ood_rows}) {
        if (side->size() < half) {
            throw CapacityError("train split has " + std::to_string(side->size()) + " " +
                                (side == &id_rows ? "ID" : "OOD") + " records; batch size " +
                                std::to_string(batch_size) + " needs at least " +
                                std::to_string(half) + " per side");
        }
    }
    rng.shuffle(id_rows);
    rng.shuffle(ood_rows);
    const bool id_longer = id_rows.size() >= ood_rows.size();
    const std::vector<std::size_t>& longer = id_longer ? id_rows : ood_rows;
    const std::vector<std::size_t> shorter_all = id_longer ? ood_rows : id_rows;
    std::vector<std::size_t> pool = shorter_all;
    std::size_t pool_pos = 0;

    const std::size_t n_batches = longer.size() / half;
    std::vector<Batch> batches(n_batches);
    for (std::size_t b = 0; b < n_batches; ++b) {
        std::vector<std::size_t> long_part(longer.begin() + static_cast<long>(b * half),
                                           longer.begin() + static_cast<long>((b + 1) * half));
        if (pool.size() - pool_pos < half) {
            pool = shorter_all;
            rng.shuffle(pool);
            pool_pos = 0;
        }
        std::vector<std::size_t> short_part(pool.begin() + static_cast<long>(pool_pos),
                                            pool.begin() + static_cast<long>(pool_pos + half));
        pool_pos += half;
        if (id_longer) {
            batches[b] = {std::move(long_part), std::move(short_part)};
        } else {
            batches[b] = {std::move(short_part), std::move(long_part)};
        }
    }
    return batches;
}

DynamicsRecord compute_dynamics(const ScoringHead& head, const EmbeddingSet& set, double epsilon,
                                SplitTag split) {
    set.require_both_tags(split, "dynamics");
    const SplitScores sc = score_split(head, set, split);
    const PairStats s = pair_stats(sc.id, sc.ood, epsilon);
    DynamicsRecord r;
    const double total = static_cast<double>(s.total);
    r.misranked_frac = static_cast<double>(s.negative) / total;
    r.boundary_mass = static_cast<double>(s.boundary) / total;
    r.mean_margin = s.mean_margin;
    return r;
}

TrainResult train(const EmbeddingSet& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    if (data.dim() != cfg.head.input_dim()) {
        throw ShapeError("head input dim " + std::to_string(cfg.head.input_dim()) +
                         " does not match embedding dim " + std::to_string(data.dim()));
    }
    data.require_both_tags(SplitTag::kTrain, "training");
    const std::size_t half = cfg.batch_size / 2;
    for (DistTag d : kAllDists) {
        if (data.count(d, SplitTag::kTrain) < half) {
            throw CapacityError("train split has " + std::to_string(data.count(d, SplitTag::kTrain)) +
                                " " + std::string(to_string(d)) + " records; batch size " +
                                std::to_string(cfg.batch_size) + " needs " + std::to_string(half));
        }
    }
    if (cfg.select_best_on_val) {
        data.require_both_tags(SplitTag::kVal, "validation-based model selection");
    }
    const bool track_val = has_both(data, SplitTag::kVal);

    Rng master(cfg.seed);
    const std::uint64_t head_seed = master.next_u64();
    Rng batch_rng = master.split();

    ScoringHead head(cfg.head, head_seed);
    OptimizerState opt(cfg.opt, head.net().parameter_count());

    TrainResult result;
    result.head = head;
    std::optional<double> best_val;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        head.set_training(true);
        const ScoringHead epoch_start = head;
        double loss_sum = 0.0;
        const auto batches = make_balanced_batches(data, cfg.batch_size, batch_rng);
        for (const auto& batch : batches) {
            std::vector<std::size_t> rows = batch.id_rows;
            rows.insert(rows.end(), batch.ood_rows.begin(), batch.ood_rows.end());
            ForwardCache cache;
            std::vector<double> scores;
            try {
                scores = head.forward(data.embeddings().gather_rows(rows), &cache);
            } catch (const NumericError& e) {
                throw TrainingAborted(e.what(), epoch_start, epoch);
            }
            const std::size_t m = batch.id_rows.size();
            std::vector<double> id_scores(scores.begin(), scores.begin() + static_cast<long>(m));
            std::vector<double> ood_scores(scores.begin() + static_cast<long>(m), scores.end());
            const MarginBatch mb = MarginBatch::build(std::move(id_scores), std::move(ood_scores),
                                                      cfg.loss.beta);
            const LossResult lr = total_loss(mb, cfg.loss);
            if (!std::isfinite(lr.loss)) {
                throw TrainingAborted("non-finite training loss at epoch " + std::to_string(epoch),
                                      epoch_start, epoch);
            }
            loss_sum += lr.loss;
            const BackwardResult grads = head.backward(cache, concat(lr.id_grad, lr.ood_grad));
            try {
                apply_update(head.net(), opt, grads.grads);
            } catch (const NumericError& e) {
                throw TrainingAborted(e.what(), epoch_start, epoch);
            }
        }
        opt.end_epoch();
        head.set_training(false);

        DynamicsRecord rec = compute_dynamics(head, data, cfg.dynamics_epsilon, SplitTag::kTrain);
        rec.epoch = epoch;
        rec.train_loss = batches.empty() ? 0.0 : loss_sum / static_cast<double>(batches.size());
        if (track_val) {
            const SplitScores val = score_split(head, data, SplitTag::kVal);
            rec.val_auroc = auroc({val.id, val.ood, "mole-pair", cfg.seed});
        }
        result.dynamics.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (cfg.select_best_on_val && rec.val_auroc && (!best_val || *rec.val_auroc > *best_val)) {
            best_val = rec.val_auroc;
            result.head = head;
            result.best_epoch = epoch;
        }
    }
    head.set_training(false);
    result.final_head = head;
    if (!cfg.select_best_on_val) {
        result.head = head;
        result.best_epoch = cfg.epochs;
    }
    result.head.set_training(false);
    if (!result.dynamics.empty()) {
        result.final_val_auroc = result.dynamics.back().val_auroc;
    }
    result.best_val_auroc = cfg.select_best_on_val ? best_val : result.final_val_auroc;
    return result;
}

WeightGroups weight_groups(const std::vector<double>& id_scores,
                           const std::vector<double>& ood_scores, double beta, double boundary_eps,
                           std::uint64_t max_exact_pairs, std::uint64_t sample_pairs,
                           std::uint64_t seed) {
    if (id_scores.empty() || ood_scores.empty()) {
        throw InvalidParameter("weight groups need at least one ID and one OOD score");
    }
    WeightGroups g;
    double hard_sum = 0.0;
    double boundary_sum = 0.0;
    double easy_sum = 0.0;
    auto visit = [&](double delta) {
        const double w = hard_pair_weight(delta, beta);
        if (delta < 0.0) {
            ++g.hard.count;
            hard_sum += w;
        } else if (delta > 0.0) {
            ++g.easy.count;
            easy_sum += w;
        }
        if (std::abs(delta) < boundary_eps) {
            ++g.boundary.count;
            boundary_sum += w;
        }
        ++g.pairs_examined;
    };
    const std::uint64_t m = id_scores.size();
    const std::uint64_t k = ood_scores.size();
    if (m * k <= max_exact_pairs) {
        for (double o : ood_scores) {
            for (double i : id_scores) visit(o - i);
        }
    } else {
        Rng rng(seed);
        for (std::uint64_t s = 0; s < sample_pairs; ++s) {
            const double o = ood_scores[rng.uniform_index(k)];
            const double i = id_scores[rng.uniform_index(m)];
            visit(o - i);
        }
    }
    auto finish = [](WeightGroup& grp, double sum) {
        grp.mean_weight = grp.count > 0 ? sum / static_cast<double>(grp.count) : 0.0;
    };
    finish(g.hard, hard_sum);
    finish(g.boundary, boundary_sum);
    finish(g.easy, easy_sum);
    return g;
}

std::string dynamics_to_csv(const std::vector<DynamicsRecord>& records) {
    std::string out = "epoch,misranked_frac,boundary_mass,mean_margin,train_loss,val_auroc\n";
    for (const auto& r : records) {
        out += std::to_string(r.epoch) + "," + format_double(r.misranked_frac) + "," +
               format_double(r.boundary_mass) + "," + format_double(r.mean_margin) + "," +
               format_double(r.train_loss) + "," + (r.val_auroc ? format_double(*r.val_auroc) : "") +
               "\n";
    }
    return out;
}

std::string weight_groups_to_csv(const WeightGroups& groups) {
    std::string out = "group,mean_weight,count\n";
    auto row = [&out](const char* name, const WeightGroup& g) {
        out += std::string(name) + "," + (g.count > 0 ? format_double(g.mean_weight) : "") + "," +
               std::to_string(g.count) + "\n";
    };
    row("hard", groups.hard);
    row("boundary", groups.boundary);
    row("easy", groups.easy);
    return out;
}

}  // namespace molepair
