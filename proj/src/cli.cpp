#include "molepair/cli.hpp"

#include <algorithm>
#include <iostream>
#include <mutex>
#include <thread>
#include <unordered_map>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "molepair/synthetic.hpp"

namespace molepair::cli {

namespace {

using json = nlohmann::ordered_json;

std::string abs_string(const fs::path& p) { return fs::absolute(p).lexically_normal().string(); }

/// Writes metrics.json, roc.csv, pr.csv and scores.csv for the rows of one split.
MetricsReport write_evaluation(const fs::path& out, const EmbeddingSet& data,
                               const std::vector<std::size_t>& rows,
                               const std::vector<double>& scores, const std::string& method,
                               std::uint64_t seed, const MetricsOptions& mopts = {}) {
    DetectionScores ds;
    ds.method = method;
    ds.seed = seed;
    std::string csv = "id,method,score\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const RecordMeta& rec = data.records()[rows[i]];
        (rec.dist == DistTag::kId ? ds.id_scores : ds.ood_scores).push_back(scores[i]);
        csv += rec.id + "," + method + "," + format_double(scores[i]) + "\n";
    }
    const MetricsReport report = evaluate(ds, mopts);
    write_file(out / "scores.csv", csv);
    write_file(out / "metrics.json", metrics_to_json(report, ds, mopts));
    write_file(out / "roc.csv", roc_to_csv(report.roc));
    write_file(out / "pr.csv", pr_to_csv(report.pr));
    return report;
}

std::vector<std::size_t> split_rows(const EmbeddingSet& data, SplitTag split) {
    std::vector<std::size_t> rows = data.indices(DistTag::kId, split);
    const auto ood = data.indices(DistTag::kOod, split);
    rows.insert(rows.end(), ood.begin(), ood.end());
    std::sort(rows.begin(), rows.end());
    return rows;
}

TrainResult train_on(const EmbeddingSet& data, const TrainConfig& cfg) {
    data.require_both_tags(SplitTag::kTrain, "training");
    data.require_both_tags(SplitTag::kTest, "test evaluation");
    return train(data, cfg, [](const DynamicsRecord& r) {
        spdlog::debug("epoch {} loss {:.6g} misranked {:.4f}", r.epoch, r.train_loss, r.misranked_frac);
    });
}

}  // namespace

int exit_code_for(const std::exception& e) {
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
        switch (err->kind()) {
            case ErrorKind::kUsage: return 2;
            case ErrorKind::kData: return 3;
            case ErrorKind::kNumeric: return 4;
            case ErrorKind::kContract: return 1;
        }
    }
    return 1;
}

EmbeddingSet cmd_gen_synth(const GenSynthOptions& opts) {
    SynthConfig cfg = SynthConfig::from_json(read_file(opts.config));
    if (opts.seed) {
        cfg.seed = *opts.seed;
        cfg.counts.seed = *opts.seed;
    }
    const EmbeddingSet set = generate_dataset(cfg);
    save_binary(set, opts.out / "dataset.mper");
    if (opts.write_csv) save_csv(set, opts.out / "dataset.csv");
    write_file(opts.out / "manifest.json",
               SplitManifest::from_set(set, cfg.seed, {"dataset.mper"}).to_json());
    write_file(opts.out / "synth_config.json", cfg.to_json());
    return set;
}

TrainConfig resolve_train_config(const TrainOptions& opts) {
    TrainConfig cfg = opts.config ? TrainConfig::from_json(read_file(*opts.config)) : TrainConfig{};
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.beta) cfg.loss.beta = *opts.beta;
    if (opts.lambda) cfg.loss.lambda = *opts.lambda;
    if (opts.epochs) cfg.epochs = *opts.epochs;
    return cfg;
}

TrainSummary cmd_train(const TrainOptions& opts) {
    TrainConfig cfg = resolve_train_config(opts);
    const EmbeddingSet data = load_embeddings(opts.data);
    if (!opts.config) cfg.head.layer_dims.front() = data.dim();
    cfg.validate();

    TrainSummary s{train_on(data, cfg), {}};

    json run = {{"command", "train"},
                {"data", abs_string(opts.data)},
                {"seed", cfg.seed},
                {"train", json::parse(cfg.to_json())}};
    write_file(opts.out / "config.json", run.dump(2) + "\n");
    CheckpointMeta meta;
    meta.seed = cfg.seed;
    meta.epoch = s.result.best_epoch;
    meta.lr = cfg.opt.lr;
    save_checkpoint(opts.out / "checkpoint.bin", s.result.head.net(), meta);
    meta.epoch = cfg.epochs;
    save_checkpoint(opts.out / "final_checkpoint.bin", s.result.final_head.net(), meta);
    write_file(opts.out / "dynamics.csv", dynamics_to_csv(s.result.dynamics));

    const auto rows = split_rows(data, SplitTag::kTest);
    const auto scores = s.result.head.score(data.embeddings().gather_rows(rows));
    s.test = write_evaluation(opts.out, data, rows, scores, "mole-pair", cfg.seed);

    json summary = {{"best_epoch", s.result.best_epoch}};
    summary["best_val_auroc"] = s.result.best_val_auroc ? json(*s.result.best_val_auroc) : json(nullptr);
    summary["final_val_auroc"] =
        s.result.final_val_auroc ? json(*s.result.final_val_auroc) : json(nullptr);
    write_file(opts.out / "train_summary.json", summary.dump(2) + "\n");
    spdlog::info("train: test AUROC {:.4f}, best epoch {}", s.test.auroc, s.result.best_epoch);
    return s;
}

MetricsReport cmd_baseline(const BaselineOptions& opts) {
    if (std::find(kBaselineMethods.begin(), kBaselineMethods.end(), opts.method) ==
        kBaselineMethods.end()) {
        throw UsageError("unknown method '" + opts.method +
                         "'; valid methods: msp, odin, energy, mahalanobis, knn, lof");
    }
    if (opts.feature_space != "penultimate" && opts.feature_space != "input") {
        throw UsageError("feature space must be 'penultimate' or 'input'");
    }
    const EmbeddingSet data = load_embeddings(opts.data);
    data.require_both_tags(SplitTag::kTest, "baseline evaluation");

    ClassifierConfig ccfg =
        opts.config ? ClassifierConfig::from_json(read_file(*opts.config)) : ClassifierConfig{};
    ccfg.mode = parse_task_mode(opts.task);
    if (opts.seed) ccfg.seed = *opts.seed;

    const bool distance_method = opts.method == "mahalanobis" || opts.method == "knn" ||
                                 opts.method == "lof";
    const bool needs_classifier = !distance_method || opts.feature_space == "penultimate";

    json run = {{"command", "baseline"},
                {"data", abs_string(opts.data)},
                {"method", opts.method},
                {"seed", ccfg.seed},
                {"classifier", json::parse(ccfg.to_json())},
                {"odin_epsilon", opts.odin_epsilon},
                {"odin_temperature", opts.odin_temperature},
                {"knn_k", opts.knn_k},
                {"lof_neighbors", opts.lof_neighbors},
                {"feature_space", opts.feature_space},
                {"shrink", opts.shrink}};

    std::optional<ClassifierHead> clf;
    std::optional<PreparedLabels> labels;
    if (needs_classifier) {
        labels = prepare_labels(data, ccfg.mode, "method '" + opts.method + "'");
        const fs::path ckpt = opts.out / "classifier.bin";
        const fs::path ckpt_info = opts.out / "classifier.json";
        const json info = {{"data", abs_string(opts.data)}, {"classifier", run["classifier"]}};
        if (fs::exists(ckpt) && fs::exists(ckpt_info) &&
            json::parse(read_file(ckpt_info)) == info) {
            clf = load_classifier(ckpt);
            spdlog::info("baseline: reusing {}", ckpt.string());
        } else {
            clf = train_classifier(labels->train, labels->val, labels->num_outputs, ccfg);
            clf->threshold = labels->threshold;
            save_classifier(ckpt, *clf, ccfg);
            write_file(ckpt_info, info.dump(2) + "\n");
        }
    }

    const auto rows = split_rows(data, SplitTag::kTest);
    const Matrix test_x = data.embeddings().gather_rows(rows);
    std::vector<double> scores;
    if (opts.method == "msp") {
        scores = score_msp(*clf, test_x);
    } else if (opts.method == "odin") {
        scores = score_odin(*clf, test_x, opts.odin_epsilon, opts.odin_temperature);
    } else if (opts.method == "energy") {
        scores = score_energy(*clf, test_x);
    } else {
        const auto train_rows = data.indices(DistTag::kId, SplitTag::kTrain);
        if (train_rows.empty()) throw CapacityError("method '" + opts.method + "' needs ID train records");
        Matrix train_f = data.embeddings().gather_rows(train_rows);
        Matrix test_f = test_x;
        if (clf) {
            train_f = clf->features(train_f);
            test_f = clf->features(test_f);
        }
        if (opts.method == "mahalanobis") {
            const std::vector<int> classes =
                (clf && ccfg.mode != TaskMode::kMultitask) ? labels->train_classes : std::vector<int>{};
            const FeatureStats st = fit_feature_stats(train_f, classes, opts.shrink);
            run["covariance"] = std::string(to_string(st.estimate));
            run["shrinkage"] = st.shrinkage;
            scores = score_mahalanobis(st, test_f);
        } else {
            const Standardizer z = Standardizer::fit(train_f);
            const Matrix train_z = z.apply(train_f);
            const Matrix test_z = z.apply(test_f);
            scores = opts.method == "knn" ? score_knn(train_z, test_z, opts.knn_k)
                                          : score_lof(train_z, test_z, opts.lof_neighbors);
        }
    }
    write_file(opts.out / "config.json", run.dump(2) + "\n");
    const MetricsReport report = write_evaluation(opts.out, data, rows, scores, opts.method, ccfg.seed);
    spdlog::info("baseline {}: test AUROC {:.4f}", opts.method, report.auroc);
    return report;
}

MetricsReport cmd_metrics(const MetricsCommandOptions& opts) {
    MetricsOptions mopts;
    if (opts.aupr_positive == "OOD") {
        mopts.aupr_positive = AuprPositive::kOod;
    } else if (opts.aupr_positive == "ID") {
        mopts.aupr_positive = AuprPositive::kId;
    } else {
        throw UsageError("AUPR positive class must be 'ID' or 'OOD'");
    }
    if (opts.fpr95_mode == "step") {
        mopts.fpr95_mode = Fpr95Mode::kStep;
    } else if (opts.fpr95_mode == "interpolated") {
        mopts.fpr95_mode = Fpr95Mode::kInterpolated;
    } else {
        throw UsageError("FPR95 mode must be 'step' or 'interpolated'");
    }
    const EmbeddingSet data = load_embeddings(opts.data);
    std::unordered_map<std::string, std::size_t> row_of;
    for (std::size_t r = 0; r < data.size(); ++r) row_of.emplace(data.records()[r].id, r);

    const std::string text = read_file(opts.scores);
    std::vector<std::size_t> rows;
    std::vector<double> scores;
    std::string method;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line != "id,method,score") {
                throw ParseError(1, "expected header 'id,method,score'");
            }
            continue;
        }
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.rfind(',');
        if (c1 == std::string::npos || c1 == c2) throw ParseError(line_no, "expected 3 fields");
        const std::string id = line.substr(0, c1);
        const auto it = row_of.find(id);
        if (it == row_of.end()) throw SchemaError("line " + std::to_string(line_no) + ": unknown id '" + id + "'");
        if (method.empty()) method = line.substr(c1 + 1, c2 - c1 - 1);
        double v = 0.0;
        try {
            std::size_t used = 0;
            v = std::stod(line.substr(c2 + 1), &used);
        } catch (const std::exception&) {
            throw ParseError(line_no, "score is not a number");
        }
        if (!std::isfinite(v)) throw ParseError(line_no, "score is not finite");
        rows.push_back(it->second);
        scores.push_back(v);
    }
    return write_evaluation(opts.out, data, rows, scores, method.empty() ? "unknown" : method, 0, mopts);
}

std::vector<AblationRow> cmd_ablate(const AblateOptions& opts) {
    if (opts.betas.empty() || opts.lambdas.empty()) {
        throw UsageError("ablation grid is empty: give at least one --beta and one --lambda");
    }
    for (double b : opts.betas) {
        if (!(b > 0.0)) throw UsageError("every beta must be positive");
    }
    for (double l : opts.lambdas) {
        if (!(l >= 0.0)) throw UsageError("every lambda must be non-negative");
    }
    if (opts.jobs == 0) throw UsageError("--jobs must be positive");

    TrainOptions topts;
    topts.config = opts.config;
    topts.seed = opts.seed;
    topts.epochs = opts.epochs;
    TrainConfig base = resolve_train_config(topts);
    const EmbeddingSet data = load_embeddings(opts.data);
    if (!opts.config) base.head.layer_dims.front() = data.dim();
    base.validate();

    std::vector<AblationRow> rows;
    for (double b : opts.betas) {
        for (double l : opts.lambdas) rows.push_back({b, l, 0.0});
    }
    const auto test_rows = split_rows(data, SplitTag::kTest);
    const Matrix test_x = data.embeddings().gather_rows(test_rows);

    std::mutex error_mutex;
    std::exception_ptr first_error;
    std::size_t next = 0;
    std::mutex next_mutex;
    auto worker = [&] {
        for (;;) {
            std::size_t g;
            {
                std::lock_guard lock(next_mutex);
                if (next >= rows.size()) return;
                g = next++;
            }
            try {
                TrainConfig cfg = base;
                cfg.loss.beta = rows[g].beta;
                cfg.loss.lambda = rows[g].lambda;
                cfg.seed = base.seed + g;
                const TrainResult r = train_on(data, cfg);
                const auto scores = r.head.score(test_x);
                DetectionScores ds;
                for (std::size_t i = 0; i < test_rows.size(); ++i) {
                    (data.records()[test_rows[i]].dist == DistTag::kId ? ds.id_scores : ds.ood_scores)
                        .push_back(scores[i]);
                }
                rows[g].test_auroc = auroc(ds);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    const std::size_t n_threads = std::min(opts.jobs, rows.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);

    std::string csv = "beta,lambda,test_auroc\n";
    for (const auto& r : rows) {
        csv += format_double(r.beta) + "," + format_double(r.lambda) + "," + format_double(r.test_auroc) + "\n";
    }
    json run = {{"command", "ablate"},
                {"data", abs_string(opts.data)},
                {"seed", base.seed},
                {"betas", opts.betas},
                {"lambdas", opts.lambdas},
                {"train", json::parse(base.to_json())}};
    write_file(opts.out / "config.json", run.dump(2) + "\n");
    write_file(opts.out / "ablation.csv", csv);
    return rows;
}

WeightGroups cmd_dynamics(const DynamicsOptions& opts) {
    const fs::path ckpt = opts.run_dir / "final_checkpoint.bin";
    const fs::path cfg_path = opts.run_dir / "config.json";
    if (!fs::exists(ckpt)) throw IoError("no final checkpoint in " + opts.run_dir.string());
    if (!fs::exists(cfg_path)) throw IoError("no config.json in " + opts.run_dir.string());
    json run;
    try {
        run = json::parse(read_file(cfg_path));
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(cfg_path.string() + ": " + e.what());
    }
    if (!run.contains("train") || !run.contains("data")) {
        throw SchemaError(cfg_path.string() + " is not a training run config");
    }
    const TrainConfig cfg = TrainConfig::from_json(run["train"].dump());
    const EmbeddingSet data = load_embeddings(run["data"].get<std::string>());
    data.require_both_tags(SplitTag::kTrain, "weight-group analysis");
    const ScoringHead head(load_checkpoint(ckpt));
    const auto id = head.score(data.embeddings().gather_rows(data.indices(DistTag::kId, SplitTag::kTrain)));
    const auto ood = head.score(data.embeddings().gather_rows(data.indices(DistTag::kOod, SplitTag::kTrain)));
    const WeightGroups groups = weight_groups(id, ood, cfg.loss.beta, opts.boundary_epsilon);
    write_file(opts.out.value_or(opts.run_dir / "weight_groups.csv"), weight_groups_to_csv(groups));
    return groups;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"Pairwise-preference OOD detection on frozen embeddings"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Log per-epoch progress");

    GenSynthOptions gen;
    std::uint64_t gen_seed = 0;
    auto* g = app.add_subcommand("gen-synth", "Sample a dataset from a Gaussian world config");
    g->add_option("--config", gen.config, "Synthetic world JSON")->required()->check(CLI::ExistingFile);
    g->add_option("--out", gen.out, "Output directory")->required();
    auto* g_seed = g->add_option("--seed", gen_seed, "Override the config seed");
    g->add_flag("--csv", gen.write_csv, "Also write dataset.csv");

    TrainOptions tr;
    std::uint64_t tr_seed = 0;
    double tr_beta = 0.0, tr_lambda = 0.0;
    std::size_t tr_epochs = 0;
    std::string tr_config;
    auto* t = app.add_subcommand("train", "Train the pairwise scoring head and evaluate on test");
    t->add_option("--data", tr.data, "Embedding file (.mper or .csv)")->required()->check(CLI::ExistingFile);
    t->add_option("--config", tr_config, "Training config JSON")->check(CLI::ExistingFile);
    t->add_option("--out", tr.out, "Run directory")->required();
    auto* t_seed = t->add_option("--seed", tr_seed, "Seed");
    auto* t_beta = t->add_option("--beta", tr_beta, "Temperature");
    auto* t_lambda = t->add_option("--lambda", tr_lambda, "Score l2 weight");
    auto* t_epochs = t->add_option("--epochs", tr_epochs, "Epochs");

    BaselineOptions bl;
    std::uint64_t bl_seed = 0;
    std::string bl_config;
    bool no_shrink = false;
    auto* b = app.add_subcommand("baseline", "Score the test split with a classical detector");
    b->add_option("--data", bl.data, "Embedding file")->required()->check(CLI::ExistingFile);
    b->add_option("--method", bl.method, "msp | odin | energy | mahalanobis | knn | lof")->required();
    b->add_option("--out", bl.out, "Output directory")->required();
    b->add_option("--config", bl_config, "Classifier config JSON")->check(CLI::ExistingFile);
    auto* b_seed = b->add_option("--seed", bl_seed, "Classifier seed");
    b->add_option("--task", bl.task, "binary | multiclass");
    b->add_option("--odin-epsilon", bl.odin_epsilon, "ODIN perturbation size");
    b->add_option("--odin-temperature", bl.odin_temperature, "ODIN temperature");
    b->add_option("--k", bl.knn_k, "KNN neighbours");
    b->add_option("--lof-neighbors", bl.lof_neighbors, "LOF neighbours");
    b->add_option("--features", bl.feature_space, "penultimate | input");
    b->add_flag("--no-shrink", no_shrink, "Exact covariance for Mahalanobis");

    MetricsCommandOptions mt;
    auto* m = app.add_subcommand("metrics", "AUROC, AUPR and FPR95 of a scores CSV");
    m->add_option("--scores", mt.scores, "CSV with id,method,score")->required()->check(CLI::ExistingFile);
    m->add_option("--data", mt.data, "Embedding file with the ID/OOD tags")->required()->check(CLI::ExistingFile);
    m->add_option("--out", mt.out, "Output directory")->required();
    m->add_option("--aupr-positive", mt.aupr_positive, "OOD | ID");
    m->add_option("--fpr95-mode", mt.fpr95_mode, "step | interpolated");

    AblateOptions ab;
    std::uint64_t ab_seed = 0;
    std::size_t ab_epochs = 0;
    std::string ab_config;
    auto* a = app.add_subcommand("ablate", "Test AUROC over a beta x lambda grid");
    a->add_option("--data", ab.data, "Embedding file")->required()->check(CLI::ExistingFile);
    a->add_option("--config", ab_config, "Training config JSON")->check(CLI::ExistingFile);
    a->add_option("--beta", ab.betas, "Comma-separated betas")->delimiter(',');
    a->add_option("--lambda", ab.lambdas, "Comma-separated lambdas")->delimiter(',');
    a->add_option("--out", ab.out, "Output directory")->required();
    auto* a_seed = a->add_option("--seed", ab_seed, "Base seed");
    auto* a_epochs = a->add_option("--epochs", ab_epochs, "Epochs per run");
    a->add_option("--jobs", ab.jobs, "Worker threads");

    DynamicsOptions dy;
    std::string dy_out;
    auto* d = app.add_subcommand("dynamics", "Mean pair weight per hard/boundary/easy group");
    d->add_option("--run", dy.run_dir, "Training run directory")->required();
    d->add_option("--out", dy_out, "Output CSV (default <run>/weight_groups.csv)");
    d->add_option("--epsilon", dy.boundary_epsilon, "Boundary half-width");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

    try {
        if (g->parsed()) {
            if (*g_seed) gen.seed = gen_seed;
            cmd_gen_synth(gen);
        } else if (t->parsed()) {
            if (!tr_config.empty()) tr.config = tr_config;
            if (*t_seed) tr.seed = tr_seed;
            if (*t_beta) tr.beta = tr_beta;
            if (*t_lambda) tr.lambda = tr_lambda;
            if (*t_epochs) tr.epochs = tr_epochs;
            cmd_train(tr);
        } else if (b->parsed()) {
            if (!bl_config.empty()) bl.config = bl_config;
            if (*b_seed) bl.seed = bl_seed;
            bl.shrink = !no_shrink;
            cmd_baseline(bl);
        } else if (m->parsed()) {
            cmd_metrics(mt);
        } else if (a->parsed()) {
            if (!ab_config.empty()) ab.config = ab_config;
            if (*a_seed) ab.seed = ab_seed;
            if (*a_epochs) ab.epochs = ab_epochs;
            cmd_ablate(ab);
        } else if (d->parsed()) {
            if (!dy_out.empty()) dy.out = dy_out;
            cmd_dynamics(dy);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return 0;
}

}  // namespace molepair::cli
