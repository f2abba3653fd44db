#include "molepair/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace molepair {

namespace {

using json = nlohmann::ordered_json;

double binary_confidence(double z) {
    const double p = sigmoid(z);
    return std::max(p, 1.0 - p);
}

double softmax_max(std::span<const double> z) {
    const double lse = logsumexp(z);
    return std::exp(*std::max_element(z.begin(), z.end()) - lse);
}

std::size_t argmax(std::span<const double> z) {
    return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

bool is_binary_value(double v) { return v == 0.0 || v == 1.0; }

struct Neighbor {
    double dist;
    std::size_t index;
    bool operator<(const Neighbor& o) const {
        return dist < o.dist || (dist == o.dist && index < o.index);
    }
};

/// The k nearest rows of `train` to `query`, ascending by (distance, index).
/// `skip` excludes one train row (the query itself during fitting).
std::vector<Neighbor> nearest(const Matrix& train, std::span<const double> query, std::size_t k,
                              std::size_t skip = std::numeric_limits<std::size_t>::max()) {
    std::vector<Neighbor> all;
    all.reserve(train.rows());
    for (std::size_t r = 0; r < train.rows(); ++r) {
        if (r == skip) continue;
        all.push_back({std::sqrt(squared_distance(train.row(r), query)), r});
    }
    std::partial_sort(all.begin(), all.begin() + static_cast<long>(k), all.end());
    all.resize(k);
    return all;
}

void check_neighbors(const Matrix& train, const Matrix& batch, std::size_t k, std::size_t limit,
                     const char* what) {
    if (k == 0 || k > limit) {
        throw InvalidParameter(std::string(what) + " must lie in [1, " + std::to_string(limit) +
                               "], got " + std::to_string(k));
    }
    if (batch.cols() != train.cols()) {
        throw ShapeError("query dim " + std::to_string(batch.cols()) + " != train dim " +
                         std::to_string(train.cols()));
    }
}

LabeledFeatures rows_with_targets(const EmbeddingSet& data, const std::vector<std::size_t>& rows,
                                  TaskMode mode, std::optional<double> threshold) {
    LabeledFeatures out;
    out.x = data.embeddings().gather_rows(rows);
    out.targets = Matrix(rows.size(), 1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double y = *data.records()[rows[i]].label;
        out.targets(i, 0) = (mode == TaskMode::kBinary && threshold) ? (y >= *threshold ? 1.0 : 0.0) : y;
    }
    return out;
}

}  // namespace

std::string_view to_string(TaskMode mode) {
    switch (mode) {
        case TaskMode::kBinary: return "binary";
        case TaskMode::kMulticlass: return "multiclass";
        case TaskMode::kMultitask: return "multitask";
    }
    return "?";
}

TaskMode parse_task_mode(std::string_view text) {
    if (text == "binary") return TaskMode::kBinary;
    if (text == "multiclass") return TaskMode::kMulticlass;
    if (text == "multitask") return TaskMode::kMultitask;
    throw InvalidParameter("unknown task mode '" + std::string(text) +
                           "' (expected binary, multiclass or multitask)");
}

void ClassifierConfig::validate() const {
    if (hidden.empty()) throw InvalidParameter("classifier needs at least one hidden layer");
    for (std::size_t h : hidden) {
        if (h == 0) throw InvalidParameter("classifier hidden dims must be positive");
    }
    if (!(lr > 0.0)) throw InvalidParameter("classifier learning rate must be positive");
    if (!(weight_decay >= 0.0)) throw InvalidParameter("classifier weight decay must be non-negative");
    if (patience == 0) throw InvalidParameter("patience must be positive");
    if (batch_size == 0) throw InvalidParameter("classifier batch size must be positive");
}

std::string ClassifierConfig::to_json() const {
    const json j = {{"mode", to_string(mode)},   {"hidden", hidden},
                    {"lr", lr},                  {"weight_decay", weight_decay},
                    {"epochs", epochs},          {"patience", patience},
                    {"batch_size", batch_size},  {"seed", seed}};
    return j.dump(2) + "\n";
}

ClassifierConfig ClassifierConfig::from_json(std::string_view text) {
    ClassifierConfig c;
    try {
        const json j = json::parse(text);
        if (j.contains("mode")) c.mode = parse_task_mode(j.at("mode").get<std::string>());
        c.hidden = j.value("hidden", c.hidden);
        c.lr = j.value("lr", c.lr);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.epochs = j.value("epochs", c.epochs);
        c.patience = j.value("patience", c.patience);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("classifier config: ") + e.what());
    }
    return c;
}

PreparedLabels prepare_labels(const EmbeddingSet& data, TaskMode mode, std::string_view purpose) {
    if (mode == TaskMode::kMultitask) {
        throw InvalidParameter("multitask targets cannot be read from single-label records");
    }
    const auto train_rows = data.indices(DistTag::kId, SplitTag::kTrain);
    const auto val_rows = data.indices(DistTag::kId, SplitTag::kVal);
    if (train_rows.empty()) {
        throw CapacityError(std::string(purpose) + " needs ID records in the train split");
    }
    auto require_labels = [&](const std::vector<std::size_t>& rows, const char* split) {
        for (std::size_t r : rows) {
            if (!data.records()[r].label) {
                throw SchemaError(std::string(purpose) + " requires supervised labels; ID " + split +
                                  " record '" + data.records()[r].id + "' has none");
            }
        }
    };
    require_labels(train_rows, "train");
    require_labels(val_rows, "val");

    PreparedLabels p;
    std::vector<double> train_labels;
    for (std::size_t r : train_rows) train_labels.push_back(*data.records()[r].label);

    if (mode == TaskMode::kBinary) {
        const bool already_binary = std::all_of(train_labels.begin(), train_labels.end(), is_binary_value) &&
                                    std::all_of(val_rows.begin(), val_rows.end(), [&](std::size_t r) {
                                        return is_binary_value(*data.records()[r].label);
                                    });
        if (!already_binary) p.threshold = median(train_labels);
        p.num_outputs = 1;
    } else {
        double max_class = 0.0;
        for (const auto* rows : {&train_rows, &val_rows}) {
            for (std::size_t r : *rows) {
                const double y = *data.records()[r].label;
                if (y < 0.0 || y != std::floor(y)) {
                    throw SchemaError(std::string(purpose) + ": multiclass label of '" +
                                      data.records()[r].id + "' is not a class index");
                }
                max_class = std::max(max_class, y);
            }
        }
        p.num_outputs = static_cast<std::size_t>(max_class) + 1;
    }
    p.train = rows_with_targets(data, train_rows, mode, p.threshold);
    p.val = rows_with_targets(data, val_rows, mode, p.threshold);
    for (std::size_t i = 0; i < p.train.targets.rows(); ++i) {
        p.train_classes.push_back(static_cast<int>(p.train.targets(i, 0)));
    }
    return p;
}

double classification_loss(const Matrix& logits, const Matrix& targets, TaskMode mode, Matrix* grad) {
    const std::size_t n = logits.rows();
    const std::size_t c = logits.cols();
    if (targets.rows() != n) throw ShapeError("targets and logits disagree on the row count");
    if (mode != TaskMode::kMulticlass && targets.cols() != c) {
        throw ShapeError("need one target column per output");
    }
    if (grad) *grad = Matrix(n, c);
    double total = 0.0;
    if (mode == TaskMode::kMulticlass) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto z = logits.row(i);
            const auto y = static_cast<std::size_t>(targets(i, 0));
            if (y >= c) throw ShapeError("class index out of range");
            const double lse = logsumexp(z);
            total += lse - z[y];
            if (grad) {
                for (std::size_t j = 0; j < c; ++j) {
                    (*grad)(i, j) = (std::exp(z[j] - lse) - (j == y ? 1.0 : 0.0)) / static_cast<double>(n);
                }
            }
        }
        return total / static_cast<double>(n);
    }
    const double denom = static_cast<double>(n * c);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            const double z = logits(i, j);
            const double y = targets(i, j);
            total += log1pexp(z) - y * z;
            if (grad) (*grad)(i, j) = (sigmoid(z) - y) / denom;
        }
    }
    return total / denom;
}

ClassifierHead train_classifier(const LabeledFeatures& train, const LabeledFeatures& val,
                                std::size_t num_outputs, const ClassifierConfig& cfg) {
    cfg.validate();
    if (train.x.rows() == 0) throw EmptySetError("classifier training set is empty");
    HeadConfig hc;
    hc.layer_dims = {train.x.cols()};
    hc.layer_dims.insert(hc.layer_dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    hc.layer_dims.push_back(num_outputs);
    hc.dropout = 0.0;

    Rng master(cfg.seed);
    ClassifierHead clf;
    clf.mode = cfg.mode;
    clf.net = Mlp(hc, master.next_u64());
    Rng batch_rng = master.split();

    OptimizerConfig oc;
    oc.lr = cfg.lr;
    oc.weight_decay = cfg.weight_decay;
    oc.decoupled_weight_decay = false;
    oc.clip_norm = 0.0;
    oc.gamma = 1.0;
    OptimizerState opt(oc, clf.net.parameter_count());

    const bool has_val = val.x.rows() > 0;
    const LabeledFeatures& monitor = has_val ? val : train;
    Mlp net = clf.net;
    net.set_training(true);
    clf.best_val_loss = classification_loss(net.predict(monitor.x), monitor.targets, cfg.mode);
    std::size_t since_best = 0;

    std::vector<std::size_t> order(train.x.rows());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        batch_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const std::span<const std::size_t> rows(order.data() + start, end - start);
            ForwardCache cache;
            const Matrix logits = net.forward(train.x.gather_rows(rows), &cache);
            Matrix grad;
            classification_loss(logits, train.targets.gather_rows(rows), cfg.mode, &grad);
            apply_update(net, opt, net.backward(cache, grad).grads);
        }
        opt.end_epoch();
        clf.epochs_run = epoch;
        const double loss = classification_loss(net.predict(monitor.x), monitor.targets, cfg.mode);
        if (!std::isfinite(loss)) throw NumericError("classifier loss became non-finite");
        if (loss < clf.best_val_loss) {
            clf.best_val_loss = loss;
            clf.best_epoch = epoch;
            clf.net = net;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    clf.net.set_training(false);
    return clf;
}

ClassifierHead train_classifier(const EmbeddingSet& data, const ClassifierConfig& cfg) {
    const PreparedLabels p = prepare_labels(data, cfg.mode);
    ClassifierHead clf = train_classifier(p.train, p.val, p.num_outputs, cfg);
    clf.threshold = p.threshold;
    return clf;
}

void save_classifier(const std::filesystem::path& path, const ClassifierHead& clf,
                     const ClassifierConfig& cfg) {
    json extra = {{"config", json::parse(cfg.to_json())},
                  {"best_epoch", clf.best_epoch},
                  {"epochs_run", clf.epochs_run},
                  {"best_val_loss", clf.best_val_loss}};
    extra["threshold"] = clf.threshold ? json(*clf.threshold) : json(nullptr);
    CheckpointMeta meta;
    meta.kind = "classifier";
    meta.epoch = clf.best_epoch;
    meta.lr = cfg.lr;
    meta.seed = cfg.seed;
    meta.extra_json = extra.dump();
    save_checkpoint(path, clf.net, meta);
}

ClassifierHead load_classifier(const std::filesystem::path& path, ClassifierConfig* cfg) {
    CheckpointMeta meta;
    ClassifierHead clf;
    clf.net = load_checkpoint(path, &meta);
    if (meta.kind != "classifier") {
        throw SchemaError(path.string() + " holds a '" + meta.kind + "' checkpoint, not a classifier");
    }
    try {
        const json extra = json::parse(meta.extra_json);
        const ClassifierConfig c = ClassifierConfig::from_json(extra.at("config").dump());
        clf.mode = c.mode;
        clf.best_epoch = extra.value("best_epoch", std::size_t{0});
        clf.epochs_run = extra.value("epochs_run", std::size_t{0});
        clf.best_val_loss = extra.value("best_val_loss", 0.0);
        if (extra.contains("threshold") && !extra["threshold"].is_null()) {
            clf.threshold = extra["threshold"].get<double>();
        }
        if (cfg) *cfg = c;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(path.string() + ": bad classifier metadata: " + e.what());
    }
    clf.net.set_training(false);
    return clf;
}

// ---------------------------------------------------------------------------

std::vector<double> confidence(const Matrix& logits, TaskMode mode) {
    std::vector<double> out(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const auto z = logits.row(i);
        switch (mode) {
            case TaskMode::kBinary: out[i] = binary_confidence(z[0]); break;
            case TaskMode::kMulticlass: out[i] = softmax_max(z); break;
            case TaskMode::kMultitask: {
                double s = 0.0;
                for (double v : z) s += binary_confidence(v);
                out[i] = s / static_cast<double>(z.size());
                break;
            }
        }
    }
    return out;
}

std::vector<double> score_msp(const ClassifierHead& clf, const Matrix& batch) {
    auto conf = confidence(clf.logits(batch), clf.mode);
    for (double& c : conf) c = 1.0 - c;
    return conf;
}

std::vector<double> score_odin(const ClassifierHead& clf, const Matrix& batch, double epsilon,
                               double temperature) {
    if (!(epsilon >= 0.0)) throw InvalidParameter("ODIN epsilon must be non-negative");
    if (!(temperature > 0.0)) throw InvalidParameter("ODIN temperature must be positive");
    Mlp net = clf.net;
    net.set_training(false);
    ForwardCache cache;
    const Matrix logits = net.forward(batch, &cache);

    // Cross-entropy of the tempered logits against the predicted class.
    Matrix grad(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const auto z = logits.row(i);
        if (clf.mode == TaskMode::kMulticlass) {
            std::vector<double> scaled(z.begin(), z.end());
            for (double& v : scaled) v /= temperature;
            const double lse = logsumexp(scaled);
            const std::size_t pred = argmax(z);
            for (std::size_t j = 0; j < z.size(); ++j) {
                grad(i, j) = (std::exp(scaled[j] - lse) - (j == pred ? 1.0 : 0.0)) / temperature;
            }
        } else {
            for (std::size_t j = 0; j < z.size(); ++j) {
                const double pred = z[j] >= 0.0 ? 1.0 : 0.0;
                grad(i, j) = (sigmoid(z[j] / temperature) - pred) / temperature;
            }
        }
    }
    const Matrix input_grad = net.backward(cache, grad).input_grad;
    Matrix perturbed = batch;
    for (std::size_t i = 0; i < perturbed.size(); ++i) {
        perturbed.data()[i] -= epsilon * sign(input_grad.data()[i]);
    }
    Matrix tempered = net.predict(perturbed);
    for (double& v : tempered.data()) v /= temperature;
    auto conf = confidence(tempered, clf.mode);
    for (double& c : conf) c = 1.0 - c;
    return conf;
}

std::vector<double> energy_from_logits(const Matrix& logits, TaskMode mode) {
    std::vector<double> out(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const auto z = logits.row(i);
        if (mode == TaskMode::kMulticlass) {
            out[i] = -logsumexp(z);
        } else {
            double s = 0.0;
            for (double v : z) {
                const double pair[2] = {v, -v};
                s += -logsumexp(pair);
            }
            out[i] = s / static_cast<double>(z.size());
        }
    }
    return out;
}

std::vector<double> score_energy(const ClassifierHead& clf, const Matrix& batch) {
    return energy_from_logits(clf.logits(batch), clf.mode);
}

// ---------------------------------------------------------------------------

std::string_view to_string(CovarianceEstimate e) {
    switch (e) {
        case CovarianceEstimate::kLedoitWolf: return "ledoit-wolf";
        case CovarianceEstimate::kEmpirical: return "empirical";
        case CovarianceEstimate::kRidge: return "ridge";
    }
    return "?";
}

double ledoit_wolf_shrinkage(const Matrix& centred) {
    const double n = static_cast<double>(centred.rows());
    const std::size_t p = centred.cols();
    if (centred.rows() == 0) throw EmptySetError("Ledoit-Wolf needs at least one row");
    Matrix s = matmul_at_b(centred, centred);
    for (double& v : s.data()) v /= n;
    const double mu = trace(s) / static_cast<double>(p);
    double fourth = 0.0;
    for (std::size_t r = 0; r < centred.rows(); ++r) {
        const double sq = dot(centred.row(r), centred.row(r));
        fourth += sq * sq;
    }
    const double s_fro = frobenius_sq(s);
    double delta = s_fro - 2.0 * mu * trace(s) + static_cast<double>(p) * mu * mu;
    delta /= static_cast<double>(p);
    double beta = (fourth / n - s_fro) / (static_cast<double>(p) * n);
    beta = std::min(beta, delta);
    if (beta <= 0.0 || delta <= 0.0) return 0.0;
    return beta / delta;
}

FeatureStats fit_feature_stats(const Matrix& features, const std::vector<int>& classes, bool shrink) {
    const std::size_t n = features.rows();
    const std::size_t d = features.cols();
    if (n == 0) throw EmptySetError("cannot fit feature statistics on zero rows");
    if (!classes.empty() && classes.size() != n) {
        throw ShapeError("one class label per feature row is required");
    }
    std::vector<int> labels = classes.empty() ? std::vector<int>(n, 0) : classes;
    std::vector<int> distinct = labels;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    FeatureStats st;
    st.means = Matrix(distinct.size(), d);
    std::vector<std::size_t> counts(distinct.size(), 0);
    std::vector<std::size_t> slot(n);
    for (std::size_t r = 0; r < n; ++r) {
        slot[r] = static_cast<std::size_t>(
            std::lower_bound(distinct.begin(), distinct.end(), labels[r]) - distinct.begin());
        ++counts[slot[r]];
        auto m = st.means.row(slot[r]);
        const auto x = features.row(r);
        for (std::size_t j = 0; j < d; ++j) m[j] += x[j];
    }
    for (std::size_t c = 0; c < distinct.size(); ++c) {
        for (double& v : st.means.row(c)) v /= static_cast<double>(counts[c]);
    }
    Matrix centred(n, d);
    for (std::size_t r = 0; r < n; ++r) {
        const auto x = features.row(r);
        const auto m = st.means.row(slot[r]);
        auto out = centred.row(r);
        for (std::size_t j = 0; j < d; ++j) out[j] = x[j] - m[j];
    }
    Matrix empirical = matmul_at_b(centred, centred);
    for (double& v : empirical.data()) v /= static_cast<double>(n);

    auto accept = [&](Matrix cov, CovarianceEstimate how) {
        Matrix lower;
        if (!cov.all_finite() || !cholesky(cov, lower)) return false;
        st.covariance = std::move(cov);
        st.cholesky = std::move(lower);
        st.precision = spd_inverse_from_cholesky(st.cholesky);
        st.estimate = how;
        return true;
    };

    if (shrink) {
        const double s = ledoit_wolf_shrinkage(centred);
        const double mu = trace(empirical) / static_cast<double>(d);
        Matrix shrunk = (1.0 - s) * empirical;
        for (std::size_t j = 0; j < d; ++j) shrunk(j, j) += s * mu;
        if (accept(std::move(shrunk), CovarianceEstimate::kLedoitWolf)) {
            st.shrinkage = s;
            return st;
        }
    }
    if (accept(empirical, CovarianceEstimate::kEmpirical)) return st;

    const double tr = trace(empirical);
    const double ridge = tr > 0.0 ? 1e-6 * tr / static_cast<double>(d) : 1e-6;
    spdlog::warn("covariance is not positive definite; adding a ridge of {:g}", ridge);
    Matrix ridged = empirical;
    for (std::size_t j = 0; j < d; ++j) ridged(j, j) += ridge;
    if (accept(std::move(ridged), CovarianceEstimate::kRidge)) return st;
    throw NumericError("covariance stays singular after the ridge fallback");
}

std::vector<double> score_mahalanobis(const FeatureStats& stats, const Matrix& batch) {
    const std::size_t d = stats.means.cols();
    if (batch.cols() != d) {
        throw ShapeError("query dim " + std::to_string(batch.cols()) + " != fitted dim " +
                         std::to_string(d));
    }
    std::vector<double> out(batch.rows());
    std::vector<double> diff(d);
    for (std::size_t i = 0; i < batch.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < stats.means.rows(); ++c) {
            const auto x = batch.row(i);
            const auto m = stats.means.row(c);
            for (std::size_t j = 0; j < d; ++j) diff[j] = x[j] - m[j];
            forward_substitute(stats.cholesky, diff);
            best = std::min(best, dot(diff, diff));
        }
        out[i] = std::sqrt(best);
    }
    return out;
}

// ---------------------------------------------------------------------------

Standardizer Standardizer::fit(const Matrix& train) {
    if (train.rows() == 0) throw EmptySetError("cannot standardize with zero rows");
    Standardizer s;
    s.mean = column_means(train);
    s.scale.assign(train.cols(), 0.0);
    for (std::size_t r = 0; r < train.rows(); ++r) {
        const auto x = train.row(r);
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double dv = x[j] - s.mean[j];
            s.scale[j] += dv * dv;
        }
    }
    for (double& v : s.scale) {
        v = std::sqrt(v / static_cast<double>(train.rows()));
        if (v == 0.0) v = 1.0;
    }
    return s;
}

Matrix Standardizer::apply(const Matrix& x) const {
    if (x.cols() != mean.size()) throw ShapeError("standardizer fitted on a different dim");
    Matrix out = x;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean[j]) / scale[j];
    }
    return out;
}

std::vector<double> score_knn(const Matrix& train, const Matrix& batch, std::size_t k) {
    check_neighbors(train, batch, k, train.rows(), "k");
    std::vector<double> out(batch.rows());
    for (std::size_t i = 0; i < batch.rows(); ++i) {
        double s = 0.0;
        for (const auto& nb : nearest(train, batch.row(i), k)) s += nb.dist;
        out[i] = s / static_cast<double>(k);
    }
    return out;
}

std::vector<double> score_lof(const Matrix& train, const Matrix& batch, std::size_t n_neighbors) {
    const std::size_t n = train.rows();
    check_neighbors(train, batch, n_neighbors, n == 0 ? 0 : n - 1, "n_neighbors");
    const std::size_t k = n_neighbors;
    constexpr double kDensityFloor = 1e-10;

    std::vector<std::vector<Neighbor>> train_nb(n);
    std::vector<double> k_distance(n);
    for (std::size_t r = 0; r < n; ++r) {
        train_nb[r] = nearest(train, train.row(r), k, r);
        k_distance[r] = train_nb[r].back().dist;
    }
    auto density = [&](const std::vector<Neighbor>& nbs) {
        double reach = 0.0;
        for (const auto& nb : nbs) reach += std::max(nb.dist, k_distance[nb.index]);
        return 1.0 / (reach / static_cast<double>(nbs.size()) + kDensityFloor);
    };
    std::vector<double> train_density(n);
    for (std::size_t r = 0; r < n; ++r) train_density[r] = density(train_nb[r]);

    std::vector<double> out(batch.rows());
    for (std::size_t i = 0; i < batch.rows(); ++i) {
        const auto nbs = nearest(train, batch.row(i), k);
        const double own = density(nbs);
        double ratio = 0.0;
        for (const auto& nb : nbs) ratio += train_density[nb.index];
        out[i] = ratio / static_cast<double>(k) / own;
    }
    return out;
}

}  // namespace molepair
