#include "molepair/head.hpp"

#include <atomic>
#include <bit>
#include <cstring>

#include <nlohmann/json.hpp>

#include "molepair/data.hpp"

namespace molepair {

namespace {

using json = nlohmann::json;

constexpr char kCheckpointMagic[4] = {'M', 'P', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::uint64_t next_net_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
}

template <typename Visit>
void for_each_param(std::vector<DenseLayer>& params, const ParamGrads& grads, Visit&& visit) {
    std::size_t flat = 0;
    for (std::size_t l = 0; l < params.size(); ++l) {
        auto& w = params[l].weight.data();
        const auto& gw = grads.layers[l].weight.data();
        for (std::size_t i = 0; i < w.size(); ++i) visit(flat++, w[i], gw[i]);
        auto& b = params[l].bias;
        const auto& gb = grads.layers[l].bias;
        for (std::size_t i = 0; i < b.size(); ++i) visit(flat++, b[i], gb[i]);
    }
}

}  // namespace

void HeadConfig::validate() const {
    if (layer_dims.size() < 2) {
        throw InvalidParameter("head needs at least an input and an output dim");
    }
    for (std::size_t d : layer_dims) {
        if (d == 0) throw InvalidParameter("head layer dims must be positive");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw InvalidParameter("dropout rate must lie in [0, 1), got " + std::to_string(dropout));
    }
}

double ParamGrads::squared_norm() const {
    double s = 0.0;
    for (const auto& l : layers) {
        s += frobenius_sq(l.weight);
        for (double b : l.bias) s += b * b;
    }
    return s;
}

bool ParamGrads::all_finite() const {
    for (const auto& l : layers) {
        if (!l.weight.all_finite()) return false;
        for (double b : l.bias) {
            if (!std::isfinite(b)) return false;
        }
    }
    return true;
}

void ParamGrads::scale(double factor) {
    for (auto& l : layers) {
        for (double& w : l.weight.data()) w *= factor;
        for (double& b : l.bias) b *= factor;
    }
}

// ---------------------------------------------------------------------------

Mlp::Mlp(HeadConfig config, std::uint64_t seed)
    : config_(std::move(config)), rng_(seed), id_(next_net_id()) {
    config_.validate();
    // Initialization draws from its own stream so dropout masks do not depend on it.
    Rng init = rng_.split();
    for (std::size_t l = 0; l + 1 < config_.layer_dims.size(); ++l) {
        const std::size_t fan_in = config_.layer_dims[l];
        const std::size_t fan_out = config_.layer_dims[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        DenseLayer layer{Matrix(fan_out, fan_in), std::vector<double>(fan_out, 0.0)};
        for (double& w : layer.weight.data()) {
            w = init.uniform_real(-limit, limit);
        }
        layers_.push_back(std::move(layer));
    }
}

std::vector<DenseLayer>& Mlp::mutable_layers() noexcept {
    ++version_;
    return layers_;
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
}

std::vector<double> Mlp::flat_parameters() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const auto& l : layers_) {
        flat.insert(flat.end(), l.weight.data().begin(), l.weight.data().end());
        flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    }
    return flat;
}

void Mlp::set_flat_parameters(const std::vector<double>& flat) {
    if (flat.size() != parameter_count()) {
        throw ShapeError("parameter vector has " + std::to_string(flat.size()) +
                         " entries, network has " + std::to_string(parameter_count()));
    }
    ++version_;
    std::size_t k = 0;
    for (auto& l : layers_) {
        for (double& w : l.weight.data()) w = flat[k++];
        for (double& b : l.bias) b = flat[k++];
    }
}

std::vector<double> Mlp::flatten(const ParamGrads& grads) const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const auto& l : grads.layers) {
        flat.insert(flat.end(), l.weight.data().begin(), l.weight.data().end());
        flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    }
    return flat;
}

ParamGrads Mlp::zero_grads() const {
    ParamGrads g;
    for (const auto& l : layers_) {
        g.layers.push_back({Matrix(l.weight.rows(), l.weight.cols()),
                            std::vector<double>(l.bias.size(), 0.0)});
    }
    return g;
}

void Mlp::check_input(const Matrix& batch) const {
    if (layers_.empty()) {
        throw ContractError("network has no layers");
    }
    if (batch.cols() != config_.input_dim()) {
        throw ShapeError("head expects input dim " + std::to_string(config_.input_dim()) +
                         ", got " + std::to_string(batch.cols()));
    }
}

Matrix Mlp::forward_impl(const Matrix& batch, Rng* dropout, ForwardCache* cache,
                         std::size_t stop_before_layer) const {
    check_input(batch);
    if (cache) {
        cache->param_version = version_;
        cache->net_id = id_;
        cache->layer_inputs.clear();
        cache->hidden_gates.clear();
    }
    const double p = config_.dropout;
    const double keep_scale = 1.0 / (1.0 - p);
    Matrix x = batch;
    for (std::size_t l = 0; l < stop_before_layer; ++l) {
        const auto& layer = layers_[l];
        Matrix z = matmul_a_bt(x, layer.weight);
        add_row_vector(z, layer.bias);
        if (cache) cache->layer_inputs.push_back(std::move(x));
        if (l + 1 == layers_.size()) {
            return z;
        }
        Matrix gate(z.rows(), z.cols());
        for (std::size_t i = 0; i < z.size(); ++i) {
            double& v = z.data()[i];
            double g = v > 0.0 ? 1.0 : 0.0;
            if (dropout != nullptr && p > 0.0) {
                g *= dropout->uniform_real() < p ? 0.0 : keep_scale;
            }
            v = v > 0.0 ? v * g : 0.0;
            gate.data()[i] = g;
        }
        if (cache) cache->hidden_gates.push_back(std::move(gate));
        x = std::move(z);
    }
    return x;
}

Matrix Mlp::forward(const Matrix& batch, ForwardCache* cache) {
    Matrix out = forward_impl(batch, training_ ? &rng_ : nullptr, cache, layers_.size());
    if (!out.all_finite()) {
        throw NumericError("head produced a non-finite output");
    }
    return out;
}

Matrix Mlp::predict(const Matrix& batch) const {
    return forward_impl(batch, nullptr, nullptr, layers_.size());
}

Matrix Mlp::penultimate(const Matrix& batch) const {
    return forward_impl(batch, nullptr, nullptr, layers_.size() - 1);
}

BackwardResult Mlp::backward(const ForwardCache& cache, const Matrix& output_grad) const {
    if (cache.net_id != id_ || cache.param_version != version_ ||
        cache.layer_inputs.size() != layers_.size()) {
        throw ContractError("stale or foreign forward cache passed to backward");
    }
    const std::size_t n = cache.layer_inputs.front().rows();
    if (output_grad.rows() != n || output_grad.cols() != config_.output_dim()) {
        throw ShapeError("output gradient must be " + std::to_string(n) + "x" +
                         std::to_string(config_.output_dim()));
    }
    BackwardResult result;
    result.grads.layers.resize(layers_.size());
    Matrix g = output_grad;
    for (std::size_t li = layers_.size(); li > 0; --li) {
        const std::size_t l = li - 1;
        result.grads.layers[l].weight = matmul_at_b(g, cache.layer_inputs[l]);
        result.grads.layers[l].bias = column_sums(g);
        Matrix dx = matmul(g, layers_[l].weight);
        if (l > 0) {
            const Matrix& gate = cache.hidden_gates[l - 1];
            for (std::size_t i = 0; i < dx.size(); ++i) dx.data()[i] *= gate.data()[i];
        }
        g = std::move(dx);
    }
    result.input_grad = std::move(g);
    return result;
}

// ---------------------------------------------------------------------------

ScoringHead::ScoringHead(HeadConfig config, std::uint64_t seed) : net_(std::move(config), seed) {
    if (net_.config().output_dim() != 1) {
        throw InvalidParameter("scoring head must end in a single output");
    }
}

ScoringHead::ScoringHead(Mlp net) : net_(std::move(net)) {
    if (net_.config().output_dim() != 1) {
        throw InvalidParameter("scoring head must end in a single output");
    }
}

std::vector<double> ScoringHead::forward(const Matrix& batch, ForwardCache* cache) {
    return net_.forward(batch, cache).data();
}

std::vector<double> ScoringHead::score(const Matrix& batch) const {
    return net_.predict(batch).data();
}

BackwardResult ScoringHead::backward(const ForwardCache& cache,
                                     const std::vector<double>& score_grad) const {
    return net_.backward(cache, Matrix(score_grad.size(), 1, score_grad));
}

// ---------------------------------------------------------------------------

void OptimizerConfig::validate() const {
    if (!(lr > 0.0)) throw InvalidParameter("learning rate must be positive");
    if (!(weight_decay >= 0.0)) throw InvalidParameter("weight decay must be non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw InvalidParameter("moment constants must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw InvalidParameter("eps must be positive");
    if (step_size == 0) throw InvalidParameter("scheduler step size must be positive");
    if (!(gamma > 0.0)) throw InvalidParameter("scheduler gamma must be positive");
}

OptimizerState::OptimizerState(OptimizerConfig cfg, std::size_t parameter_count)
    : config(cfg),
      first_moment(parameter_count, 0.0),
      second_moment(parameter_count, 0.0),
      lr(cfg.lr) {
    config.validate();
}

void OptimizerState::end_epoch() {
    ++epoch;
    if (epoch % config.step_size == 0) {
        lr *= config.gamma;
    }
}

double clip_global_norm(ParamGrads& grads, double max_norm) {
    const double norm = std::sqrt(grads.squared_norm());
    if (max_norm > 0.0 && norm > max_norm) {
        grads.scale(max_norm / norm);
    }
    return norm;
}

UpdateInfo apply_update(Mlp& net, OptimizerState& opt, ParamGrads grads) {
    if (opt.first_moment.size() != net.parameter_count()) {
        throw ShapeError("optimizer state does not match the network's parameter count");
    }
    if (grads.layers.size() != net.layers().size()) {
        throw ShapeError("gradient layout does not match the network");
    }
    for (std::size_t l = 0; l < grads.layers.size(); ++l) {
        const auto& g = grads.layers[l];
        const auto& p = net.layers()[l];
        if (g.weight.rows() != p.weight.rows() || g.weight.cols() != p.weight.cols() ||
            g.bias.size() != p.bias.size()) {
            throw ShapeError("gradient shape mismatch at layer " + std::to_string(l));
        }
    }
    if (!grads.all_finite()) {
        throw NumericError("non-finite gradient; update skipped");
    }

    UpdateInfo info;
    info.grad_norm = clip_global_norm(grads, opt.config.clip_norm);
    info.applied_norm = std::sqrt(grads.squared_norm());

    const auto& c = opt.config;
    ++opt.step;
    const double t = static_cast<double>(opt.step);
    const double bias1 = 1.0 - std::pow(c.beta1, t);
    const double bias2 = 1.0 - std::pow(c.beta2, t);
    const double lr = opt.lr;
    for_each_param(net.mutable_layers(), grads, [&](std::size_t k, double& param, double grad) {
        if (!c.decoupled_weight_decay) {
            grad += c.weight_decay * param;
        } else {
            param -= lr * c.weight_decay * param;
        }
        double& m = opt.first_moment[k];
        double& v = opt.second_moment[k];
        m = c.beta1 * m + (1.0 - c.beta1) * grad;
        v = c.beta2 * v + (1.0 - c.beta2) * grad * grad;
        const double m_hat = m / bias1;
        const double v_hat = v / bias2;
        param -= lr * m_hat / (std::sqrt(v_hat) + c.eps);
    });
    return info;
}

// ---------------------------------------------------------------------------

std::string head_config_to_json(const HeadConfig& cfg) {
    json j = {{"layer_dims", cfg.layer_dims}, {"dropout", cfg.dropout}, {"activation", "relu"}};
    return j.dump();
}

std::string encode_checkpoint(const Mlp& net, const CheckpointMeta& meta) {
    json extra = json::parse(meta.extra_json.empty() ? "{}" : meta.extra_json);
    const json header = {
        {"kind", meta.kind},
        {"config", json::parse(head_config_to_json(net.config()))},
        {"epoch", meta.epoch},
        {"lr", meta.lr},
        {"seed", meta.seed},
        {"param_count", net.parameter_count()},
        {"extra", extra},
    };
    const std::string header_text = header.dump();
    std::string out(kCheckpointMagic, 4);
    auto put = [&out](std::uint64_t v, int bytes) {
        for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    };
    put(kCheckpointVersion, 4);
    put(header_text.size(), 8);
    out += header_text;
    for (double v : net.flat_parameters()) {
        put(std::bit_cast<std::uint64_t>(v), 8);
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const Mlp& net,
                     const CheckpointMeta& meta) {
    write_file(path, encode_checkpoint(net, meta));
}

Mlp decode_checkpoint(std::string_view bytes, CheckpointMeta* meta) {
    auto get = [&bytes](std::size_t offset, int n) {
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
        }
        return v;
    };
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
        throw FormatError("not a checkpoint file (bad magic)");
    }
    if (get(4, 4) != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version");
    }
    const std::uint64_t header_len = get(8, 8);
    if (bytes.size() < 16 + header_len) {
        throw IoError("truncated checkpoint header");
    }
    json header;
    try {
        header = json::parse(bytes.substr(16, header_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint header: ") + e.what());
    }
    HeadConfig cfg;
    cfg.layer_dims = header.at("config").at("layer_dims").get<std::vector<std::size_t>>();
    cfg.dropout = header.at("config").at("dropout").get<double>();
    Mlp net(cfg, header.value("seed", std::uint64_t{0}));
    const std::size_t count = header.at("param_count").get<std::size_t>();
    if (count != net.parameter_count()) {
        throw FormatError("checkpoint parameter count disagrees with its config");
    }
    const std::size_t payload_offset = 16 + header_len;
    if (bytes.size() != payload_offset + 8 * count) {
        throw IoError("checkpoint payload has the wrong length");
    }
    std::vector<double> flat(count);
    for (std::size_t i = 0; i < count; ++i) {
        flat[i] = std::bit_cast<double>(get(payload_offset + 8 * i, 8));
    }
    net.set_flat_parameters(flat);
    if (meta) {
        meta->epoch = header.value("epoch", std::size_t{0});
        meta->lr = header.value("lr", 0.0);
        meta->seed = header.value("seed", std::uint64_t{0});
        meta->kind = header.value("kind", std::string("scoring_head"));
        meta->extra_json = header.contains("extra") ? header["extra"].dump() : "{}";
    }
    return net;
}

Mlp load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
    return decode_checkpoint(read_file(path), meta);
}

}  // namespace molepair
