#pragma once

// Trainable MLP heads on top of frozen embeddings: the scalar scoring head
// used by the pairwise objective, and the general multi-output network that
// backs the supervised baseline classifier.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "molepair/numerics.hpp"

namespace molepair {

enum class Activation { kRelu };

struct HeadConfig {
    std::vector<std::size_t> layer_dims{512, 256, 128, 1};
    double dropout = 0.1;
    Activation activation = Activation::kRelu;

    /// Throws InvalidParameter on fewer than two dims, zero dims, or dropout outside [0, 1).
    void validate() const;
    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t output_dim() const { return layer_dims.back(); }
};

struct DenseLayer {
    Matrix weight;              // out x in
    std::vector<double> bias;   // out

    bool operator==(const DenseLayer&) const = default;
};

/// Gradients with the same layout as the network parameters.
struct ParamGrads {
    std::vector<DenseLayer> layers;

    double squared_norm() const;
    bool all_finite() const;
    void scale(double factor);
};

/// Everything backward() needs from one forward pass.
struct ForwardCache {
    std::uint64_t param_version = 0;
    std::uint64_t net_id = 0;
    // layer_inputs[l] is the (post-activation, post-dropout) input to layer l.
    std::vector<Matrix> layer_inputs;
    // ReLU derivative times dropout scale for each hidden layer output.
    std::vector<Matrix> hidden_gates;
};

struct BackwardResult {
    ParamGrads grads;
    Matrix input_grad;  // dL/dinput, n x input_dim
};

/// Fully connected ReLU network with inverted dropout on hidden activations.
class Mlp {
public:
    Mlp() = default;
    /// Uniform Glorot initialization (+-sqrt(6 / (fan_in + fan_out))), zero biases.
    Mlp(HeadConfig config, std::uint64_t seed);

    const HeadConfig& config() const noexcept { return config_; }
    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
    /// Mutable access bumps the parameter version, invalidating outstanding caches.
    std::vector<DenseLayer>& mutable_layers() noexcept;

    bool training() const noexcept { return training_; }
    void set_training(bool on) noexcept { training_ = on; }

    Rng& dropout_rng() noexcept { return rng_; }
    const Rng& dropout_rng() const noexcept { return rng_; }

    std::size_t parameter_count() const;
    std::vector<double> flat_parameters() const;
    void set_flat_parameters(const std::vector<double>& flat);
    std::vector<double> flatten(const ParamGrads& grads) const;

    /// n x output_dim outputs. Draws dropout masks from the internal RNG in training mode.
    Matrix forward(const Matrix& batch, ForwardCache* cache = nullptr);
    /// Eval-mode forward that never touches the RNG; safe to call concurrently.
    Matrix predict(const Matrix& batch) const;
    /// Eval-mode activations entering the final linear layer.
    Matrix penultimate(const Matrix& batch) const;

    /// Exact gradients of the composed function for the masks recorded in `cache`.
    BackwardResult backward(const ForwardCache& cache, const Matrix& output_grad) const;

    ParamGrads zero_grads() const;

    bool operator==(const Mlp& other) const {
        return config_.layer_dims == other.config_.layer_dims &&
               config_.dropout == other.config_.dropout && layers_ == other.layers_;
    }

private:
    Matrix forward_impl(const Matrix& batch, Rng* dropout, ForwardCache* cache,
                        std::size_t stop_before_layer) const;
    void check_input(const Matrix& batch) const;

    HeadConfig config_;
    std::vector<DenseLayer> layers_;
    bool training_ = false;
    Rng rng_;
    std::uint64_t version_ = 0;
    std::uint64_t id_ = 0;
};

/// The scalar OOD-affinity head E(x). Output dim must be 1.
class ScoringHead {
public:
    ScoringHead() = default;
    ScoringHead(HeadConfig config, std::uint64_t seed);
    explicit ScoringHead(Mlp net);

    Mlp& net() noexcept { return net_; }
    const Mlp& net() const noexcept { return net_; }
    const HeadConfig& config() const noexcept { return net_.config(); }

    void set_training(bool on) noexcept { net_.set_training(on); }
    bool training() const noexcept { return net_.training(); }

    std::vector<double> forward(const Matrix& batch, ForwardCache* cache = nullptr);
    /// Eval-mode scores; pure.
    std::vector<double> score(const Matrix& batch) const;
    BackwardResult backward(const ForwardCache& cache, const std::vector<double>& score_grad) const;

    bool operator==(const ScoringHead& other) const { return net_ == other.net_; }

private:
    Mlp net_;
};

struct OptimizerConfig {
    double lr = 1e-4;
    double weight_decay = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 1.0;   // <= 0 disables clipping
    bool decoupled_weight_decay = true;  // AdamW; false = Adam with L2 added to the gradient
    std::size_t step_size = 10;          // epochs between lr decays
    double gamma = 0.9;

    void validate() const;
};

struct OptimizerState {
    OptimizerConfig config;
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::uint64_t step = 0;
    std::size_t epoch = 0;
    double lr = 0.0;

    OptimizerState() = default;
    OptimizerState(OptimizerConfig cfg, std::size_t parameter_count);

    /// Step-decay schedule: multiplies lr by gamma after every `step_size` epochs.
    void end_epoch();
};

struct UpdateInfo {
    double grad_norm = 0.0;       // before clipping
    double applied_norm = 0.0;    // after clipping
};

/// Global-norm clipping, then one Adam/AdamW step. Throws NumericError (and leaves
/// both `net` and `opt` untouched) if any gradient is non-finite.
UpdateInfo apply_update(Mlp& net, OptimizerState& opt, ParamGrads grads);

/// Scales `grads` so that its global L2 norm is at most `max_norm`; returns the original norm.
double clip_global_norm(ParamGrads& grads, double max_norm);

struct CheckpointMeta {
    std::size_t epoch = 0;
    double lr = 0.0;
    std::uint64_t seed = 0;
    std::string kind = "scoring_head";
    std::string extra_json = "{}";  // free-form JSON object stored alongside
};

// "MPCK", u32 version, u64 header length, JSON header, float64 LE parameters.
std::string encode_checkpoint(const Mlp& net, const CheckpointMeta& meta);
void save_checkpoint(const std::filesystem::path& path, const Mlp& net, const CheckpointMeta& meta);
Mlp decode_checkpoint(std::string_view bytes, CheckpointMeta* meta = nullptr);
Mlp load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

std::string head_config_to_json(const HeadConfig& cfg);

}  // namespace molepair
