#pragma once

#include "nigcast/diffkit.hpp"
#include "nigcast/errors.hpp"
#include "nigcast/losses.hpp"
#include "nigcast/model.hpp"
#include "nigcast/params.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace nigcast {

/// Scales all gradients by max_norm / g when the global L2 norm g exceeds max_norm.
/// Returns the norm before clipping.
double clip_gradients(std::vector<diff::Tensor>& grads, double max_norm);

double global_norm(const std::vector<diff::Tensor>& grads);

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.001;
};

struct OptimState {
    std::vector<diff::Tensor> first_moment;
    std::vector<diff::Tensor> second_moment;
    std::uint64_t step = 0;
};

/// Bias-corrected Adam step with decoupled weight decay:
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta
void adamw_step(OptimState& state, std::vector<diff::Tensor>& params, const std::vector<diff::Tensor>& grads,
                double lr, const AdamWConfig& cfg);

/// base * min(1, t / warmup) * (1 + cos(pi t / total)) / 2
double lr_at(std::uint64_t t, std::uint64_t total_steps, std::uint64_t warmup_steps, double base_lr);

/// min(1, t / anneal_steps)
double evidence_scale(std::uint64_t t, std::uint64_t anneal_steps);

struct TrainConfig {
    double learning_rate = 0.001;
    std::size_t batch_size = 128;
    std::size_t max_epochs = 50;
    std::size_t patience = 10;
    double clip_max_norm = 1.0;
    double weight_decay = 0.001;
    double warmup_fraction = 0.1;
    double anneal_fraction = 0.15;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    CombinedLossWeights loss_weights;
    LossOptions loss_options;
    // Add lambda_wd * ||theta||^2 to the evidential objective on top of the
    // optimizer's decoupled decay.
    bool l2_in_loss = false;
};

void validate(const TrainConfig& cfg);

/// Model inputs [N x lookback x input_dim] with one target per row.
struct SampleSet {
    diff::Tensor inputs;
    std::vector<double> targets;

    std::size_t size() const noexcept { return targets.size(); }
    SampleSet subset(const std::vector<std::size_t>& rows) const;
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::vector<double> learning_rate;   // at the last step of the epoch
    std::vector<double> evidence_scale;  // at the last step of the epoch
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    std::uint64_t total_steps = 0;
};

struct TrainResult {
    ParameterSet best_params;
    TrainHistory history;
};

/// Non-finite loss or gradient during training.
class TrainingError : public NumericError {
public:
    using NumericError::NumericError;
};

struct BatchLoss {
    diff::Var total;
    double nll = 0.0;
    double reg = 0.0;
    double coverage = 0.0;
};

/// The objective the trainer minimizes for the head's method.
BatchLoss method_loss(const ModelSpec& spec, diff::Var raw, diff::Var y, const TrainConfig& cfg, double ev_scale,
                      std::span<const diff::Var> wd_params, CoverageMode mode);

/// Sample-weighted validation loss: no dropout, hard coverage, evidence scale 1.
double validation_loss(const ModelSpec& spec, const ParameterSet& params, const SampleSet& data,
                       const TrainConfig& cfg);

TrainResult train(const ModelSpec& spec, const SampleSet& train_set, const SampleSet& val_set,
                  const TrainConfig& cfg);
TrainResult train(const ModelSpec& spec, ParameterSet init, const SampleSet& train_set, const SampleSet& val_set,
                  const TrainConfig& cfg);

}  // namespace nigcast
