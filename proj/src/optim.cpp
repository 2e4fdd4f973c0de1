#include "nigcast/optim.hpp"

#include "nigcast/random.hpp"
#include "nigcast/special.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace nigcast {

using diff::Tensor;
using diff::Var;

double global_norm(const std::vector<Tensor>& grads) {
    double s = 0.0;
    for (const auto& g : grads) {
        for (double v : g.values()) s += v * v;
    }
    return std::sqrt(s);
}

double clip_gradients(std::vector<Tensor>& grads, double max_norm) {
    if (!(max_norm > 0.0)) throw ContractError("clip_gradients: max_norm must be positive");
    const double norm = global_norm(grads);
    if (norm > max_norm) {
        const double f = max_norm / norm;
        for (auto& g : grads) {
            for (auto& v : g.values()) v *= f;
        }
    }
    return norm;
}

void adamw_step(OptimState& state, std::vector<Tensor>& params, const std::vector<Tensor>& grads, double lr,
                const AdamWConfig& cfg) {
    if (params.size() != grads.size()) throw ContractError("adamw_step: parameter/gradient count mismatch");
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.shape(), 0.0);
            state.second_moment.emplace_back(p.shape(), 0.0);
        }
    }
    if (state.first_moment.size() != params.size()) throw ContractError("adamw_step: optimizer state mismatch");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (!params[k].same_shape(grads[k])) throw ContractError("adamw_step: gradient shape mismatch");
        auto& p = params[k].values();
        const auto& g = grads[k].values();
        auto& m = state.first_moment[k].values();
        auto& v = state.second_moment[k].values();
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            p[i] = p[i] - lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon) - lr * cfg.weight_decay * p[i];
        }
    }
}

double lr_at(std::uint64_t t, std::uint64_t total_steps, std::uint64_t warmup_steps, double base_lr) {
    if (total_steps == 0) throw ContractError("lr_at: total_steps must be positive");
    if (t > total_steps) throw ContractError("lr_at: step beyond the schedule");
    const double warm =
        warmup_steps == 0 ? 1.0 : std::min(1.0, static_cast<double>(t) / static_cast<double>(warmup_steps));
    const double cosine = 0.5 * (1.0 + std::cos(special::kPi * static_cast<double>(t) / static_cast<double>(total_steps)));
    return base_lr * warm * cosine;
}

double evidence_scale(std::uint64_t t, std::uint64_t anneal_steps) {
    if (anneal_steps == 0) throw ContractError("evidence_scale: anneal_steps must be positive");
    return std::min(1.0, static_cast<double>(t) / static_cast<double>(anneal_steps));
}

void validate(const TrainConfig& cfg) {
    if (!(cfg.learning_rate >= 0.0)) throw ConfigError("learning_rate must be nonnegative");
    if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");
    if (cfg.max_epochs == 0) throw ConfigError("max_epochs must be positive");
    if (cfg.patience == 0) throw ConfigError("patience must be positive");
    if (!(cfg.clip_max_norm > 0.0)) throw ConfigError("gradient clipping max norm must be positive");
    if (!(cfg.weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
    if (!(cfg.warmup_fraction > 0.0 && cfg.warmup_fraction <= 1.0)) throw ConfigError("warmup_fraction must lie in (0, 1]");
    if (!(cfg.anneal_fraction > 0.0 && cfg.anneal_fraction <= 1.0)) throw ConfigError("anneal_fraction must lie in (0, 1]");
    const auto& w = cfg.loss_weights;
    if (w.lambda_evd < 0.0 || w.lambda_coverage < 0.0 || w.lambda_wd < 0.0) {
        throw ConfigError("loss weights must be nonnegative");
    }
    if (!(w.target_picp > 0.0 && w.target_picp < 1.0)) throw ConfigError("target_picp must lie in (0, 1)");
}

SampleSet SampleSet::subset(const std::vector<std::size_t>& rows) const {
    const auto& shape = inputs.shape();
    const std::size_t row_size = shape[1] * shape[2];
    SampleSet out;
    out.inputs = Tensor({rows.size(), shape[1], shape[2]});
    out.targets.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy_n(inputs.values().begin() + static_cast<std::ptrdiff_t>(rows[i] * row_size), row_size,
                    out.inputs.values().begin() + static_cast<std::ptrdiff_t>(i * row_size));
        out.targets.push_back(targets[rows[i]]);
    }
    return out;
}

BatchLoss method_loss(const ModelSpec& spec, Var raw, Var y, const TrainConfig& cfg, double ev_scale,
                      std::span<const Var> wd_params, CoverageMode mode) {
    BatchLoss out;
    if (spec.head.method == Method::evidential) {
        const NigBatch nig = constrain_nig(raw, spec.head.bounded_mean, spec.head.bound_scale);
        auto c = combined_loss(nig, y, cfg.loss_weights, ev_scale,
                               cfg.l2_in_loss ? wd_params : std::span<const Var>{}, mode);
        out.total = c.total;
        out.nll = c.nll;
        out.reg = c.reg;
        out.coverage = c.coverage;
    } else {
        out.total = diff::mean(baseline_loss(spec.head, raw, y, cfg.loss_options));
        out.nll = out.total.item();
    }
    return out;
}

double validation_loss(const ModelSpec& spec, const ParameterSet& params, const SampleSet& data,
                       const TrainConfig& cfg) {
    if (data.size() == 0) throw ContractError("validation_loss: empty set");
    constexpr std::size_t kChunk = 512;
    double acc = 0.0;
    for (std::size_t start = 0; start < data.size(); start += kChunk) {
        const std::size_t end = std::min(data.size(), start + kChunk);
        std::vector<std::size_t> rows(end - start);
        std::iota(rows.begin(), rows.end(), start);
        const SampleSet chunk = data.subset(rows);
        diff::Tape tape;
        BoundParams bound(tape, params, false);
        Var raw = forward(bound, spec, chunk.inputs, false, 0);
        Var y = tape.constant(Tensor::column(chunk.targets));
        const auto loss = method_loss(spec, raw, y, cfg, 1.0, {}, CoverageMode::hard);
        acc += loss.total.item() * static_cast<double>(rows.size());
    }
    return acc / static_cast<double>(data.size());
}

TrainResult train(const ModelSpec& spec, const SampleSet& train_set, const SampleSet& val_set,
                  const TrainConfig& cfg) {
    return train(spec, init_model(spec, cfg.seed), train_set, val_set, cfg);
}

TrainResult train(const ModelSpec& spec, ParameterSet init, const SampleSet& train_set, const SampleSet& val_set,
                  const TrainConfig& cfg) {
    validate(cfg);
    if (train_set.size() == 0) throw ConfigError("train: empty training split");
    if (val_set.size() == 0) throw ConfigError("train: empty validation split");

    const std::size_t n = train_set.size();
    const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::uint64_t total_steps = static_cast<std::uint64_t>(batches) * cfg.max_epochs;
    const auto warmup_steps = static_cast<std::uint64_t>(std::llround(cfg.warmup_fraction * static_cast<double>(total_steps)));
    const auto anneal_steps =
        std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(cfg.anneal_fraction * static_cast<double>(total_steps))));
    const AdamWConfig adam{cfg.beta1, cfg.beta2, cfg.epsilon, cfg.weight_decay};

    ParameterSet params = std::move(init);
    std::vector<Tensor> values = params.tensors();
    OptimState state;
    Rng shuffler(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    TrainHistory& hist = result.history;
    hist.total_steps = total_steps;
    double best = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    std::uint64_t step = 0;

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        shuffler.shuffle(order.begin(), order.end());
        double epoch_loss = 0.0;
        double lr = 0.0, ev = 0.0;
        for (std::size_t b = 0; b < batches; ++b) {
            const std::size_t begin = b * cfg.batch_size;
            const std::size_t end = std::min(n, begin + cfg.batch_size);
            const SampleSet batch = train_set.subset({order.begin() + static_cast<std::ptrdiff_t>(begin),
                                                      order.begin() + static_cast<std::ptrdiff_t>(end)});
            lr = lr_at(step, total_steps, warmup_steps, cfg.learning_rate);
            ev = evidence_scale(step, anneal_steps);
            BatchLoss loss;
            std::vector<Tensor> grads;
            try {
                diff::Tape tape;
                BoundParams bound(tape, params, true);
                Var raw = forward(bound, spec, batch.inputs, true, cfg.seed * 1000003ULL + step + 1);
                Var y = tape.constant(Tensor::column(batch.targets));
                loss = method_loss(spec, raw, y, cfg, ev, bound.vars(), CoverageMode::soft);
                tape.backward(loss.total);
                for (const auto& v : bound.vars()) grads.push_back(tape.grad(v));
                epoch_loss += loss.total.item() * static_cast<double>(end - begin);
            } catch (const NumericError& e) {
                std::ostringstream os;
                os << "training diverged at epoch " << epoch << ", batch " << b << " (nll " << loss.nll << ", reg "
                   << loss.reg << ", coverage " << loss.coverage << "): " << e.what();
                throw TrainingError(os.str());
            }
            clip_gradients(grads, cfg.clip_max_norm);
            adamw_step(state, values, grads, lr, adam);
            params.assign(values);
            ++step;
        }
        hist.epochs_run = epoch + 1;
        hist.train_loss.push_back(epoch_loss / static_cast<double>(n));
        const double val = validation_loss(spec, params, val_set, cfg);
        hist.val_loss.push_back(val);
        hist.learning_rate.push_back(lr);
        hist.evidence_scale.push_back(ev);
        if (val < best) {
            best = val;
            hist.best_epoch = epoch;
            result.best_params = params;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    if (result.best_params.size() == 0) result.best_params = params;
    return result;
}

}  // namespace nigcast
