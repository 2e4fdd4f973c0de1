#include "nigcast/losses.hpp"

#include "nigcast/errors.hpp"
#include "nigcast/special.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nigcast {

using diff::Tensor;
using diff::Var;

namespace {

constexpr double kFloor = 1e-6;

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }
double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

void check_width(const HeadSpec& head, std::size_t width) {
    if (width != output_dim(head)) {
        throw ContractError("loss: " + std::string(method_name(head.method)) + " expects " +
                            std::to_string(output_dim(head)) + " outputs, got " + std::to_string(width));
    }
}

void check_lengths(std::size_t a, std::size_t b) {
    if (a == 0) throw ContractError("coverage: empty batch");
    if (a != b) throw ContractError("coverage: intervals and targets differ in length");
}

}  // namespace

// --- plain forms ------------------------------------------------------------------------

double der_nll(const NigParams& p, double y) {
    if (!p.valid()) throw ContractError("der_nll: invalid NIG parameters");
    const double omega = 2.0 * p.beta * (1.0 + p.lam);
    const double r = y - p.mu;
    return 0.5 * std::log(special::kPi / p.lam) - p.alpha * std::log(omega) +
           (p.alpha + 0.5) * std::log(r * r * p.lam + omega) + std::lgamma(p.alpha) - std::lgamma(p.alpha + 0.5);
}

double der_reg(const NigParams& p, double y) {
    if (!p.valid()) throw ContractError("der_reg: invalid NIG parameters");
    return std::fabs(p.mu - y) * (p.alpha + p.lam - 2.0);
}

double soft_picp(std::span<const Interval> intervals, std::span<const double> targets, double sharpness_k) {
    check_lengths(intervals.size(), targets.size());
    double s = 0.0;
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        if (intervals[i].unbounded) {
            s += 1.0;
            continue;
        }
        s += sigmoid(sharpness_k * (targets[i] - intervals[i].lower)) *
             sigmoid(sharpness_k * (intervals[i].upper - targets[i]));
    }
    return s / static_cast<double>(intervals.size());
}

double hard_picp(std::span<const Interval> intervals, std::span<const double> targets) {
    check_lengths(intervals.size(), targets.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < intervals.size(); ++i) hits += intervals[i].contains(targets[i]) ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(intervals.size());
}

double coverage_loss(std::span<const Interval> intervals, std::span<const double> targets, double target_picp,
                     double sharpness_k, CoverageMode mode) {
    const double picp =
        mode == CoverageMode::hard ? hard_picp(intervals, targets) : soft_picp(intervals, targets, sharpness_k);
    return std::fabs(target_picp - picp);
}

double baseline_loss(const HeadSpec& head, std::span<const double> raw, double y, const LossOptions& opts) {
    check_width(head, raw.size());
    switch (head.method) {
        case Method::mse:
        case Method::conformal_base: {
            const double r = bound_location(head, raw[0]) - y;
            return r * r;
        }
        case Method::huber: {
            const double r = std::fabs(bound_location(head, raw[0]) - y);
            const double d = opts.huber_delta;
            return r <= d ? 0.5 * r * r : d * (r - 0.5 * d);
        }
        case Method::gaussian_nll: {
            const double mu = bound_location(head, raw[0]);
            const double var = softplus(raw[1]) + kFloor;
            return 0.5 * std::log(2.0 * special::kPi * var) + (y - mu) * (y - mu) / (2.0 * var);
        }
        case Method::student_t_nll: {
            const double mu = bound_location(head, raw[0]);
            const double scale = softplus(raw[1]) + kFloor;
            const double df = softplus(raw[2]) + 2.0 + kFloor;
            return -special::student_t_logpdf(y, mu, scale, df);
        }
        case Method::quantile: {
            double s = 0.0;
            for (std::size_t k = 0; k < head.quantile_levels.size(); ++k) {
                const double tau = head.quantile_levels[k];
                const double e = y - bound_location(head, raw[k]);
                s += std::max(tau * e, (tau - 1.0) * e);
            }
            return s;
        }
        case Method::mixture: {
            const std::size_t K = head.n_components;
            const double mx = *std::max_element(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(K));
            double z = 0.0;
            for (std::size_t k = 0; k < K; ++k) z += std::exp(raw[k] - mx);
            std::vector<double> terms(K);
            for (std::size_t k = 0; k < K; ++k) {
                const double logw = raw[k] - mx - std::log(z);
                const double mu = bound_location(head, raw[K + k]);
                const double sigma = softplus(raw[2 * K + k]) + kFloor;
                const double r = (y - mu) / sigma;
                terms[k] = logw - 0.5 * std::log(2.0 * special::kPi) - std::log(sigma) - 0.5 * r * r;
            }
            const double tmax = *std::max_element(terms.begin(), terms.end());
            double acc = 0.0;
            for (double t : terms) acc += std::exp(t - tmax);
            return -(tmax + std::log(acc));
        }
        case Method::evidential:
            break;
    }
    throw ContractError("baseline_loss: the evidential method uses combined_loss");
}

// --- differentiable forms ------------------------------------------------------------------

Var der_nll(const NigBatch& p, Var y) {
    Var omega = 2.0 * p.beta * (p.lam + 1.0);
    Var r = y - p.mu;
    return 0.5 * std::log(special::kPi) - 0.5 * diff::log(p.lam) - p.alpha * diff::log(omega) +
           (p.alpha + 0.5) * diff::log(diff::square(r) * p.lam + omega) + diff::lgamma(p.alpha) -
           diff::lgamma(p.alpha + 0.5);
}

Var der_reg(const NigBatch& p, Var y) { return diff::abs(p.mu - y) * (p.alpha + p.lam - 2.0); }

Var coverage_loss(Var lower, Var upper, Var y, double target_picp, double sharpness_k) {
    Var inside = diff::sigmoid((y - lower) * sharpness_k) * diff::sigmoid((upper - y) * sharpness_k);
    return diff::abs(diff::mean(inside) - target_picp);
}

namespace {

// Upper critical value t(nu) of the Student-t with nu = 2 alpha. By the implicit
// function theorem dt/dnu = -(dF/dnu)(t) / f(t); dF/dnu is a five-point
// difference of the CDF in nu.
Var student_t_critical(Var alpha, double upper_tail) {
    const Tensor& a = alpha.value();
    Tensor crit(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) crit[i] = special::student_t_upper_quantile(2.0 * a[i], upper_tail);
    const std::size_t ia = alpha.id();
    return alpha.tape()->record("student_t_critical", crit, {ia}, [ia, crit](diff::Tape& tp, const Tensor& g) {
        const Tensor& av = tp.value(ia);
        Tensor& ga = tp.grad_buffer(ia);
        for (std::size_t i = 0; i < av.size(); ++i) {
            const double nu = 2.0 * av[i], t = crit[i];
            const double h = 1e-3 * nu;
            const double dF = (-special::student_t_cdf(t, nu + 2 * h) + 8.0 * special::student_t_cdf(t, nu + h) -
                               8.0 * special::student_t_cdf(t, nu - h) + special::student_t_cdf(t, nu - 2 * h)) /
                              (12.0 * h);
            const double density = std::exp(special::student_t_logpdf(t, 0.0, 1.0, nu));
            ga[i] += g[i] * 2.0 * (-dF / density);
        }
    });
}

}  // namespace

std::pair<Var, Var> predictive_bounds(const NigBatch& p, double level) {
    Var t = student_t_critical(p.alpha, 0.5 * (1.0 - level));
    Var half = t * diff::sqrt(p.beta * (p.lam + 1.0) / (p.alpha * p.lam));
    return {p.mu - half, p.mu + half};
}

CombinedLoss combined_loss(const NigBatch& p, Var y, const CombinedLossWeights& w, double evidence_scale,
                           std::span<const Var> wd_params, CoverageMode mode) {
    if (evidence_scale < 0.0 || evidence_scale > 1.0) throw ContractError("combined_loss: evidence_scale outside [0, 1]");
    diff::Tape& tape = *p.mu.tape();
    CombinedLoss out;
    Var nll = diff::mean(der_nll(p, y));
    out.nll = nll.item();
    Var total = nll;

    Var reg = diff::mean(der_reg(p, y));
    out.reg = reg.item();
    if (w.lambda_evd != 0.0 && evidence_scale != 0.0) total = total + reg * (w.lambda_evd * evidence_scale);

    if (w.lambda_coverage != 0.0) {
        auto [lower, upper] = predictive_bounds(p, w.target_picp);
        if (mode == CoverageMode::soft) {
            Var cov = coverage_loss(lower, upper, y, w.target_picp, w.sharpness_k);
            out.coverage = cov.item();
            total = total + cov * w.lambda_coverage;
        } else {
            std::size_t hits = 0;
            const auto n = y.value().size();
            for (std::size_t i = 0; i < n; ++i) {
                const double v = y.value()[i];
                hits += (v >= lower.value()[i] && v <= upper.value()[i]) ? 1 : 0;
            }
            out.coverage = std::fabs(w.target_picp - static_cast<double>(hits) / static_cast<double>(n));
            total = total + tape.constant(Tensor::scalar(w.lambda_coverage * out.coverage));
        }
    }

    if (w.lambda_wd != 0.0 && !wd_params.empty()) {
        Var penalty = diff::sum(diff::square(wd_params[0]));
        for (std::size_t i = 1; i < wd_params.size(); ++i) penalty = penalty + diff::sum(diff::square(wd_params[i]));
        out.weight_penalty = penalty.item();
        total = total + penalty * w.lambda_wd;
    }
    out.total = total;
    return out;
}

Var baseline_loss(const HeadSpec& head, Var raw, Var y, const LossOptions& opts) {
    check_width(head, raw.cols());
    diff::Tape& tape = *raw.tape();
    switch (head.method) {
        case Method::mse:
        case Method::conformal_base:
            return diff::square(bound_location(head, diff::slice_cols(raw, 0, 1)) - y);
        case Method::huber: {
            Var r = bound_location(head, diff::slice_cols(raw, 0, 1)) - y;
            const double d = opts.huber_delta;
            Tensor quad_mask(r.value().shape());
            for (std::size_t i = 0; i < quad_mask.size(); ++i) quad_mask[i] = std::fabs(r.value()[i]) <= d ? 1.0 : 0.0;
            Tensor lin_mask(quad_mask.shape());
            for (std::size_t i = 0; i < lin_mask.size(); ++i) lin_mask[i] = 1.0 - quad_mask[i];
            Var quad = 0.5 * diff::square(r) * tape.constant(std::move(quad_mask));
            Var lin = (diff::abs(r) - 0.5 * d) * d * tape.constant(std::move(lin_mask));
            return quad + lin;
        }
        case Method::gaussian_nll: {
            Var mu = bound_location(head, diff::slice_cols(raw, 0, 1));
            Var var = diff::softplus(diff::slice_cols(raw, 1, 2)) + kFloor;
            return 0.5 * diff::log(var * (2.0 * special::kPi)) + diff::square(y - mu) / (var * 2.0);
        }
        case Method::student_t_nll: {
            Var mu = bound_location(head, diff::slice_cols(raw, 0, 1));
            Var scale = diff::softplus(diff::slice_cols(raw, 1, 2)) + kFloor;
            Var df = diff::softplus(diff::slice_cols(raw, 2, 3)) + (2.0 + kFloor);
            Var z = (y - mu) / scale;
            return diff::lgamma(df * 0.5) - diff::lgamma((df + 1.0) * 0.5) + 0.5 * diff::log(df * special::kPi) +
                   diff::log(scale) + (df + 1.0) * 0.5 * diff::log(diff::square(z) / df + 1.0);
        }
        case Method::quantile: {
            const auto& levels = head.quantile_levels;
            Tensor tau({1, levels.size()});
            for (std::size_t k = 0; k < levels.size(); ++k) tau[k] = levels[k] - 0.5;
            // max(tau e, (tau - 1) e) == |e| / 2 + (tau - 1/2) e
            Var e = y - bound_location(head, raw);
            return diff::sum_rows(0.5 * diff::abs(e) + e * tape.constant(std::move(tau)));
        }
        case Method::mixture: {
            const std::size_t K = head.n_components;
            Var logits = diff::slice_cols(raw, 0, K);
            Var log_w = logits - diff::logsumexp_rows(logits);
            Var mu = bound_location(head, diff::slice_cols(raw, K, 2 * K));
            Var sigma = diff::softplus(diff::slice_cols(raw, 2 * K, 3 * K)) + kFloor;
            Var log_n = -0.5 * std::log(2.0 * special::kPi) - diff::log(sigma) -
                        0.5 * diff::square((y - mu) / sigma);
            return -diff::logsumexp_rows(log_w + log_n);
        }
        case Method::evidential:
            break;
    }
    throw ContractError("baseline_loss: the evidential method uses combined_loss");
}

LossValue to_loss_value(Var per_sample) {
    LossValue out;
    out.per_sample = per_sample.value().values();
    if (out.per_sample.empty()) throw ContractError("to_loss_value: empty batch");
    out.value = std::accumulate(out.per_sample.begin(), out.per_sample.end(), 0.0) /
                static_cast<double>(out.per_sample.size());
    return out;
}

}  // namespace nigcast
