#pragma once

#include "nigcast/diffkit.hpp"
#include "nigcast/evidential.hpp"
#include "nigcast/head.hpp"

#include <span>
#include <vector>

namespace nigcast {

struct LossValue {
    double value = 0.0;
    std::vector<double> per_sample;
};

struct CombinedLossWeights {
    double lambda_evd = 0.1;
    double lambda_coverage = 0.0;
    double lambda_wd = 0.001;
    double target_picp = 0.95;
    double sharpness_k = 50.0;  // sigmoid sharpness of the soft coverage indicator
};

enum class CoverageMode { soft, hard };

struct LossOptions {
    double huber_delta = 1.0;
};

// --- per-sample reference forms (plain doubles) --------------------------------------

/// Evidential negative log-likelihood; equals -log St(y; mu, beta(1+lam)/(alpha lam), 2 alpha).
double der_nll(const NigParams& p, double y);
/// |mu - y| (alpha + lam - 2). Not clamped, so it can be negative when alpha + lam < 2.
double der_reg(const NigParams& p, double y);

/// Mean over samples of sigmoid(k (y - lower)) sigmoid(k (upper - y)).
double soft_picp(std::span<const Interval> intervals, std::span<const double> targets, double sharpness_k);
/// Fraction of targets inside the closed intervals.
double hard_picp(std::span<const Interval> intervals, std::span<const double> targets);
double coverage_loss(std::span<const Interval> intervals, std::span<const double> targets, double target_picp,
                     double sharpness_k, CoverageMode mode);

double baseline_loss(const HeadSpec& head, std::span<const double> raw, double y, const LossOptions& opts = {});

// --- differentiable batch forms ----------------------------------------------------------

diff::Var der_nll(const NigBatch& p, diff::Var y);   // B x 1
diff::Var der_reg(const NigBatch& p, diff::Var y);   // B x 1

/// Soft coverage loss |target - PICP_soft| over a batch of intervals (B x 1 each).
diff::Var coverage_loss(diff::Var lower, diff::Var upper, diff::Var y, double target_picp, double sharpness_k);

/// Central NIG predictive interval bounds at `level`, differentiable in all four
/// parameters including the alpha-dependent Student-t critical value.
std::pair<diff::Var, diff::Var> predictive_bounds(const NigBatch& p, double level);

struct CombinedLoss {
    diff::Var total;
    double nll = 0.0;
    double reg = 0.0;
    double coverage = 0.0;
    double weight_penalty = 0.0;
};

/// mean(nll) + lambda_evd * evidence_scale * mean(reg) + lambda_coverage * coverage + lambda_wd * ||theta||^2.
/// In hard mode the coverage term is the exact indicator PICP and carries no gradient.
CombinedLoss combined_loss(const NigBatch& p, diff::Var y, const CombinedLossWeights& w, double evidence_scale,
                           std::span<const diff::Var> wd_params, CoverageMode mode = CoverageMode::soft);

/// Per-sample loss (B x 1) for the non-evidential methods.
diff::Var baseline_loss(const HeadSpec& head, diff::Var raw, diff::Var y, const LossOptions& opts = {});

/// Mean of a per-sample column plus its values.
LossValue to_loss_value(diff::Var per_sample);

}  // namespace nigcast
