#include "nigcast/evidential.hpp"

#include "nigcast/errors.hpp"
#include "nigcast/special.hpp"

#include <algorithm>
#include <cmath>

namespace nigcast {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

}  // namespace

bool NigParams::valid() const noexcept {
    return std::isfinite(mu) && std::isfinite(lam) && std::isfinite(alpha) && std::isfinite(beta) && lam > 0.0 &&
           alpha > 1.0 && beta > 0.0;
}

NigParams constrain_nig(std::span<const double> raw, bool bounded_mean, double bound_scale,
                        const NigOffsets& offsets) {
    if (raw.size() != 4) throw ContractError("constrain_nig: expected 4 raw outputs, got " + std::to_string(raw.size()));
    for (double v : raw) {
        if (!std::isfinite(v)) throw ContractError("constrain_nig: raw output is not finite");
    }
    NigParams p;
    p.mu = bounded_mean ? bound_scale * std::tanh(raw[0]) : raw[0];
    p.lam = softplus(raw[1]) + offsets.lam;
    p.alpha = softplus(raw[2]) + offsets.alpha;
    p.beta = softplus(raw[3]) + offsets.beta;
    return p;
}

UncertaintyDecomposition decompose(const NigParams& p) {
    if (!(p.alpha > 1.0 + 1e-12)) {
        throw ContractError("decompose: degenerate NIG parameters (alpha = " + std::to_string(p.alpha) + ")");
    }
    if (!p.valid()) throw ContractError("decompose: invalid NIG parameters");
    UncertaintyDecomposition u;
    u.mean = p.mu;
    u.aleatoric = p.beta / (p.alpha - 1.0);
    u.epistemic = u.aleatoric / p.lam;
    u.total_variance = u.aleatoric * (1.0 + 1.0 / p.lam);
    return u;
}

double predictive_scale(const NigParams& p) { return std::sqrt(p.beta * (1.0 + p.lam) / (p.alpha * p.lam)); }

Interval predictive_interval(const NigParams& p, double level) {
    if (!p.valid()) throw ContractError("predictive_interval: invalid NIG parameters");
    if (!(level > 0.0 && level < 1.0)) throw ContractError("predictive_interval: level must lie in (0, 1)");
    // The NIG "alpha" sets the degrees of freedom; the tail is the significance split in two.
    const double t = special::student_t_upper_quantile(2.0 * p.alpha, 0.5 * (1.0 - level));
    const double half = t * predictive_scale(p);
    return {p.mu - half, p.mu + half, level, false};
}

NigBatch constrain_nig(diff::Var raw, bool bounded_mean, double bound_scale, const NigOffsets& offsets) {
    if (raw.cols() != 4) throw ContractError("constrain_nig: raw head output must have 4 columns");
    NigBatch b;
    diff::Var m = diff::slice_cols(raw, 0, 1);
    b.mu = bounded_mean ? diff::tanh(m) * bound_scale : m;
    b.lam = diff::softplus(diff::slice_cols(raw, 1, 2)) + offsets.lam;
    b.alpha = diff::softplus(diff::slice_cols(raw, 2, 3)) + offsets.alpha;
    b.beta = diff::softplus(diff::slice_cols(raw, 3, 4)) + offsets.beta;
    return b;
}

NigParams nig_at(const NigBatch& batch, std::size_t i) {
    return {batch.mu.value()[i], batch.lam.value()[i], batch.alpha.value()[i], batch.beta.value()[i]};
}

}  // namespace nigcast
