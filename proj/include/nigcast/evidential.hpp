#pragma once

#include "nigcast/diffkit.hpp"

#include <limits>
#include <span>

namespace nigcast {

/// Normal-Inverse-Gamma parameters of one prediction. `lam` is the
/// precision scaling (often written nu), `alpha` the shape, `beta` the scale.
struct NigParams {
    double mu = 0.0;
    double lam = 1.0;
    double alpha = 2.0;
    double beta = 1.0;

    bool valid() const noexcept;
};

struct UncertaintyDecomposition {
    double mean = 0.0;
    double aleatoric = 0.0;       // E[sigma^2] = beta / (alpha - 1)
    double epistemic = 0.0;       // Var[mu]   = beta / ((alpha - 1) lam)
    double total_variance = 0.0;  // aleatoric * (1 + 1/lam)
};

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
    double level = 0.95;
    bool unbounded = false;  // whole real line (infinite-width sentinel)

    static Interval whole_line(double level) {
        constexpr double inf = std::numeric_limits<double>::infinity();
        return {-inf, inf, level, true};
    }
    double width() const noexcept { return upper - lower; }
    bool contains(double y) const noexcept { return unbounded || (y >= lower && y <= upper); }
};

/// Additive floors applied after softplus.
struct NigOffsets {
    double lam = 0.01;
    double alpha = 1.0;
    double beta = 0.01;
};

/// Maps four unconstrained head outputs onto a valid NIG.
NigParams constrain_nig(std::span<const double> raw, bool bounded_mean, double bound_scale,
                        const NigOffsets& offsets = {});

UncertaintyDecomposition decompose(const NigParams& p);

/// Student-t predictive interval (df = 2 alpha, scale sqrt(beta (1 + lam) / (alpha lam))).
Interval predictive_interval(const NigParams& p, double level);

/// Scale of the Student-t marginal.
double predictive_scale(const NigParams& p);

/// Column views (B x 1 each) of a batch of constrained NIG parameters on a tape.
struct NigBatch {
    diff::Var mu, lam, alpha, beta;
};

/// Differentiable counterpart of constrain_nig for a B x 4 raw head output.
NigBatch constrain_nig(diff::Var raw, bool bounded_mean, double bound_scale, const NigOffsets& offsets = {});

/// Reads row `i` of a batch back into plain parameters.
NigParams nig_at(const NigBatch& batch, std::size_t i);

}  // namespace nigcast
