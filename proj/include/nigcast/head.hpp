#pragma once

#include "nigcast/evidential.hpp"
#include "nigcast/method.hpp"

#include <optional>
#include <span>
#include <vector>

namespace nigcast {

struct HeadSpec {
    Method method = Method::evidential;
    std::vector<double> quantile_levels = {0.025, 0.5, 0.975};
    std::size_t n_components = 3;
    bool bounded_mean = false;
    double bound_scale = 3.0;
};

/// Raw output width of the head for its method.
std::size_t output_dim(const HeadSpec& head);

/// Throws ContractError for an inconsistent head (bad levels, zero components).
void validate(const HeadSpec& head);

/// Applies the optional `bound_scale * tanh` bound to a location output.
double bound_location(const HeadSpec& head, double raw);
diff::Var bound_location(const HeadSpec& head, diff::Var raw);

/// Everything the evaluation needs from one head output, in model (scaled) units.
struct PredictiveSummary {
    double mean = 0.0;
    std::optional<double> sigma;       // predictive standard deviation
    std::optional<Interval> interval;  // central interval at the requested level
    std::optional<UncertaintyDecomposition> nig;  // evidential only
    bool gaussian_crps = false;        // CRPS via the Gaussian (mean, sigma) form is meaningful
    std::optional<double> t_scale;     // Student-t predictive, when the head has one
    std::optional<double> t_df;
};

/// Turns one row of raw head outputs into a predictive summary. Conformal
/// intervals are attached later by the caller (the base model is a point model).
PredictiveSummary summarize(const HeadSpec& head, std::span<const double> raw, double level);

/// Quantile of a Gaussian mixture by bisection on its CDF.
double mixture_quantile(std::span<const double> weights, std::span<const double> means,
                        std::span<const double> sigmas, double p);

}  // namespace nigcast
