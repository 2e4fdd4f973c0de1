#include "nigcast/conformal.hpp"

#include "nigcast/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nigcast {

CalibrationSet calibration_scores(std::span<const double> predictions, std::span<const double> actuals) {
    if (predictions.size() != actuals.size()) throw ContractError("calibration_scores: length mismatch");
    CalibrationSet cal;
    cal.scores.reserve(predictions.size());
    for (std::size_t i = 0; i < predictions.size(); ++i) cal.scores.push_back(std::abs(actuals[i] - predictions[i]));
    return cal;
}

double calibrate(const CalibrationSet& cal, double alpha) {
    if (cal.scores.empty()) throw ContractError("calibrate: empty calibration set");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ContractError("calibrate: alpha must lie in (0, 1)");
    const std::size_t n = cal.scores.size();
    // Guard the ceiling against representation error, e.g. 10 * 0.9 = 9.000000000000002.
    const double raw = static_cast<double>(n + 1) * (1.0 - alpha);
    const auto rank = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
    if (rank > n) return std::numeric_limits<double>::infinity();
    std::vector<double> sorted = cal.scores;
    const auto k = std::max<std::size_t>(rank, 1) - 1;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end());
    return sorted[k];
}

Interval conformal_interval(double point, double q, double level) {
    if (std::isinf(q)) return Interval::whole_line(level);
    if (!(q >= 0.0)) throw ContractError("conformal_interval: q must be nonnegative");
    return {point - q, point + q, level, false};
}

AdaptiveState adaptive_update(AdaptiveState state, bool covered) {
    const double err = covered ? 0.0 : 1.0;
    state.alpha = std::clamp(state.alpha + state.gamma * (state.target_alpha - err), kMinAlpha, kMaxAlpha);
    return state;
}

std::vector<Interval> conformal_stream(const CalibrationSet& cal, std::span<const double> predictions,
                                       std::span<const double> actuals, AdaptiveState state, bool adaptive) {
    if (predictions.size() != actuals.size()) throw ContractError("conformal_stream: length mismatch");
    std::vector<double> sorted = cal.scores;
    std::sort(sorted.begin(), sorted.end());
    CalibrationSet ordered{std::move(sorted)};
    std::vector<Interval> out;
    out.reserve(predictions.size());
    const double level = 1.0 - state.target_alpha;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double q = calibrate(ordered, state.alpha);
        out.push_back(conformal_interval(predictions[i], q, level));
        if (adaptive) state = adaptive_update(state, out.back().contains(actuals[i]));
    }
    return out;
}

}  // namespace nigcast
