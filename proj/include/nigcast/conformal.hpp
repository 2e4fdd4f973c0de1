#pragma once

// Split-conformal intervals around a point predictor, with an optional online
// update of the significance level.

#include "nigcast/evidential.hpp"

#include <span>
#include <vector>

namespace nigcast {

/// Nonconformity scores |y - y_hat| from a held-out calibration split.
struct CalibrationSet {
    std::vector<double> scores;
};

CalibrationSet calibration_scores(std::span<const double> predictions, std::span<const double> actuals);

/// The ceil((n + 1)(1 - alpha))-th smallest score, or +infinity when that rank exceeds n.
double calibrate(const CalibrationSet& cal, double alpha);

/// [point - q, point + q]; an infinite q gives the unbounded interval.
Interval conformal_interval(double point, double q, double level);

struct AdaptiveState {
    double alpha = 0.05;
    double gamma = 0.01;
    double target_alpha = 0.05;
};

inline constexpr double kMinAlpha = 1e-4;
inline constexpr double kMaxAlpha = 1.0 - 1e-4;

/// alpha <- clamp(alpha + gamma (target - err)), err = 1 on a miss.
AdaptiveState adaptive_update(AdaptiveState state, bool covered);

/// Intervals for a test stream. With `adaptive`, each interval uses the current
/// alpha and the state is updated with the realized coverage afterwards.
std::vector<Interval> conformal_stream(const CalibrationSet& cal, std::span<const double> predictions,
                                       std::span<const double> actuals, AdaptiveState state, bool adaptive);

}  // namespace nigcast
