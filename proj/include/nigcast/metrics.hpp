#pragma once

// Accuracy, probabilistic and trading metrics. Undefined values (zero
// variance, no downside, no drawdown) come back as std::nullopt.

#include "nigcast/evidential.hpp"

#include <optional>
#include <span>
#include <vector>

namespace nigcast {

using Maybe = std::optional<double>;

/// Pearson correlation; nullopt when either side has zero variance.
Maybe pearson(std::span<const double> a, std::span<const double> b);

struct AccuracyMetrics {
    double rmse = 0.0;
    double mae = 0.0;
    Maybe pearson;
};

AccuracyMetrics accuracy_metrics(std::span<const double> preds, std::span<const double> actuals);

/// sigma (z (2 Phi(z) - 1) + 2 phi(z) - 1 / sqrt(pi)), z = (y - mu) / sigma.
double crps_gaussian(double mu, double sigma, double y);

/// Closed-form CRPS of a location-scale Student-t; needs df > 1 for a finite mean.
double crps_student_t(double mu, double scale, double df, double y);

/// Fraction of actuals inside the closed intervals.
double picp(std::span<const Interval> intervals, std::span<const double> actuals);

/// Mean interval width (infinite if any interval is unbounded).
double sharpness(std::span<const Interval> intervals);

Maybe unc_err_corr(std::span<const double> sigmas, std::span<const double> abs_errors);

inline constexpr double kTradingDaysPerYear = 252.0;

struct TradingMetrics {
    Maybe daily_sharpe;
    Maybe annual_sharpe;
    Maybe annual_sortino;
    double max_drawdown = 0.0;  // <= 0, in pnl units
    Maybe calmar;
    double win_rate = 0.0;
    std::size_t n_trades = 0;
};

/// Sharpe with the sample std, Sortino with the population std of the strictly
/// negative values, drawdown on the cumulative sum. Requires >= 2 entries.
TradingMetrics trading_metrics(std::span<const double> pnl, double days_per_year = kTradingDaysPerYear);

}  // namespace nigcast
