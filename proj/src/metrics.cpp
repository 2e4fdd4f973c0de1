#include "nigcast/metrics.hpp"

#include "nigcast/errors.hpp"
#include "nigcast/special.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nigcast {

namespace {

double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

void require_same(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw ContractError(std::string(what) + ": length mismatch");
    if (a == 0) throw ContractError(std::string(what) + ": empty input");
}

}  // namespace

Maybe pearson(std::span<const double> a, std::span<const double> b) {
    require_same(a.size(), b.size(), "pearson");
    if (a.size() < 2) throw ContractError("pearson: need at least 2 points");
    const double ma = mean_of(a), mb = mean_of(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

AccuracyMetrics accuracy_metrics(std::span<const double> preds, std::span<const double> actuals) {
    require_same(preds.size(), actuals.size(), "accuracy_metrics");
    AccuracyMetrics m;
    double se = 0.0, ae = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double e = preds[i] - actuals[i];
        se += e * e;
        ae += std::abs(e);
    }
    const auto n = static_cast<double>(preds.size());
    m.rmse = std::sqrt(se / n);
    m.mae = ae / n;
    if (preds.size() >= 2) m.pearson = pearson(preds, actuals);
    return m;
}

double crps_gaussian(double mu, double sigma, double y) {
    if (!(sigma > 0.0)) throw ContractError("crps_gaussian: sigma must be positive");
    const double z = (y - mu) / sigma;
    return sigma * (z * (2.0 * special::normal_cdf(z) - 1.0) + 2.0 * special::normal_pdf(z) -
                    1.0 / std::sqrt(special::kPi));
}

double crps_student_t(double mu, double scale, double df, double y) {
    if (!(scale > 0.0)) throw ContractError("crps_student_t: scale must be positive");
    if (!(df > 1.0)) throw ContractError("crps_student_t: df must exceed 1");
    const double z = (y - mu) / scale;
    const double pdf = std::exp(special::student_t_logpdf(z, 0.0, 1.0, df));
    const auto lbeta = [](double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); };
    const double tail = 2.0 * std::sqrt(df) / (df - 1.0) * std::exp(lbeta(0.5, df - 0.5) - 2.0 * lbeta(0.5, 0.5 * df));
    return scale * (z * (2.0 * special::student_t_cdf(z, df) - 1.0) + 2.0 * pdf * (df + z * z) / (df - 1.0) - tail);
}

double picp(std::span<const Interval> intervals, std::span<const double> actuals) {
    require_same(intervals.size(), actuals.size(), "picp");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < intervals.size(); ++i) hit += intervals[i].contains(actuals[i]) ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(intervals.size());
}

double sharpness(std::span<const Interval> intervals) {
    if (intervals.empty()) throw ContractError("sharpness: empty input");
    double s = 0.0;
    for (const auto& iv : intervals) {
        if (iv.unbounded) return std::numeric_limits<double>::infinity();
        s += iv.width();
    }
    return s / static_cast<double>(intervals.size());
}

Maybe unc_err_corr(std::span<const double> sigmas, std::span<const double> abs_errors) {
    return pearson(sigmas, abs_errors);
}

TradingMetrics trading_metrics(std::span<const double> pnl, double days_per_year) {
    if (pnl.size() < 2) throw ContractError("trading_metrics: need at least 2 trades");
    TradingMetrics m;
    m.n_trades = pnl.size();
    const auto n = static_cast<double>(pnl.size());
    const double mean = mean_of(pnl);
    double ss = 0.0, neg_ss = 0.0, neg_sum = 0.0;
    std::size_t n_neg = 0, wins = 0;
    for (double v : pnl) {
        ss += (v - mean) * (v - mean);
        if (v < 0.0) {
            ++n_neg;
            neg_sum += v;
        }
        if (v > 0.0) ++wins;
    }
    const double sd = std::sqrt(ss / (n - 1.0));
    if (sd > 0.0) {
        m.daily_sharpe = mean / sd;
        m.annual_sharpe = *m.daily_sharpe * std::sqrt(days_per_year);
    }
    if (n_neg > 0) {
        const double neg_mean = neg_sum / static_cast<double>(n_neg);
        for (double v : pnl) {
            if (v < 0.0) neg_ss += (v - neg_mean) * (v - neg_mean);
        }
        const double dsd = std::sqrt(neg_ss / static_cast<double>(n_neg));
        if (dsd > 0.0) m.annual_sortino = mean / dsd * std::sqrt(days_per_year);
    }
    double cum = 0.0, peak = 0.0, dd = 0.0;
    for (double v : pnl) {
        cum += v;
        peak = std::max(peak, cum);
        dd = std::min(dd, cum - peak);
    }
    m.max_drawdown = dd;
    if (dd < 0.0) m.calmar = mean * days_per_year / std::abs(dd);
    m.win_rate = static_cast<double>(wins) / n;
    return m;
}

}  // namespace nigcast
