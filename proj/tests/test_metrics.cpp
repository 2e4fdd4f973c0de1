#include "nigcast/errors.hpp"
#include "nigcast/metrics.hpp"
#include "nigcast/random.hpp"
#include "nigcast/special.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include <cmath>

namespace nigcast {
namespace {

TEST(Accuracy, WorkedExamples) {
    const std::vector<double> y{1.0, -2.0, 0.5, 3.0};
    auto m = accuracy_metrics(y, y);
    EXPECT_EQ(m.rmse, 0.0);
    EXPECT_EQ(m.mae, 0.0);
    EXPECT_NEAR(*m.pearson, 1.0, 1e-15);
    std::vector<double> neg;
    for (double v : y) neg.push_back(-v);
    EXPECT_NEAR(*accuracy_metrics(neg, y).pearson, -1.0, 1e-15);
    m = accuracy_metrics(std::vector<double>{0.0, 0.0}, std::vector<double>{1.0, -1.0});
    EXPECT_DOUBLE_EQ(m.rmse, 1.0);
    EXPECT_DOUBLE_EQ(m.mae, 1.0);
    EXPECT_FALSE(m.pearson.has_value());
}

TEST(Accuracy, LengthMismatchThrows) {
    EXPECT_THROW(accuracy_metrics(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}), ContractError);
}

TEST(Crps, WorkedExamples) {
    // 2 phi(0) - 1/sqrt(pi)
    EXPECT_NEAR(crps_gaussian(0.0, 1.0, 0.0), 2.0 / std::sqrt(2.0 * special::kPi) - 1.0 / std::sqrt(special::kPi), 1e-15);
    EXPECT_NEAR(crps_gaussian(0.0, 1.0, 0.0), 0.2336950, 1e-7);
    EXPECT_NEAR(crps_gaussian(0.0, 1.0, 1.0), 0.602441, 1e-6);
    EXPECT_NEAR(crps_gaussian(2.0, 3.0, 5.0), 3.0 * crps_gaussian(0.0, 1.0, 1.0), 1e-14);
    EXPECT_THROW(crps_gaussian(0.0, 0.0, 0.0), ContractError);
}

// Integral of (F(x) - 1{x >= y})^2 split at y.
double crps_by_quadrature(double mu, double scale, double df, double y) {
    const boost::math::students_t_distribution<double> t(df);
    const auto half_line = [](auto f) {
        return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
            f, 0.0, std::numeric_limits<double>::infinity(), 15, 1e-13);
    };
    const double below = half_line([&](double u) {
        const double f = boost::math::cdf(t, (y - u - mu) / scale);
        return f * f;
    });
    const double above = half_line([&](double u) {
        const double f = boost::math::cdf(complement(t, (y + u - mu) / scale));
        return f * f;
    });
    return below + above;
}

TEST(Crps, StudentTMatchesQuadrature) {
    for (double df : {1.5, 2.5, 4.0, 10.0, 60.0}) {
        for (double y : {-3.0, -0.4, 0.0, 1.0, 7.5}) {
            const double oracle = crps_by_quadrature(0.3, 1.7, df, y);
            EXPECT_NEAR(crps_student_t(0.3, 1.7, df, y), oracle, 1e-8 * std::max(1.0, oracle)) << df << ' ' << y;
        }
    }
}

TEST(Crps, StudentTApproachesGaussian) {
    EXPECT_NEAR(crps_student_t(0.0, 1.0, 1e6, 0.4), crps_gaussian(0.0, 1.0, 0.4), 1e-6);
    EXPECT_GT(crps_student_t(0.0, 1.0, 3.0, 0.0), crps_gaussian(0.0, 1.0, 0.0));
    EXPECT_THROW(crps_student_t(0.0, 1.0, 1.0, 0.0), ContractError);
    EXPECT_THROW(crps_student_t(0.0, 0.0, 3.0, 0.0), ContractError);
}

TEST(Intervals, PicpAndSharpness) {
    const std::vector<Interval> iv(4, Interval{-1.0, 1.0, 0.95, false});
    EXPECT_DOUBLE_EQ(picp(iv, std::vector<double>{0.0, 0.5, 2.0, -2.0}), 0.5);
    const std::vector<Interval> w{{0.0, 2.0, 0.95, false}, {-2.0, 2.0, 0.95, false}};
    EXPECT_DOUBLE_EQ(sharpness(w), 3.0);
    const std::vector<Interval> open{{0.0, 2.0, 0.95, false}, Interval::whole_line(0.95)};
    EXPECT_TRUE(std::isinf(sharpness(open)));
}

TEST(Intervals, UncertaintyErrorCorrelation) {
    const std::vector<double> s{0.1, 0.4, 0.2, 0.9};
    EXPECT_NEAR(*unc_err_corr(s, s), 1.0, 1e-15);
    EXPECT_FALSE(unc_err_corr(std::vector<double>{1.0, 1.0}, std::vector<double>{0.2, 0.3}).has_value());
}

TEST(Trading, WorkedExamples) {
    auto m = trading_metrics(std::vector<double>{0.01, 0.02, 0.03});
    EXPECT_NEAR(*m.daily_sharpe, 2.0, 1e-12);
    EXPECT_NEAR(*m.annual_sharpe, 31.749, 1e-3);
    EXPECT_FALSE(m.annual_sortino.has_value());
    EXPECT_EQ(m.max_drawdown, 0.0);
    EXPECT_FALSE(m.calmar.has_value());
    m = trading_metrics(std::vector<double>{0.02, -0.01, -0.03, 0.04});
    EXPECT_NEAR(*m.annual_sortino, 7.937, 1e-3);
    m = trading_metrics(std::vector<double>{2.0, -1.0, 2.0, -3.0});
    EXPECT_DOUBLE_EQ(m.max_drawdown, -3.0);
    EXPECT_NEAR(*m.calmar, 0.0, 1e-15);
    m = trading_metrics(std::vector<double>{1.0, -1.0, 2.0});
    EXPECT_NEAR(m.win_rate, 2.0 / 3.0, 1e-15);
    EXPECT_EQ(m.n_trades, 3u);
}

TEST(Trading, ZeroVarianceGivesNoSharpe) {
    const auto m = trading_metrics(std::vector<double>{0.5, 0.5, 0.5});
    EXPECT_FALSE(m.daily_sharpe.has_value());
    EXPECT_FALSE(m.annual_sharpe.has_value());
    EXPECT_THROW(trading_metrics(std::vector<double>{1.0}), ContractError);
}

TEST(Trading, DrawdownMeasuredFromStartingEquity) {
    const auto m = trading_metrics(std::vector<double>{-1.0, -2.0, 4.0});
    EXPECT_DOUBLE_EQ(m.max_drawdown, -3.0);
}

}  // namespace
}  // namespace nigcast
