#include "nigcast/errors.hpp"
#include "nigcast/random.hpp"
#include "nigcast/special.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <gtest/gtest.h>

#include <cmath>

namespace nigcast {
namespace {

TEST(Special, DigammaKnownValues) {
    EXPECT_NEAR(special::digamma(1.0), -special::kEulerGamma, 1e-12);
    EXPECT_NEAR(special::digamma(0.5), -special::kEulerGamma - 2.0 * std::log(2.0), 1e-12);
    EXPECT_THROW(special::digamma(0.0), ContractError);
}

TEST(Special, DigammaMatchesBoost) {
    Rng rng(1);
    for (int i = 0; i < 2000; ++i) {
        const double x = std::exp(rng.uniform(-6.0, 5.0));
        const double ref = boost::math::digamma(x);
        EXPECT_NEAR(special::digamma(x), ref, 1e-10 * std::max(1.0, std::fabs(ref))) << x;
    }
}

TEST(Special, DigammaRecurrence) {
    Rng rng(2);
    for (int i = 0; i < 500; ++i) {
        const double x = rng.uniform(0.05, 30.0);
        EXPECT_NEAR(special::digamma(x + 1.0), special::digamma(x) + 1.0 / x, 1e-10);
    }
}

TEST(Special, IncompleteBetaMatchesBoost) {
    Rng rng(3);
    for (int i = 0; i < 2000; ++i) {
        const double a = rng.uniform(0.1, 20.0), b = rng.uniform(0.1, 20.0), x = rng.uniform();
        EXPECT_NEAR(special::incomplete_beta(a, b, x), boost::math::ibeta(a, b, x), 1e-11);
    }
    EXPECT_DOUBLE_EQ(special::incomplete_beta(2.0, 3.0, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(special::incomplete_beta(2.0, 3.0, 1.0), 1.0);
    EXPECT_THROW(special::incomplete_beta(2.0, 3.0, 1.5), ContractError);
}

TEST(Special, StudentTMatchesBoost) {
    Rng rng(4);
    for (int i = 0; i < 2000; ++i) {
        const double df = rng.uniform(0.5, 40.0), t = rng.uniform(-8.0, 8.0);
        const boost::math::students_t dist(df);
        EXPECT_NEAR(special::student_t_cdf(t, df), boost::math::cdf(dist, t), 1e-11);
        const double loc = rng.uniform(-2.0, 2.0), scale = rng.uniform(0.1, 3.0);
        EXPECT_NEAR(special::student_t_logpdf(loc + scale * t, loc, scale, df),
                    std::log(boost::math::pdf(dist, t) / scale), 1e-10);
    }
}

TEST(Special, StudentTQuantile) {
    // Four degrees of freedom, two-sided 95%: the tabulated 2.776.
    EXPECT_NEAR(special::student_t_upper_quantile(4.0, 0.025), 2.7764451051977934, 1e-9);
    Rng rng(5);
    for (int i = 0; i < 500; ++i) {
        const double df = rng.uniform(2.0, 12.0), p = rng.uniform(0.001, 0.499);
        const boost::math::students_t dist(df);
        EXPECT_NEAR(special::student_t_upper_quantile(df, p), boost::math::quantile(boost::math::complement(dist, p)),
                    1e-9);
    }
}

TEST(Special, NormalFunctions) {
    const boost::math::normal n;
    EXPECT_NEAR(special::normal_pdf(0.0), 0.3989422804014327, 1e-15);
    EXPECT_NEAR(special::normal_cdf(1.0), 0.8413447460685429, 1e-15);
    Rng rng(6);
    for (int i = 0; i < 1000; ++i) {
        const double p = rng.uniform(1e-6, 1.0 - 1e-6);
        EXPECT_NEAR(special::normal_quantile(p), boost::math::quantile(n, p), 1e-9);
    }
    EXPECT_THROW(special::normal_quantile(1.0), ContractError);
}

}  // namespace
}  // namespace nigcast
