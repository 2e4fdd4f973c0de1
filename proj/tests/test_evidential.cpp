#include "nigcast/errors.hpp"
#include "nigcast/evidential.hpp"
#include "nigcast/losses.hpp"
#include "nigcast/random.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <gtest/gtest.h>

#include <cmath>

namespace nigcast {
namespace {

TEST(Evidential, ConstrainZeroRaw) {
    const double raw[] = {0.0, 0.0, 0.0, 0.0};
    const NigParams p = constrain_nig(raw, true, 3.0);
    EXPECT_DOUBLE_EQ(p.mu, 0.0);
    EXPECT_NEAR(p.lam, 0.703147, 1e-6);
    EXPECT_NEAR(p.alpha, 1.693147, 1e-6);
    EXPECT_NEAR(p.beta, 0.703147, 1e-6);
}

TEST(Evidential, BoundedMeanSaturates) {
    const double raw[] = {40.0, 0.0, 0.0, 0.0};
    EXPECT_NEAR(constrain_nig(raw, true, 3.0).mu, 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(constrain_nig(raw, false, 3.0).mu, 40.0);
}

TEST(Evidential, ConstraintsHoldForAnyRaw) {
    Rng rng(1);
    for (int i = 0; i < 10000; ++i) {
        const double raw[] = {rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-30, 50), rng.uniform(-50, 50)};
        const NigParams p = constrain_nig(raw, true, 3.0);
        EXPECT_GT(p.lam, 0.0);
        EXPECT_GT(p.alpha, 1.0);
        EXPECT_GT(p.beta, 0.0);
        EXPECT_LE(std::fabs(p.mu), 3.0);
    }
}

TEST(Evidential, UnderflowedAlphaIsDegenerate) {
    // 1 + softplus(-50) rounds to exactly 1 in double precision.
    const double raw[] = {0.0, 0.0, -50.0, 0.0};
    const NigParams p = constrain_nig(raw, true, 3.0);
    EXPECT_EQ(p.alpha, 1.0);
    EXPECT_THROW(decompose(p), ContractError);
}

TEST(Evidential, ConstrainWrongWidthThrows) {
    const double raw[] = {0.0, 0.0, 0.0};
    EXPECT_THROW(constrain_nig(raw, false, 3.0), ContractError);
}

TEST(Evidential, DecompositionWorkedExamples) {
    auto u = decompose({0.0, 1.0, 2.0, 1.0});
    EXPECT_DOUBLE_EQ(u.aleatoric, 1.0);
    EXPECT_DOUBLE_EQ(u.epistemic, 1.0);
    EXPECT_DOUBLE_EQ(u.total_variance, 2.0);
    u = decompose({0.5, 2.0, 3.0, 4.0});
    EXPECT_DOUBLE_EQ(u.aleatoric, 2.0);
    EXPECT_DOUBLE_EQ(u.epistemic, 1.0);
    EXPECT_DOUBLE_EQ(u.total_variance, 3.0);
    EXPECT_DOUBLE_EQ(u.mean, 0.5);
}

TEST(Evidential, EpistemicVanishesForLargeLambda) {
    const auto u = decompose({0.0, 1e12, 3.0, 2.0});
    EXPECT_LT(u.epistemic, 1e-11);
    EXPECT_NEAR(u.total_variance, u.aleatoric, 1e-11);
}

TEST(Evidential, DegenerateAlphaThrows) {
    EXPECT_THROW(decompose({0.0, 1.0, 1.0, 1.0}), ContractError);
    EXPECT_THROW(decompose({0.0, 1.0, 1.0 + 1e-13, 1.0}), ContractError);
}

TEST(Evidential, IntervalWorkedExample) {
    const Interval iv = predictive_interval({0.0, 1.0, 2.0, 1.0}, 0.95);
    EXPECT_NEAR(predictive_scale({0.0, 1.0, 2.0, 1.0}), 1.0, 1e-15);
    EXPECT_NEAR(iv.upper, 2.7764, 1e-4);
    EXPECT_NEAR(iv.lower, -2.7764, 1e-4);
}

TEST(Evidential, IntervalIsSymmetric) {
    const Interval iv = predictive_interval({1.25, 0.4, 3.0, 2.0}, 0.5);
    EXPECT_NEAR(iv.upper - 1.25, 1.25 - iv.lower, 1e-12);
}

TEST(Evidential, IntervalCoversStudentTMass) {
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        const NigParams p{rng.uniform(-3, 3), rng.uniform(0.1, 5), rng.uniform(1.1, 6), rng.uniform(0.1, 5)};
        const double level = rng.uniform(0.5, 0.99);
        const Interval iv = predictive_interval(p, level);
        const boost::math::students_t t(2.0 * p.alpha);
        const double s = predictive_scale(p);
        const double mass = boost::math::cdf(t, (iv.upper - p.mu) / s) - boost::math::cdf(t, (iv.lower - p.mu) / s);
        EXPECT_NEAR(mass, level, 1e-9);
    }
}

TEST(Evidential, NllWorkedExample) { EXPECT_NEAR(der_nll({0.0, 1.0, 2.0, 1.0}, 0.0), -std::log(0.375), 1e-12); }

TEST(Evidential, NllEqualsStudentTMarginal) {
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const NigParams p{rng.uniform(-3, 3), rng.uniform(1e-3, 5), 1.0 + rng.uniform(1e-3, 5), rng.uniform(1e-3, 5)};
        const double y = rng.uniform(-5, 5);
        const boost::math::students_t t(2.0 * p.alpha);
        const double scale = std::sqrt(p.beta * (1.0 + p.lam) / (p.alpha * p.lam));
        const double ref = -std::log(boost::math::pdf(t, (y - p.mu) / scale) / scale);
        EXPECT_NEAR(der_nll(p, y), ref, 1e-8);
    }
}

TEST(Evidential, RegularizerWorkedExamples) {
    EXPECT_DOUBLE_EQ(der_reg({1.0, 1.0, 2.0, 1.0}, 1.0), 0.0);
    EXPECT_DOUBLE_EQ(der_reg({0.5, 1.0, 2.0, 1.0}, 0.0), 0.5);
    EXPECT_NEAR(der_reg({1.0, 0.1, 1.5, 1.0}, 0.0), -0.4, 1e-15);
}

TEST(Evidential, InvalidParamsRejected) {
    EXPECT_THROW(der_nll({0.0, 0.0, 2.0, 1.0}, 0.0), ContractError);
    EXPECT_THROW(der_nll({0.0, 1.0, 0.5, 1.0}, 0.0), ContractError);
}

}  // namespace
}  // namespace nigcast
