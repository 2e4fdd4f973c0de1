#include "nigcast/diffkit.hpp"
#include "nigcast/errors.hpp"
#include "nigcast/special.hpp"

#include "testkit.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <string>

namespace nigcast {
namespace {

using diff::Graph;
using diff::Tape;
using diff::Tensor;
using diff::Var;
using testkit::random_tensor;

Graph scalar_graph(std::function<Var(Var)> f) {
    return {{"x"}, [f](Tape&, std::span<const Var> p) { return f(p[0]); }};
}

TEST(Diffkit, SquareValueAndGrad) {
    const auto r = diff::value_and_grad(scalar_graph([](Var x) { return diff::square(x); }), {{Tensor::scalar(3.0)}});
    EXPECT_DOUBLE_EQ(r.loss, 9.0);
    EXPECT_DOUBLE_EQ(r.grads[0][0], 6.0);
}

TEST(Diffkit, SoftplusAtZero) {
    const auto r = diff::value_and_grad(scalar_graph([](Var x) { return diff::softplus(x); }), {{Tensor::scalar(0.0)}});
    EXPECT_NEAR(r.loss, std::log(2.0), 1e-15);
    EXPECT_NEAR(r.grads[0][0], 0.5, 1e-15);
}

TEST(Diffkit, LgammaAtOneGivesMinusEulerGamma) {
    const auto g = scalar_graph([](Var x) { return diff::lgamma(x); });
    const auto r = diff::value_and_grad(g, {{Tensor::scalar(1.0)}});
    EXPECT_NEAR(r.loss, 0.0, 1e-15);
    EXPECT_NEAR(r.grads[0][0], -special::kEulerGamma, 1e-10);
    const auto report = diff::finite_diff_check(g, {{Tensor::scalar(1.0)}}, 1e-5);
    EXPECT_NEAR(report.numeric[0][0], -0.577216, 1e-6);
}

TEST(Diffkit, FiniteDiffOfSquare) {
    const auto report =
        diff::finite_diff_check(scalar_graph([](Var x) { return diff::square(x); }), {{Tensor::scalar(3.0)}}, 1e-5);
    EXPECT_NEAR(report.numeric[0][0], 6.0, 1e-8);
    EXPECT_LT(report.max_rel_error, 1e-9);
}

TEST(Diffkit, FiniteDiffOfTanhAtZero) {
    const auto report =
        diff::finite_diff_check(scalar_graph([](Var x) { return diff::tanh(x); }), {{Tensor::scalar(0.0)}}, 1e-5);
    EXPECT_NEAR(report.numeric[0][0], 1.0, 1e-9);
    EXPECT_DOUBLE_EQ(report.analytic[0][0], 1.0);
}

TEST(Diffkit, FiniteDiffStepOutsideRangeIsRejected) {
    const auto g = scalar_graph([](Var x) { return diff::square(x); });
    EXPECT_THROW(diff::finite_diff_check(g, {{Tensor::scalar(1.0)}}, 1e-2), ContractError);
    EXPECT_THROW(diff::finite_diff_check(g, {{Tensor::scalar(1.0)}}, 1e-9), ContractError);
}

TEST(Diffkit, RelativeErrorDefinition) {
    EXPECT_DOUBLE_EQ(diff::relative_error(2.0, 1.0), 0.5);
    EXPECT_DOUBLE_EQ(diff::relative_error(0.0, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(diff::relative_error(1e-9, 0.0), 1e-9 / 1e-8);
}

TEST(Diffkit, NonFiniteIntermediateNamesTheNode) {
    const auto g = scalar_graph([](Var x) { return diff::log(x); });
    try {
        diff::value_and_grad(g, {{Tensor::scalar(0.0)}});
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("log"), std::string::npos);
    }
}

TEST(Diffkit, NonFinitePerturbationIsFlaggedNotThrown) {
    // log(x) at x = 5e-6 with step 1e-5: the minus side evaluates log of a negative number.
    const auto g = scalar_graph([](Var x) { return diff::sum(diff::log(x)); });
    Tensor x({1, 2}, std::vector<double>{5e-6, 1.0});
    const auto report = diff::finite_diff_check(g, {{x}}, 1e-5);
    ASSERT_EQ(report.flagged.size(), 1u);
    EXPECT_EQ(report.flagged[0].index, 0u);
    EXPECT_LT(diff::relative_error(report.analytic[0][1], report.numeric[0][1]), 1e-8);
}

TEST(Diffkit, UnusedParameterIsReported) {
    Graph g{{"a", "b"}, [](Tape&, std::span<const Var> p) { return diff::sum(diff::square(p[0])); }};
    const auto r = diff::value_and_grad(g, {{Tensor::scalar(1.0), Tensor::scalar(2.0)}});
    EXPECT_FALSE(r.unused[0]);
    EXPECT_TRUE(r.unused[1]);
    EXPECT_DOUBLE_EQ(r.grads[1][0], 0.0);
}

TEST(Diffkit, AbsSubgradientAtZeroIsZero) {
    const auto r = diff::value_and_grad(scalar_graph([](Var x) { return diff::abs(x); }), {{Tensor::scalar(0.0)}});
    EXPECT_DOUBLE_EQ(r.grads[0][0], 0.0);
}

TEST(Diffkit, MatmulShapeMismatchThrows) {
    Tape tape;
    Var a = tape.parameter(Tensor({2, 3}, 1.0));
    Var b = tape.parameter(Tensor({2, 3}, 1.0));
    EXPECT_THROW(diff::matmul(a, b), ContractError);
}

TEST(Diffkit, BackwardNeedsScalarLoss) {
    Tape tape;
    Var a = tape.parameter(Tensor({2, 3}, 1.0));
    EXPECT_THROW(tape.backward(diff::square(a)), ContractError);
}

TEST(Diffkit, SoftmaxRowsSumToOne) {
    Tape tape;
    Rng rng(4);
    Var a = tape.constant(random_tensor(3, 5, rng, -30.0, 30.0));
    const Tensor s = diff::softmax(a).value();
    for (std::size_t r = 0; r < 3; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < 5; ++c) total += s.at(r, c);
        EXPECT_NEAR(total, 1.0, 1e-14);
    }
}

// Each primitive is wrapped into a scalar objective sum(w * op(inputs)) with a
// fixed random weighting so that every output element matters.
struct PrimitiveCase {
    std::string name;
    std::size_t arity;
    double lo, hi;  // input sampling range
    std::function<Var(std::span<const Var>)> op;
    std::size_t rows = 3, cols = 4;
};

Var weighted_sum(Tape& tape, Var out, std::uint64_t seed) {
    Rng rng(seed);
    return diff::sum(out * tape.constant(random_tensor(out.rows(), out.cols(), rng, 0.5, 1.5)));
}

std::vector<PrimitiveCase> primitive_cases() {
    std::vector<PrimitiveCase> cases = {
        {"add", 2, -2.0, 2.0, [](std::span<const Var> p) { return p[0] + p[1]; }},
        {"sub", 2, -2.0, 2.0, [](std::span<const Var> p) { return p[0] - p[1]; }},
        {"mul", 2, -2.0, 2.0, [](std::span<const Var> p) { return p[0] * p[1]; }},
        {"div", 2, 0.5, 2.0, [](std::span<const Var> p) { return p[0] / p[1]; }},
        {"tanh", 1, -2.0, 2.0, [](std::span<const Var> p) { return diff::tanh(p[0]); }},
        {"sigmoid", 1, -4.0, 4.0, [](std::span<const Var> p) { return diff::sigmoid(p[0]); }},
        {"softplus", 1, -4.0, 4.0, [](std::span<const Var> p) { return diff::softplus(p[0]); }},
        {"exp", 1, -2.0, 2.0, [](std::span<const Var> p) { return diff::exp(p[0]); }},
        {"log", 1, 0.2, 3.0, [](std::span<const Var> p) { return diff::log(p[0]); }},
        {"lgamma", 1, 0.2, 6.0, [](std::span<const Var> p) { return diff::lgamma(p[0]); }},
        {"square", 1, -2.0, 2.0, [](std::span<const Var> p) { return diff::square(p[0]); }},
        {"abs", 1, 0.05, 2.0, [](std::span<const Var> p) { return diff::abs(p[0]) + diff::abs(diff::neg(p[0])); }},
        {"softmax", 1, -3.0, 3.0, [](std::span<const Var> p) { return diff::softmax(p[0]); }},
        {"sum", 1, -2.0, 2.0, [](std::span<const Var> p) { return diff::square(diff::sum(p[0])); }},
        {"mean", 1, -2.0, 2.0, [](std::span<const Var> p) { return diff::square(diff::mean(p[0])); }},
        {"slice", 1, -2.0, 2.0,
         [](std::span<const Var> p) { return diff::square(diff::slice_rows(diff::slice_cols(p[0], 1, 3), 1, 3)); }},
        {"concat", 2, -2.0, 2.0,
         [](std::span<const Var> p) {
             const Var cols[] = {diff::square(p[0]), p[1]};
             const Var both = diff::concat_cols(cols);
             const Var rows[] = {both, diff::tanh(both)};
             return diff::concat_rows(rows);
         }},
    };
    PrimitiveCase mm{"matmul", 2, -2.0, 2.0, [](std::span<const Var> p) {
                         return diff::matmul(p[0], diff::slice_cols(diff::slice_rows(p[1], 0, 3), 0, 3)) * p[0];
                     }};
    mm.rows = 4;
    mm.cols = 3;
    cases.push_back(mm);
    return cases;
}

TEST(DiffkitProperty, EveryPrimitiveMatchesCentralDifferences) {
    for (const auto& pc : primitive_cases()) {
        double worst = 0.0;
        for (std::uint64_t point = 0; point < 100; ++point) {
            Rng rng(1000 * point + pc.arity);
            std::vector<Tensor> params;
            std::vector<std::string> names;
            for (std::size_t k = 0; k < pc.arity; ++k) {
                Tensor t = random_tensor(pc.rows, pc.cols, rng, pc.lo, pc.hi);
                // abs is sampled away from its kink on both sides of zero.
                if (pc.name == "abs" && rng.uniform() < 0.5) {
                    for (auto& v : t.values()) v = -v;
                }
                params.push_back(std::move(t));
                names.push_back("p" + std::to_string(k));
            }
            const auto op = pc.op;
            Graph g{names, [op, point](Tape& tape, std::span<const Var> p) { return weighted_sum(tape, op(p), point); }};
            worst = std::max(worst, testkit::grad_error(g, params));
        }
        EXPECT_LT(worst, 1e-4) << pc.name;
    }
}

TEST(DiffkitProperty, BroadcastRowAndColumnGradients) {
    Rng rng(9);
    Graph g{{"m", "row", "col", "s"}, [](Tape& tape, std::span<const Var> p) {
                return weighted_sum(tape, (p[0] + p[1]) * p[2] - p[3] / (p[2] * p[2] + 1.0), 3);
            }};
    const std::vector<Tensor> params = {random_tensor(3, 4, rng), random_tensor(1, 4, rng), random_tensor(3, 1, rng),
                                        random_tensor(1, 1, rng)};
    EXPECT_LT(testkit::grad_error(g, params), 1e-6);
}

TEST(DiffkitProperty, ValueAndGradIsBitIdentical) {
    Rng rng(11);
    Graph g{{"a", "b"}, [](Tape& tape, std::span<const Var> p) {
                return weighted_sum(tape, diff::softmax(diff::matmul(p[0], p[1])) + diff::lgamma(diff::softplus(p[0]) + 0.5), 7);
            }};
    const std::vector<Tensor> params = {random_tensor(4, 4, rng), random_tensor(4, 4, rng)};
    const auto r1 = diff::value_and_grad(g, params);
    const auto r2 = diff::value_and_grad(g, params);
    EXPECT_EQ(r1.loss, r2.loss);
    for (std::size_t k = 0; k < params.size(); ++k) EXPECT_EQ(r1.grads[k].values(), r2.grads[k].values());
}

TEST(DiffkitProperty, GradientOfSumIsSumOfGradients) {
    const auto f1 = [](Tape& tape, std::span<const Var> p) { return weighted_sum(tape, diff::tanh(p[0] * p[1]), 1); };
    const auto f2 = [](Tape& tape, std::span<const Var> p) { return weighted_sum(tape, diff::exp(p[0]) - p[1], 2); };
    Graph g1{{"a", "b"}, f1};
    Graph g2{{"a", "b"}, f2};
    Graph both{{"a", "b"}, [f1, f2](Tape& tape, std::span<const Var> p) { return f1(tape, p) + f2(tape, p); }};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const std::vector<Tensor> params = {random_tensor(3, 3, rng), random_tensor(3, 3, rng)};
        const auto a = diff::value_and_grad(g1, params);
        const auto b = diff::value_and_grad(g2, params);
        const auto c = diff::value_and_grad(both, params);
        for (std::size_t k = 0; k < params.size(); ++k) {
            for (std::size_t i = 0; i < params[k].size(); ++i) {
                EXPECT_NEAR(c.grads[k][i], a.grads[k][i] + b.grads[k][i], 1e-13);
            }
        }
    }
}

}  // namespace
}  // namespace nigcast
