#include "nigcast/errors.hpp"
#include "nigcast/losses.hpp"
#include "nigcast/model.hpp"
#include "nigcast/special.hpp"

#include "testkit.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace nigcast {
namespace {

using diff::Graph;
using diff::Tape;
using diff::Tensor;
using diff::Var;

Tensor random_batch(std::size_t B, std::size_t T, std::uint64_t seed) {
    Rng rng(seed);
    Tensor x({B, T, 1});
    for (auto& v : x.values()) v = rng.normal();
    return x;
}

ModelSpec lstm_spec(Method m, std::size_t hidden, std::size_t lookback) {
    ModelSpec s;
    s.lstm.hidden_dim = hidden;
    s.lstm.lookback = lookback;
    s.head.method = m;
    return s;
}

TEST(Lstm, ParameterCount) {
    const ModelSpec s = lstm_spec(Method::evidential, 32, 50);
    const ParameterSet p = init_model(s, 0);
    EXPECT_EQ(p.get("lstm.w_ih").size() + p.get("lstm.w_hh").size() + p.get("lstm.bias").size(), 4352u);
    EXPECT_EQ(p.get("head.weight").shape(), (Tensor::Shape{32, 4}));
    EXPECT_EQ(p.get("head.bias").size(), 4u);
}

TEST(Lstm, SameSeedGivesIdenticalParameters) {
    const ModelSpec s = lstm_spec(Method::mse, 8, 10);
    EXPECT_TRUE(init_model(s, 5) == init_model(s, 5));
    EXPECT_FALSE(init_model(s, 5) == init_model(s, 6));
}

TEST(Lstm, OutputShapeAndZeroWeights) {
    const ModelSpec s = lstm_spec(Method::mse, 32, 50);
    ParameterSet p = init_model(s, 0);
    {
        Tape tape;
        BoundParams bound(tape, p, false);
        EXPECT_EQ(lstm_forward(bound, s.lstm, random_batch(2, 50, 1), false, 0).value().shape(), (Tensor::Shape{2, 32}));
    }
    std::vector<Tensor> zeros;
    for (const auto& t : p.tensors()) zeros.emplace_back(t.shape(), 0.0);
    p.assign(zeros);
    Tape tape;
    BoundParams bound(tape, p, false);
    const Tensor h = lstm_forward(bound, s.lstm, Tensor({2, 50, 1}, 0.0), false, 0).value();
    for (double v : h.values()) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, WrongBatchShapeThrows) {
    const ModelSpec s = lstm_spec(Method::mse, 4, 5);
    const ParameterSet p = init_model(s, 0);
    Tape tape;
    BoundParams bound(tape, p, false);
    EXPECT_THROW(lstm_forward(bound, s.lstm, Tensor({2, 6, 1}, 0.0), false, 0), ContractError);
    EXPECT_THROW(lstm_forward(bound, s.lstm, Tensor({2, 5}, 0.0), false, 0), ContractError);
}

TEST(Lstm, DropoutOnlyWhenTraining) {
    const ModelSpec s = lstm_spec(Method::mse, 16, 10);
    const ParameterSet p = init_model(s, 1);
    const Tensor x = random_batch(4, 10, 2);
    const Tensor a = predict_raw(p, s, x);
    const Tensor b = predict_raw(p, s, x);
    EXPECT_EQ(a.values(), b.values());
    Tape tape;
    BoundParams bound(tape, p, false);
    const Tensor eval_h = lstm_forward(bound, s.lstm, x, false, 3).value();
    const Tensor train_h = lstm_forward(bound, s.lstm, x, true, 3).value();
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < eval_h.size(); ++i) {
        if (train_h[i] == 0.0) {
            ++dropped;
        } else {
            EXPECT_NEAR(train_h[i], eval_h[i] / 0.9, 1e-15);
        }
    }
    EXPECT_GT(dropped, 0u);
}

TEST(Lstm, DropoutMaskValues) {
    const Tensor m = dropout_mask(100, 100, 0.25, 7);
    std::size_t zeros = 0;
    for (double v : m.values()) {
        if (v == 0.0) {
            ++zeros;
        } else {
            EXPECT_DOUBLE_EQ(v, 1.0 / 0.75);
        }
    }
    EXPECT_NEAR(static_cast<double>(zeros) / 1e4, 0.25, 0.02);
}

TEST(Lstm, FusedRecurrenceMatchesPrimitiveComposition) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const ModelSpec s = lstm_spec(Method::mse, 6, 7);
        const ParameterSet p = init_model(s, seed);
        const Tensor x = random_batch(3, 7, seed + 10);
        Rng rng(seed);
        const Tensor w = testkit::random_tensor(3, 6, rng);
        auto run = [&](bool fused) {
            Tape tape;
            BoundParams bound(tape, p, true);
            Var h = fused ? lstm_recurrence(bound["lstm.w_ih"], bound["lstm.w_hh"], bound["lstm.bias"], x)
                          : lstm_recurrence_primitive(bound["lstm.w_ih"], bound["lstm.w_hh"], bound["lstm.bias"], x);
            Var loss = diff::sum(diff::square(h * tape.constant(w)));
            tape.backward(loss);
            std::vector<Tensor> out{h.value()};
            for (std::size_t k = 0; k < 3; ++k) out.push_back(tape.grad(bound.vars()[k]));
            return out;
        };
        const auto fused = run(true), ref = run(false);
        for (std::size_t k = 0; k < fused.size(); ++k) {
            for (std::size_t i = 0; i < fused[k].size(); ++i) EXPECT_NEAR(fused[k][i], ref[k][i], 1e-12);
        }
    }
}

TEST(Head, WidthsAndZeroOutput) {
    HeadSpec h;
    h.method = Method::gaussian_nll;
    EXPECT_EQ(output_dim(h), 2u);
    h.method = Method::quantile;
    h.quantile_levels = {0.05, 0.5, 0.95};
    EXPECT_EQ(output_dim(h), 3u);
    h.method = Method::mixture;
    h.n_components = 3;
    EXPECT_EQ(output_dim(h), 9u);
    const ModelSpec s = lstm_spec(Method::evidential, 4, 3);
    ParameterSet p = init_model(s, 0);
    std::vector<Tensor> zeros;
    for (const auto& t : p.tensors()) zeros.emplace_back(t.shape(), 0.0);
    p.assign(zeros);
    const Tensor raw = predict_raw(p, s, random_batch(2, 3, 1));
    for (double v : raw.values()) EXPECT_EQ(v, 0.0);
}

TEST(Head, InvalidQuantileLevelsRejected) {
    HeadSpec h;
    h.method = Method::quantile;
    h.quantile_levels = {0.5, 0.2};
    EXPECT_THROW(validate(h), ContractError);
    h.quantile_levels = {0.0, 0.5};
    EXPECT_THROW(validate(h), ContractError);
}

TEST(Head, MixtureQuantileInvertsCdf) {
    const std::vector<double> w{0.3, 0.7}, mu{-1.0, 2.0}, sg{0.5, 1.5};
    for (double p : {0.025, 0.3, 0.5, 0.975}) {
        const double q = mixture_quantile(w, mu, sg, p);
        const double cdf = 0.3 * special::normal_cdf((q + 1.0) / 0.5) + 0.7 * special::normal_cdf((q - 2.0) / 1.5);
        EXPECT_NEAR(cdf, p, 1e-10);
    }
}

TEST(Head, SummaryOfEvidentialHead) {
    HeadSpec h;
    const double raw[] = {0.0, 0.0, 0.0, 0.0};
    const auto s = summarize(h, raw, 0.95);
    ASSERT_TRUE(s.nig.has_value());
    EXPECT_NEAR(s.nig->aleatoric + s.nig->epistemic, s.nig->total_variance, 1e-15);
    EXPECT_NEAR(*s.sigma, std::sqrt(s.nig->total_variance), 1e-15);
    EXPECT_TRUE(s.interval.has_value());
}

// Gradient checks of every training objective through the LSTM backbone on a
// two-sample, lookback-5, hidden-4 miniature.
enum class Objective { der_nll, der_reg, soft_coverage, combined };

Var objective_loss(Objective o, const HeadSpec& head, Var raw, Var y) {
    if (head.method != Method::evidential) return diff::mean(baseline_loss(head, raw, y));
    const NigBatch nig = constrain_nig(raw, true, 3.0);
    switch (o) {
        case Objective::der_nll: return diff::mean(der_nll(nig, y));
        case Objective::der_reg: return diff::mean(der_reg(nig, y));
        case Objective::soft_coverage: {
            auto [lo, hi] = predictive_bounds(nig, 0.95);
            return coverage_loss(lo, hi, y, 0.95, 2.0);
        }
        case Objective::combined: {
            CombinedLossWeights w;
            w.lambda_coverage = 0.5;
            w.sharpness_k = 2.0;
            return combined_loss(nig, y, w, 0.7, {}).total;
        }
    }
    return {};
}

// Balances truncation against roundoff for gradient coordinates down to ~1e-9.
constexpr double kLstmStep = 3e-4;

double lstm_grad_error(Method m, Objective o, std::uint64_t seed) {
    const ModelSpec s = lstm_spec(m, 4, 5);
    const ParameterSet p = init_model(s, seed);
    const Tensor x = random_batch(2, 5, seed + 100);
    Rng rng(seed + 200);
    const Tensor y = testkit::random_tensor(2, 1, rng, -1.0, 1.0);
    std::vector<std::string> names;
    for (const auto& e : p) names.push_back(e.name);
    const HeadSpec head = s.head;
    Graph g{names, [=](Tape& tape, std::span<const Var> v) {
                Var h = lstm_recurrence(v[0], v[1], v[2], x);
                Var raw = diff::matmul(h, v[3]) + v[4];
                return objective_loss(o, head, raw, tape.constant(y));
            }};
    return testkit::grad_error(g, p.tensors(), kLstmStep);
}

TEST(LstmGradients, EvidentialObjectives) {
    for (auto o : {Objective::der_nll, Objective::der_reg, Objective::soft_coverage, Objective::combined}) {
        for (std::uint64_t seed = 0; seed < 6; ++seed) {
            EXPECT_LT(lstm_grad_error(Method::evidential, o, seed), 1e-4) << static_cast<int>(o) << " seed " << seed;
        }
    }
}

TEST(LstmGradients, BaselineObjectives) {
    for (Method m : kAllMethods) {
        if (m == Method::evidential) continue;
        for (std::uint64_t seed = 0; seed < 6; ++seed) {
            EXPECT_LT(lstm_grad_error(m, Objective::der_nll, seed), 1e-4) << method_name(m) << " seed " << seed;
        }
    }
}

TEST(LstmGradients, PrimitiveReferencePath) {
    const ModelSpec s = lstm_spec(Method::mse, 4, 5);
    const ParameterSet p = init_model(s, 3);
    const Tensor x = random_batch(2, 5, 4);
    std::vector<std::string> names;
    for (const auto& e : p) names.push_back(e.name);
    Graph g{names, [=](Tape&, std::span<const Var> v) {
                return diff::sum(diff::square(lstm_recurrence_primitive(v[0], v[1], v[2], x)));
            }};
    std::vector<Tensor> params = p.tensors();
    params.resize(3);
    g.parameter_names.resize(3);
    EXPECT_LT(testkit::grad_error(g, params), 1e-4);
}

// --- patch transformer ----------------------------------------------------------------

TEST(Patchformer, PatchSizesByFrequency) {
    EXPECT_EQ(select_patch_sizes(Frequency::monthly), (std::vector<std::size_t>{8, 16, 32}));
    EXPECT_EQ(select_patch_sizes(Frequency::yearly), (std::vector<std::size_t>{8}));
    EXPECT_EQ(select_patch_sizes(Frequency::quarterly), (std::vector<std::size_t>{8}));
    EXPECT_EQ(select_patch_sizes(Frequency::weekly), (std::vector<std::size_t>{16, 32}));
    EXPECT_EQ(select_patch_sizes(Frequency::daily), (std::vector<std::size_t>{16, 32}));
    EXPECT_EQ(select_patch_sizes(Frequency::hourly), (std::vector<std::size_t>{32, 64}));
    EXPECT_EQ(select_patch_sizes(Frequency::minute), (std::vector<std::size_t>{32, 64, 128}));
    EXPECT_EQ(select_patch_sizes(Frequency::second), (std::vector<std::size_t>{64, 128}));
    EXPECT_EQ(choose_patch_size({16, 32}, 50), 32u);
    EXPECT_EQ(choose_patch_size({16, 32}, 20), 16u);
}

TEST(Patchformer, PositionalEncoding) {
    EXPECT_DOUBLE_EQ(positional_encoding(0, 0, 4), 0.0);
    EXPECT_DOUBLE_EQ(positional_encoding(0, 1, 4), 1.0);
    EXPECT_NEAR(positional_encoding(1, 0, 4), 0.841471, 1e-6);
    EXPECT_NEAR(positional_encoding(3, 2, 4), std::sin(3.0 / 100.0), 1e-15);
    EXPECT_NEAR(positional_encoding(3, 3, 4), std::cos(3.0 / std::pow(10000.0, 0.75)), 1e-15);
}

TEST(Patchformer, TokenCounts) {
    EXPECT_EQ(token_count(64, 16), 4u);
    EXPECT_EQ(token_count(50, 16), 4u);
    EXPECT_THROW(make_patches(Tensor({1, 0}), 16), ContractError);
    const Tensor patches = make_patches(Tensor({1, 3}, std::vector<double>{1.0, 2.0, 3.0}), 2);
    EXPECT_EQ(patches.values(), (std::vector<double>{1.0, 1.0, 2.0, 3.0}));
}

TEST(Patchformer, ZeroWeightsGiveTheEncodingItself) {
    PatchformerSpec spec;
    spec.d_model = 4;
    spec.patch_size = 16;
    HeadSpec head;
    head.method = Method::mse;
    ParameterSet p = init_patchformer(spec, head, 0);
    std::vector<Tensor> zeros;
    for (const auto& t : p.tensors()) zeros.emplace_back(t.shape(), 0.0);
    p.assign(zeros);
    Tape tape;
    BoundParams bound(tape, p, false);
    const Tensor e = patch_embed(bound, spec, Tensor({1, 64}, 0.0)).value();
    for (std::size_t t = 0; t < 4; ++t) {
        for (std::size_t d = 0; d < 4; ++d) EXPECT_DOUBLE_EQ(e.at(t, d), positional_encoding(t, d, 4));
    }
}

TEST(Patchformer, AttentionWorkedExamples) {
    Tape tape;
    Var one = tape.constant(Tensor({1, 1}, 1.0));
    EXPECT_DOUBLE_EQ(attention(one, one, one).value()[0], 1.0);
    Var q = tape.constant(Tensor({1, 1}, 0.0));
    Var k = tape.constant(Tensor({2, 1}, 0.0));
    Var v = tape.constant(Tensor({2, 1}, std::vector<double>{1.0, 3.0}));
    EXPECT_DOUBLE_EQ(attention(q, k, v).value()[0], 2.0);
}

TEST(Patchformer, SwigluZeroInput) {
    Tape tape;
    Rng rng(1);
    Var x = tape.constant(Tensor({2, 4}, 0.0));
    Var zero_b = tape.constant(Tensor({1, 6}, 0.0));
    Var w1 = tape.constant(testkit::random_tensor(4, 6, rng));
    Var w3 = tape.constant(testkit::random_tensor(4, 6, rng));
    Var w2 = tape.constant(testkit::random_tensor(6, 4, rng));
    for (double v : swiglu_ffn(x, w1, zero_b, w3, zero_b, w2).value().values()) EXPECT_EQ(v, 0.0);
}

TEST(Patchformer, BlockGradientOnTwoTokens) {
    PatchformerSpec spec;
    spec.d_model = 4;
    spec.n_heads = 2;
    spec.ffn_hidden = 6;
    spec.patch_size = 8;
    spec.lookback = 16;
    HeadSpec head;
    head.method = Method::gaussian_nll;
    const ParameterSet p = init_patchformer(spec, head, 2);
    Rng rng(3);
    Tensor x({2, 16, 1});
    for (auto& v : x.values()) v = rng.normal();
    const Tensor y = testkit::random_tensor(2, 1, rng);
    // BoundParams creates its own leaves, so the check rebuilds the parameter
    // set from the perturbed tensors on every evaluation.
    auto loss_at = [&](const std::vector<Tensor>& values, std::vector<Tensor>* grads) {
        ParameterSet set = p;
        set.assign(values);
        Tape tape;
        BoundParams bound(tape, set, true);
        ModelSpec ms;
        ms.backbone = Backbone::patchformer;
        ms.patchformer = spec;
        ms.head = head;
        Var raw = forward(bound, ms, x, false, 0);
        Var loss = diff::mean(baseline_loss(head, raw, tape.constant(y)));
        if (grads) {
            tape.backward(loss);
            for (const auto& v : bound.vars()) grads->push_back(tape.grad(v));
        }
        return loss.item();
    };
    std::vector<Tensor> values = p.tensors();
    std::vector<Tensor> analytic;
    loss_at(values, &analytic);
    double worst = 0.0;
    const double h = 1e-6;
    for (std::size_t k = 0; k < values.size(); ++k) {
        for (std::size_t i = 0; i < values[k].size(); ++i) {
            const double orig = values[k][i];
            values[k][i] = orig + h;
            const double fp = loss_at(values, nullptr);
            values[k][i] = orig - h;
            const double fm = loss_at(values, nullptr);
            values[k][i] = orig;
            worst = std::max(worst, diff::relative_error(analytic[k][i], (fp - fm) / (2.0 * h)));
        }
    }
    EXPECT_LT(worst, 1e-4);
}

TEST(Patchformer, ForwardShape) {
    ModelSpec ms;
    ms.backbone = Backbone::patchformer;
    ms.patchformer.lookback = 50;
    ms.patchformer.patch_size = 16;
    ms.head.method = Method::evidential;
    const ParameterSet p = init_model(ms, 0);
    Tensor x({3, 50, 1}, 0.1);
    EXPECT_EQ(predict_raw(p, ms, x).shape(), (Tensor::Shape{3, 4}));
}

}  // namespace
}  // namespace nigcast
