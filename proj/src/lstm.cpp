#include "nigcast/lstm.hpp"

#include "nigcast/errors.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace nigcast {

using diff::Tensor;
using diff::Var;

void validate(const LstmSpec& spec) {
    if (spec.input_dim < 1) throw ContractError("LstmSpec: input_dim must be >= 1");
    if (spec.hidden_dim < 1) throw ContractError("LstmSpec: hidden_dim must be >= 1");
    if (spec.lookback < 1) throw ContractError("LstmSpec: lookback must be >= 1");
    if (!(spec.dropout_rate >= 0.0 && spec.dropout_rate < 1.0)) {
        throw ContractError("LstmSpec: dropout_rate must lie in [0, 1)");
    }
}

namespace {

Tensor uniform_tensor(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
    Tensor t({rows, cols});
    for (auto& v : t.values()) v = rng.uniform(-bound, bound);
    return t;
}

}  // namespace

void add_head_params(ParameterSet& set, std::size_t in_dim, const HeadSpec& head, Rng& rng) {
    validate(head);
    const std::size_t out = output_dim(head);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    set.add("head.weight", uniform_tensor(in_dim, out, bound, rng));
    set.add("head.bias", Tensor({1, out}, 0.0));
}

ParameterSet init_params(const LstmSpec& spec, const HeadSpec& head, std::uint64_t seed) {
    validate(spec);
    Rng rng(seed);
    const std::size_t H = spec.hidden_dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(H));
    ParameterSet set;
    set.add("lstm.w_ih", uniform_tensor(spec.input_dim, 4 * H, bound, rng));
    set.add("lstm.w_hh", uniform_tensor(H, 4 * H, bound, rng));
    Tensor bias({1, 4 * H}, 0.0);
    for (std::size_t j = H; j < 2 * H; ++j) bias[j] = 1.0;
    set.add("lstm.bias", std::move(bias));
    add_head_params(set, H, head, rng);
    return set;
}

Tensor dropout_mask(std::size_t rows, std::size_t cols, double rate, std::uint64_t seed) {
    Tensor mask({rows, cols}, 1.0);
    if (rate <= 0.0) return mask;
    Rng rng(seed);
    const double keep = 1.0 / (1.0 - rate);
    for (auto& v : mask.values()) v = rng.uniform() < rate ? 0.0 : keep;
    return mask;
}

namespace {

void check_batch(const LstmSpec& spec, const Tensor& batch) {
    const auto& shape = batch.shape();
    if (shape.size() != 3 || shape[1] != spec.lookback || shape[2] != spec.input_dim) {
        throw ContractError("lstm_forward: expected batch [B x " + std::to_string(spec.lookback) + " x " +
                            std::to_string(spec.input_dim) + "], got " + diff::shape_string(shape));
    }
    if (!batch.all_finite()) throw ContractError("lstm_forward: non-finite input");
    if (shape[0] == 0) throw ContractError("lstm_forward: empty batch");
}

}  // namespace

Var lstm_recurrence(Var w_ih, Var w_hh, Var bias, const Tensor& batch) {
    const auto& shape = batch.shape();
    const std::size_t B = shape[0], T = shape[1], D = shape[2];
    const std::size_t H4 = w_hh.cols(), H = H4 / 4;
    if (w_hh.rows() != H || H4 != 4 * H || w_ih.rows() != D || w_ih.cols() != H4 || bias.rows() != 1 ||
        bias.cols() != H4) {
        throw ContractError("lstm_recurrence: parameter shapes do not match the batch");
    }
    diff::Tape& tape = *w_ih.tape();

    // Per step: activated gates [B x 4H] (i, f, g, o), the cell state and its tanh.
    auto gates = std::make_shared<std::vector<double>>(T * B * H4);
    auto cells = std::make_shared<std::vector<double>>(T * B * H);
    auto tanh_cells = std::make_shared<std::vector<double>>(T * B * H);
    auto hiddens = std::make_shared<std::vector<double>>(T * B * H);
    const double* Wi = w_ih.value().data().data();
    const double* Wh = w_hh.value().data().data();
    const double* bv = bias.value().data().data();
    const double* X = batch.data().data();
    std::vector<double> pre(B * H4);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t b = 0; b < B; ++b) {
            double* row = pre.data() + b * H4;
            std::copy_n(bv, H4, row);
            for (std::size_t k = 0; k < D; ++k) {
                const double x = X[(b * T + t) * D + k];
                const double* w = Wi + k * H4;
                for (std::size_t j = 0; j < H4; ++j) row[j] += x * w[j];
            }
            if (t > 0) {
                const double* hp = hiddens->data() + ((t - 1) * B + b) * H;
                for (std::size_t p = 0; p < H; ++p) {
                    const double x = hp[p];
                    const double* w = Wh + p * H4;
                    for (std::size_t j = 0; j < H4; ++j) row[j] += x * w[j];
                }
            }
        }
        double* G = gates->data() + t * B * H4;
        double* C = cells->data() + t * B * H;
        double* TC = tanh_cells->data() + t * B * H;
        double* Hs = hiddens->data() + t * B * H;
        for (std::size_t b = 0; b < B; ++b) {
            const double* a = pre.data() + b * H4;
            double* g = G + b * H4;
            for (std::size_t j = 0; j < 2 * H; ++j) g[j] = 1.0 / (1.0 + std::exp(-a[j]));
            for (std::size_t j = 2 * H; j < 3 * H; ++j) g[j] = 2.0 / (1.0 + std::exp(-2.0 * a[j])) - 1.0;
            for (std::size_t j = 3 * H; j < H4; ++j) g[j] = 1.0 / (1.0 + std::exp(-a[j]));
            double* c = C + b * H;
            if (t > 0) {
                const double* cp = cells->data() + ((t - 1) * B + b) * H;
                for (std::size_t j = 0; j < H; ++j) c[j] = g[H + j] * cp[j] + g[j] * g[2 * H + j];
            } else {
                for (std::size_t j = 0; j < H; ++j) c[j] = g[j] * g[2 * H + j];
            }
            double* tc = TC + b * H;
            for (std::size_t j = 0; j < H; ++j) tc[j] = 2.0 / (1.0 + std::exp(-2.0 * c[j])) - 1.0;
            double* h = Hs + b * H;
            for (std::size_t j = 0; j < H; ++j) h[j] = g[3 * H + j] * tc[j];
        }
    }
    Tensor out({B, H});
    std::copy_n(hiddens->data() + (T - 1) * B * H, B * H, out.data().data());

    const std::size_t ii = w_ih.id(), ih = w_hh.id(), ib = bias.id();
    return tape.record(
        "lstm_recurrence", std::move(out), {ii, ih, ib},
        [=, input = batch](diff::Tape& tp, const Tensor& grad) {
            const double* Whh = tp.value(ih).data().data();
            const double* Xs = input.data().data();
            const bool need_ih = tp.requires_grad(ii), need_hh = tp.requires_grad(ih), need_b = tp.requires_grad(ib);
            double* dWi = need_ih ? tp.grad_buffer(ii).data().data() : nullptr;
            double* dWh = need_hh ? tp.grad_buffer(ih).data().data() : nullptr;
            double* db = need_b ? tp.grad_buffer(ib).data().data() : nullptr;
            std::vector<double> dh(grad.values()), dc(B * H, 0.0), dpre(B * H4), dh_prev(B * H), zeros(B * H, 0.0);
            for (std::size_t t = T; t-- > 0;) {
                const double* G = gates->data() + t * B * H4;
                const double* TC = tanh_cells->data() + t * B * H;
                const double* CP = t > 0 ? cells->data() + (t - 1) * B * H : zeros.data();
                for (std::size_t b = 0; b < B; ++b) {
                    const double* i_g = G + b * H4;
                    const double* f_g = i_g + H;
                    const double* c_g = i_g + 2 * H;
                    const double* o_g = i_g + 3 * H;
                    const double* tc = TC + b * H;
                    const double* cp = CP + b * H;
                    const double* dhb = dh.data() + b * H;
                    double* dcb = dc.data() + b * H;
                    double* d = dpre.data() + b * H4;
                    for (std::size_t j = 0; j < H; ++j) {
                        const double dcell = dcb[j] + dhb[j] * o_g[j] * (1.0 - tc[j] * tc[j]);
                        d[j] = dcell * c_g[j] * i_g[j] * (1.0 - i_g[j]);
                        d[H + j] = dcell * cp[j] * f_g[j] * (1.0 - f_g[j]);
                        d[2 * H + j] = dcell * i_g[j] * (1.0 - c_g[j] * c_g[j]);
                        d[3 * H + j] = dhb[j] * tc[j] * o_g[j] * (1.0 - o_g[j]);
                        dcb[j] = dcell * f_g[j];
                    }
                }
                for (std::size_t b = 0; b < B; ++b) {
                    const double* d = dpre.data() + b * H4;
                    if (db) {
                        for (std::size_t j = 0; j < H4; ++j) db[j] += d[j];
                    }
                    if (dWi) {
                        for (std::size_t k = 0; k < D; ++k) {
                            const double x = Xs[(b * T + t) * D + k];
                            double* w = dWi + k * H4;
                            for (std::size_t j = 0; j < H4; ++j) w[j] += x * d[j];
                        }
                    }
                }
                if (t == 0) break;
                const double* hp = hiddens->data() + (t - 1) * B * H;
                for (std::size_t b = 0; b < B; ++b) {
                    const double* d = dpre.data() + b * H4;
                    if (dWh) {
                        for (std::size_t p = 0; p < H; ++p) {
                            const double x = hp[b * H + p];
                            double* w = dWh + p * H4;
                            for (std::size_t j = 0; j < H4; ++j) w[j] += x * d[j];
                        }
                    }
                    for (std::size_t p = 0; p < H; ++p) {
                        const double* w = Whh + p * H4;
                        double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
                        std::size_t j = 0;
                        for (; j + 4 <= H4; j += 4) {
                            s0 += d[j] * w[j];
                            s1 += d[j + 1] * w[j + 1];
                            s2 += d[j + 2] * w[j + 2];
                            s3 += d[j + 3] * w[j + 3];
                        }
                        for (; j < H4; ++j) s0 += d[j] * w[j];
                        dh_prev[b * H + p] = (s0 + s1) + (s2 + s3);
                    }
                }
                dh.swap(dh_prev);
            }
        });
}

Var lstm_recurrence_primitive(Var w_ih, Var w_hh, Var bias, const Tensor& batch) {
    const auto& shape = batch.shape();
    const std::size_t B = shape[0], T = shape[1], D = shape[2], H = w_hh.rows();
    diff::Tape& tape = *w_ih.tape();
    Var h, c;
    for (std::size_t t = 0; t < T; ++t) {
        Tensor x({B, D});
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t k = 0; k < D; ++k) x.at(b, k) = batch[(b * T + t) * D + k];
        }
        Var gates = diff::matmul(tape.constant(std::move(x)), w_ih) + bias;
        if (t > 0) gates = gates + diff::matmul(h, w_hh);  // h_0 = 0
        Var i_gate = diff::sigmoid(diff::slice_cols(gates, 0, H));
        Var f_gate = diff::sigmoid(diff::slice_cols(gates, H, 2 * H));
        Var g_gate = diff::tanh(diff::slice_cols(gates, 2 * H, 3 * H));
        Var o_gate = diff::sigmoid(diff::slice_cols(gates, 3 * H, 4 * H));
        c = t > 0 ? f_gate * c + i_gate * g_gate : i_gate * g_gate;  // c_0 = 0
        h = o_gate * diff::tanh(c);
    }
    return h;
}

Var lstm_forward(const BoundParams& params, const LstmSpec& spec, const Tensor& batch, bool training,
                 std::uint64_t dropout_seed) {
    check_batch(spec, batch);
    Var h = lstm_recurrence(params["lstm.w_ih"], params["lstm.w_hh"], params["lstm.bias"], batch);
    if (training && spec.dropout_rate > 0.0) {
        h = h * h.tape()->constant(dropout_mask(batch.shape()[0], spec.hidden_dim, spec.dropout_rate, dropout_seed));
    }
    return h;
}

Var head_forward(const BoundParams& params, Var hidden) {
    return diff::matmul(hidden, params["head.weight"]) + params["head.bias"];
}

}  // namespace nigcast
