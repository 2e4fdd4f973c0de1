#pragma once

#include "nigcast/diffkit.hpp"
#include "nigcast/head.hpp"
#include "nigcast/params.hpp"
#include "nigcast/random.hpp"

#include <cstdint>

namespace nigcast {

struct LstmSpec {
    std::size_t input_dim = 1;
    std::size_t hidden_dim = 32;
    double dropout_rate = 0.1;
    std::size_t lookback = 50;
};

void validate(const LstmSpec& spec);

/// Gate weights are packed column-wise in the order input, forget, cell, output:
///   lstm.w_ih [input x 4H], lstm.w_hh [H x 4H], lstm.bias [1 x 4H],
///   head.weight [H x out], head.bias [1 x out].
/// Weights ~ U(-1/sqrt(H), 1/sqrt(H)); biases zero except the forget gate (1.0).
ParameterSet init_params(const LstmSpec& spec, const HeadSpec& head, std::uint64_t seed);

/// Final hidden state h_T (B x H) of a single-layer LSTM over `batch` [B x T x input].
/// Inverted dropout on h_T when `training` is set.
diff::Var lstm_forward(const BoundParams& params, const LstmSpec& spec, const diff::Tensor& batch, bool training,
                       std::uint64_t dropout_seed);

/// Final hidden state of the recurrence as one fused node with a hand-written
/// backward pass through time; h_0 = c_0 = 0.
diff::Var lstm_recurrence(diff::Var w_ih, diff::Var w_hh, diff::Var bias, const diff::Tensor& batch);
/// The same recurrence composed from diffkit primitives, kept as a reference.
diff::Var lstm_recurrence_primitive(diff::Var w_ih, diff::Var w_hh, diff::Var bias, const diff::Tensor& batch);

/// Affine head: hidden (B x H) -> raw outputs (B x out).
diff::Var head_forward(const BoundParams& params, diff::Var hidden);

/// Inverted-dropout mask (values 0 or 1/(1-rate)).
diff::Tensor dropout_mask(std::size_t rows, std::size_t cols, double rate, std::uint64_t seed);

/// Appends head.weight/head.bias for an input of width `in_dim`.
void add_head_params(ParameterSet& set, std::size_t in_dim, const HeadSpec& head, Rng& rng);

}  // namespace nigcast
