#pragma once

// Toy-scale patch transformer backbone: frequency-keyed patch sizes, linear
// patch embedding plus sinusoidal positions, pre-norm attention blocks with a
// SwiGLU feed-forward. The last token's representation feeds the head.

#include "nigcast/diffkit.hpp"
#include "nigcast/head.hpp"
#include "nigcast/params.hpp"

#include <cstdint>
#include <string_view>
#include <vector>

namespace nigcast {

enum class Frequency { yearly, quarterly, monthly, weekly, daily, hourly, minute, second };

std::string_view frequency_name(Frequency f);
Frequency parse_frequency(std::string_view name);

/// Candidate patch sizes for a sampling frequency.
std::vector<std::size_t> select_patch_sizes(Frequency f);

/// Largest candidate not exceeding the series length (smallest candidate if none fits).
std::size_t choose_patch_size(const std::vector<std::size_t>& candidates, std::size_t length);

struct PatchformerSpec {
    std::size_t d_model = 16;
    std::size_t n_heads = 2;
    std::size_t n_layers = 1;
    std::size_t ffn_hidden = 32;
    std::size_t patch_size = 16;
    std::size_t lookback = 50;
};

void validate(const PatchformerSpec& spec);

/// Number of tokens after left-padding the series up to a multiple of the patch size.
std::size_t token_count(std::size_t length, std::size_t patch_size);

/// sin(t / 10000^(d/d_model)) for even d, cos(...) for odd d.
double positional_encoding(std::size_t t, std::size_t d, std::size_t d_model);

/// Non-overlapping patches of each row of `series` [B x T], left-padded with
/// the row's first value. Result is [B*N x patch_size], sample-major.
diff::Tensor make_patches(const diff::Tensor& series, std::size_t patch_size);

ParameterSet init_patchformer(const PatchformerSpec& spec, const HeadSpec& head, std::uint64_t seed);

/// Linear projection of the patches plus positional encoding: [B*N x d_model].
diff::Var patch_embed(const BoundParams& params, const PatchformerSpec& spec, const diff::Tensor& series);

/// softmax(Q K^T / sqrt(d_k)) V for one sequence (n x d_k each).
diff::Var attention(diff::Var q, diff::Var k, diff::Var v);

/// Heads split the model dimension evenly; sequences are blocks of `n_tokens` rows.
diff::Var multi_head_attention(diff::Var x, diff::Var wq, diff::Var wk, diff::Var wv, diff::Var wo,
                               std::size_t n_heads, std::size_t n_tokens);

diff::Var swish(diff::Var x);

/// W2 (swish(W1 x + b1) * (W3 x + b3)), applied row-wise.
diff::Var swiglu_ffn(diff::Var x, diff::Var w1, diff::Var b1, diff::Var w3, diff::Var b3, diff::Var w2);

diff::Var layer_norm(diff::Var x, diff::Var gain, diff::Var bias);

/// Representation of the final token of each sample: [B x d_model].
diff::Var patchformer_forward(const BoundParams& params, const PatchformerSpec& spec, const diff::Tensor& batch);

}  // namespace nigcast
