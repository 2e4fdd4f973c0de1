#include "nigcast/patchformer.hpp"

#include "nigcast/errors.hpp"
#include "nigcast/lstm.hpp"
#include "nigcast/random.hpp"

#include <algorithm>
#include <cmath>

namespace nigcast {

using diff::Tensor;
using diff::Var;

std::string_view frequency_name(Frequency f) {
    switch (f) {
        case Frequency::yearly: return "yearly";
        case Frequency::quarterly: return "quarterly";
        case Frequency::monthly: return "monthly";
        case Frequency::weekly: return "weekly";
        case Frequency::daily: return "daily";
        case Frequency::hourly: return "hourly";
        case Frequency::minute: return "minute";
        case Frequency::second: return "second";
    }
    return "unknown";
}

Frequency parse_frequency(std::string_view name) {
    for (auto f : {Frequency::yearly, Frequency::quarterly, Frequency::monthly, Frequency::weekly, Frequency::daily,
                   Frequency::hourly, Frequency::minute, Frequency::second}) {
        if (frequency_name(f) == name) return f;
    }
    throw ConfigError("unknown frequency '" + std::string(name) + "'");
}

std::vector<std::size_t> select_patch_sizes(Frequency f) {
    switch (f) {
        case Frequency::yearly:
        case Frequency::quarterly: return {8};
        case Frequency::monthly: return {8, 16, 32};
        case Frequency::weekly:
        case Frequency::daily: return {16, 32};
        case Frequency::hourly: return {32, 64};
        case Frequency::minute: return {32, 64, 128};
        case Frequency::second: return {64, 128};
    }
    return {};
}

std::size_t choose_patch_size(const std::vector<std::size_t>& candidates, std::size_t length) {
    if (candidates.empty()) throw ContractError("choose_patch_size: no candidates");
    std::size_t best = 0;
    for (auto p : candidates) {
        if (p <= length && p > best) best = p;
    }
    if (best == 0) {
        best = candidates.front();
        for (auto p : candidates) best = std::min(best, p);
    }
    return best;
}

void validate(const PatchformerSpec& spec) {
    if (spec.d_model == 0 || spec.d_model % 2 != 0) throw ContractError("PatchformerSpec: d_model must be positive and even");
    if (spec.n_heads == 0 || spec.d_model % spec.n_heads != 0) {
        throw ContractError("PatchformerSpec: n_heads must divide d_model");
    }
    if (spec.n_layers == 0 || spec.ffn_hidden == 0 || spec.patch_size == 0 || spec.lookback == 0) {
        throw ContractError("PatchformerSpec: sizes must be positive");
    }
}

std::size_t token_count(std::size_t length, std::size_t patch_size) { return (length + patch_size - 1) / patch_size; }

double positional_encoding(std::size_t t, std::size_t d, std::size_t d_model) {
    if (d >= d_model) throw ContractError("positional_encoding: dimension index out of range");
    const double angle = static_cast<double>(t) /
                         std::pow(10000.0, static_cast<double>(d) / static_cast<double>(d_model));
    return d % 2 == 0 ? std::sin(angle) : std::cos(angle);
}

Tensor make_patches(const Tensor& series, std::size_t patch_size) {
    const std::size_t B = series.rows(), T = series.cols();
    if (T == 0 || series.size() == 0) throw ContractError("make_patches: empty series");
    if (patch_size == 0) throw ContractError("make_patches: patch size must be positive");
    const std::size_t N = token_count(T, patch_size);
    const std::size_t pad = N * patch_size - T;
    Tensor out({B * N, patch_size});
    for (std::size_t b = 0; b < B; ++b) {
        const double first = series.at(b, 0);
        for (std::size_t k = 0; k < N * patch_size; ++k) {
            out[b * N * patch_size + k] = k < pad ? first : series.at(b, k - pad);
        }
    }
    return out;
}

ParameterSet init_patchformer(const PatchformerSpec& spec, const HeadSpec& head, std::uint64_t seed) {
    validate(spec);
    Rng rng(seed);
    const std::size_t D = spec.d_model, F = spec.ffn_hidden, P = spec.patch_size;
    auto uniform = [&rng](std::size_t r, std::size_t c) {
        Tensor t({r, c});
        const double bound = 1.0 / std::sqrt(static_cast<double>(r));
        for (auto& v : t.values()) v = rng.uniform(-bound, bound);
        return t;
    };
    ParameterSet set;
    set.add("embed.weight", uniform(P, D));
    set.add("embed.bias", Tensor({1, D}, 0.0));
    for (std::size_t l = 0; l < spec.n_layers; ++l) {
        const std::string p = "block" + std::to_string(l) + ".";
        set.add(p + "ln1.gain", Tensor({1, D}, 1.0));
        set.add(p + "ln1.bias", Tensor({1, D}, 0.0));
        set.add(p + "attn.wq", uniform(D, D));
        set.add(p + "attn.wk", uniform(D, D));
        set.add(p + "attn.wv", uniform(D, D));
        set.add(p + "attn.wo", uniform(D, D));
        set.add(p + "ln2.gain", Tensor({1, D}, 1.0));
        set.add(p + "ln2.bias", Tensor({1, D}, 0.0));
        set.add(p + "ffn.w1", uniform(D, F));
        set.add(p + "ffn.b1", Tensor({1, F}, 0.0));
        set.add(p + "ffn.w3", uniform(D, F));
        set.add(p + "ffn.b3", Tensor({1, F}, 0.0));
        set.add(p + "ffn.w2", uniform(F, D));
    }
    set.add("final_ln.gain", Tensor({1, D}, 1.0));
    set.add("final_ln.bias", Tensor({1, D}, 0.0));
    add_head_params(set, D, head, rng);
    return set;
}

Var patch_embed(const BoundParams& params, const PatchformerSpec& spec, const Tensor& series) {
    const std::size_t B = series.rows();
    const std::size_t N = token_count(series.cols(), spec.patch_size);
    diff::Tape& tape = *params["embed.weight"].tape();
    Var patches = tape.constant(make_patches(series, spec.patch_size));
    Tensor pe({B * N, spec.d_model});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < N; ++t) {
            for (std::size_t d = 0; d < spec.d_model; ++d) pe.at(b * N + t, d) = positional_encoding(t, d, spec.d_model);
        }
    }
    return diff::matmul(patches, params["embed.weight"]) + params["embed.bias"] + tape.constant(std::move(pe));
}

Var attention(Var q, Var k, Var v) {
    if (q.cols() != k.cols() || k.rows() != v.rows()) throw ContractError("attention: dimension mismatch");
    // Column j of Q K^T is the row-wise dot product of Q with row j of K.
    const std::size_t n = k.rows(), dk = k.cols();
    std::vector<Var> cols;
    cols.reserve(n);
    for (std::size_t j = 0; j < n; ++j) {
        Var kj = diff::slice_rows(k, j, j + 1);  // 1 x dk
        cols.push_back(diff::sum_rows(q * kj));  // nq x 1
    }
    Var scores = diff::concat_cols(cols) * (1.0 / std::sqrt(static_cast<double>(dk)));
    return diff::matmul(diff::softmax(scores), v);
}

Var multi_head_attention(Var x, Var wq, Var wk, Var wv, Var wo, std::size_t n_heads, std::size_t n_tokens) {
    const std::size_t rows = x.rows(), D = x.cols();
    if (n_tokens == 0 || rows % n_tokens != 0) throw ContractError("multi_head_attention: rows not a multiple of tokens");
    if (D % n_heads != 0) throw ContractError("multi_head_attention: heads must divide the model dimension");
    const std::size_t dk = D / n_heads;
    Var q = diff::matmul(x, wq), k = diff::matmul(x, wk), v = diff::matmul(x, wv);
    std::vector<Var> samples;
    for (std::size_t s = 0; s < rows / n_tokens; ++s) {
        const std::size_t r0 = s * n_tokens, r1 = r0 + n_tokens;
        Var qs = diff::slice_rows(q, r0, r1), ks = diff::slice_rows(k, r0, r1), vs = diff::slice_rows(v, r0, r1);
        std::vector<Var> heads;
        for (std::size_t h = 0; h < n_heads; ++h) {
            const std::size_t c0 = h * dk, c1 = c0 + dk;
            heads.push_back(attention(diff::slice_cols(qs, c0, c1), diff::slice_cols(ks, c0, c1),
                                      diff::slice_cols(vs, c0, c1)));
        }
        samples.push_back(n_heads == 1 ? heads[0] : diff::concat_cols(heads));
    }
    Var merged = samples.size() == 1 ? samples[0] : diff::concat_rows(samples);
    return diff::matmul(merged, wo);
}

Var swish(Var x) { return x * diff::sigmoid(x); }

Var swiglu_ffn(Var x, Var w1, Var b1, Var w3, Var b3, Var w2) {
    Var gate = swish(diff::matmul(x, w1) + b1);
    Var value = diff::matmul(x, w3) + b3;
    return diff::matmul(gate * value, w2);
}

Var layer_norm(Var x, Var gain, Var bias) {
    const double inv_d = 1.0 / static_cast<double>(x.cols());
    Var centered = x - diff::sum_rows(x) * inv_d;
    Var var = diff::sum_rows(diff::square(centered)) * inv_d;
    return centered / diff::sqrt(var + 1e-5) * gain + bias;
}

Var patchformer_forward(const BoundParams& params, const PatchformerSpec& spec, const Tensor& batch) {
    validate(spec);
    const auto& shape = batch.shape();
    if (shape.size() != 3 || shape[1] != spec.lookback || shape[2] != 1) {
        throw ContractError("patchformer_forward: expected batch [B x " + std::to_string(spec.lookback) +
                            " x 1], got " + diff::shape_string(shape));
    }
    const std::size_t B = shape[0];
    Tensor series({B, spec.lookback}, std::vector<double>(batch.values()));
    const std::size_t N = token_count(spec.lookback, spec.patch_size);
    Var x = patch_embed(params, spec, series);
    for (std::size_t l = 0; l < spec.n_layers; ++l) {
        const std::string p = "block" + std::to_string(l) + ".";
        Var a = layer_norm(x, params[p + "ln1.gain"], params[p + "ln1.bias"]);
        x = x + multi_head_attention(a, params[p + "attn.wq"], params[p + "attn.wk"], params[p + "attn.wv"],
                                     params[p + "attn.wo"], spec.n_heads, N);
        Var f = layer_norm(x, params[p + "ln2.gain"], params[p + "ln2.bias"]);
        x = x + swiglu_ffn(f, params[p + "ffn.w1"], params[p + "ffn.b1"], params[p + "ffn.w3"], params[p + "ffn.b3"],
                           params[p + "ffn.w2"]);
    }
    x = layer_norm(x, params["final_ln.gain"], params["final_ln.bias"]);
    std::vector<Var> last;
    last.reserve(B);
    for (std::size_t b = 0; b < B; ++b) last.push_back(diff::slice_rows(x, b * N + N - 1, b * N + N));
    return B == 1 ? last[0] : diff::concat_rows(last);
}

}  // namespace nigcast
