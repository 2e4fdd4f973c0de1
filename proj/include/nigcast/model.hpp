#pragma once

#include "nigcast/head.hpp"
#include "nigcast/lstm.hpp"
#include "nigcast/patchformer.hpp"

#include <cstdint>
#include <string_view>

namespace nigcast {

enum class Backbone { lstm, patchformer };

std::string_view backbone_name(Backbone b);
Backbone parse_backbone(std::string_view name);

/// Backbone choice plus output head; the full description of a trainable forecaster.
struct ModelSpec {
    Backbone backbone = Backbone::lstm;
    LstmSpec lstm;
    PatchformerSpec patchformer;
    HeadSpec head;

    std::size_t lookback() const noexcept {
        return backbone == Backbone::lstm ? lstm.lookback : patchformer.lookback;
    }
};

ParameterSet init_model(const ModelSpec& spec, std::uint64_t seed);

/// Raw head outputs (B x output_dim) for a batch [B x lookback x input].
diff::Var forward(const BoundParams& params, const ModelSpec& spec, const diff::Tensor& batch, bool training,
                  std::uint64_t dropout_seed);

/// Inference without gradients: raw outputs as a plain tensor.
diff::Tensor predict_raw(const ParameterSet& params, const ModelSpec& spec, const diff::Tensor& batch);

}  // namespace nigcast
