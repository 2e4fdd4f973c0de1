#include "nigcast/model.hpp"

#include "nigcast/errors.hpp"

namespace nigcast {

std::string_view backbone_name(Backbone b) { return b == Backbone::lstm ? "lstm" : "patchformer"; }

Backbone parse_backbone(std::string_view name) {
    if (name == "lstm") return Backbone::lstm;
    if (name == "patchformer") return Backbone::patchformer;
    throw ConfigError("unknown backbone '" + std::string(name) + "'");
}

ParameterSet init_model(const ModelSpec& spec, std::uint64_t seed) {
    return spec.backbone == Backbone::lstm ? init_params(spec.lstm, spec.head, seed)
                                           : init_patchformer(spec.patchformer, spec.head, seed);
}

diff::Var forward(const BoundParams& params, const ModelSpec& spec, const diff::Tensor& batch, bool training,
                  std::uint64_t dropout_seed) {
    diff::Var hidden;
    if (spec.backbone == Backbone::lstm) {
        hidden = lstm_forward(params, spec.lstm, batch, training, dropout_seed);
    } else {
        hidden = patchformer_forward(params, spec.patchformer, batch);
    }
    return head_forward(params, hidden);
}

diff::Tensor predict_raw(const ParameterSet& params, const ModelSpec& spec, const diff::Tensor& batch) {
    diff::Tape tape;
    BoundParams bound(tape, params, false);
    return forward(bound, spec, batch, false, 0).value();
}

}  // namespace nigcast
