#include "nigcast/checkpoint.hpp"

#include "nigcast/errors.hpp"

#include <fstream>

namespace nigcast {

using nlohmann::json;

json to_json(const ModelSpec& spec) {
    json head = {{"method", method_name(spec.head.method)},
                 {"quantile_levels", spec.head.quantile_levels},
                 {"n_components", spec.head.n_components},
                 {"bounded_mean", spec.head.bounded_mean},
                 {"bound_scale", spec.head.bound_scale}};
    json lstm = {{"input_dim", spec.lstm.input_dim},
                 {"hidden_dim", spec.lstm.hidden_dim},
                 {"dropout", spec.lstm.dropout_rate},
                 {"lookback", spec.lstm.lookback}};
    const auto& p = spec.patchformer;
    json pf = {{"d_model", p.d_model},       {"n_heads", p.n_heads},       {"n_layers", p.n_layers},
               {"ffn_hidden", p.ffn_hidden}, {"patch_size", p.patch_size}, {"lookback", p.lookback}};
    return {{"backbone", backbone_name(spec.backbone)}, {"lstm", lstm}, {"patchformer", pf}, {"head", head}};
}

ModelSpec model_spec_from_json(const json& j) {
    ModelSpec s;
    s.backbone = parse_backbone(j.at("backbone").get<std::string>());
    const auto& l = j.at("lstm");
    s.lstm.input_dim = l.at("input_dim").get<std::size_t>();
    s.lstm.hidden_dim = l.at("hidden_dim").get<std::size_t>();
    s.lstm.dropout_rate = l.at("dropout").get<double>();
    s.lstm.lookback = l.at("lookback").get<std::size_t>();
    const auto& p = j.at("patchformer");
    s.patchformer.d_model = p.at("d_model").get<std::size_t>();
    s.patchformer.n_heads = p.at("n_heads").get<std::size_t>();
    s.patchformer.n_layers = p.at("n_layers").get<std::size_t>();
    s.patchformer.ffn_hidden = p.at("ffn_hidden").get<std::size_t>();
    s.patchformer.patch_size = p.at("patch_size").get<std::size_t>();
    s.patchformer.lookback = p.at("lookback").get<std::size_t>();
    const auto& h = j.at("head");
    s.head.method = parse_method(h.at("method").get<std::string>());
    s.head.quantile_levels = h.at("quantile_levels").get<std::vector<double>>();
    s.head.n_components = h.at("n_components").get<std::size_t>();
    s.head.bounded_mean = h.at("bounded_mean").get<bool>();
    s.head.bound_scale = h.at("bound_scale").get<double>();
    return s;
}

json to_json(const ParameterSet& params) {
    json arr = json::array();
    for (const auto& e : params) arr.push_back({{"name", e.name}, {"shape", e.value.shape()}, {"data", e.value.values()}});
    return arr;
}

ParameterSet params_from_json(const json& j) {
    ParameterSet set;
    for (const auto& e : j) {
        auto shape = e.at("shape").get<diff::Tensor::Shape>();
        auto data = e.at("data").get<std::vector<double>>();
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        const auto name = e.at("name").get<std::string>();
        if (n != data.size()) throw DataError("checkpoint parameter " + name + ": shape does not match data length");
        set.add(name, diff::Tensor(std::move(shape), std::move(data)));
    }
    return set;
}

json to_json(const NormStats& s) {
    return {{"symbol", s.symbol},
            {"mean", s.mean},
            {"std", s.std},
            {"lower_clip", s.lower_clip},
            {"upper_clip", s.upper_clip}};
}

NormStats norm_stats_from_json(const json& j) {
    NormStats s;
    s.symbol = j.at("symbol").get<std::string>();
    s.mean = j.at("mean").get<double>();
    s.std = j.at("std").get<double>();
    s.lower_clip = j.at("lower_clip").get<double>();
    s.upper_clip = j.at("upper_clip").get<double>();
    return s;
}

json to_json(const TrainHistory& h) {
    return {{"train_loss", h.train_loss},
            {"val_loss", h.val_loss},
            {"learning_rate", h.learning_rate},
            {"evidence_scale", h.evidence_scale},
            {"best_epoch", h.best_epoch},
            {"epochs_run", h.epochs_run},
            {"total_steps", h.total_steps}};
}

TrainHistory history_from_json(const json& j) {
    TrainHistory h;
    h.train_loss = j.at("train_loss").get<std::vector<double>>();
    h.val_loss = j.at("val_loss").get<std::vector<double>>();
    h.learning_rate = j.at("learning_rate").get<std::vector<double>>();
    h.evidence_scale = j.at("evidence_scale").get<std::vector<double>>();
    h.best_epoch = j.at("best_epoch").get<std::size_t>();
    h.epochs_run = j.at("epochs_run").get<std::size_t>();
    h.total_steps = j.at("total_steps").get<std::uint64_t>();
    return h;
}

json to_json(const Checkpoint& c) {
    json j = {{"format", kCheckpointFormat},
              {"version", kCheckpointVersion},
              {"model", to_json(c.spec)},
              {"params", to_json(c.params)},
              {"norm", nullptr},
              {"calibration_scores", nullptr}};
    if (c.norm) j["norm"] = to_json(*c.norm);
    if (c.calibration) j["calibration_scores"] = c.calibration->scores;
    return j;
}

Checkpoint checkpoint_from_json(const json& j) {
    try {
        if (j.at("format").get<std::string>() != kCheckpointFormat) throw DataError("not a nigcast checkpoint");
        const int version = j.at("version").get<int>();
        if (version != kCheckpointVersion) {
            throw DataError("unsupported checkpoint version " + std::to_string(version));
        }
        Checkpoint c;
        c.spec = model_spec_from_json(j.at("model"));
        c.params = params_from_json(j.at("params"));
        const ParameterSet expected = init_model(c.spec, 0);
        if (expected.size() != c.params.size()) throw DataError("checkpoint parameters do not match the model");
        for (std::size_t i = 0; i < expected.size(); ++i) {
            if (expected[i].name != c.params[i].name || !expected[i].value.same_shape(c.params[i].value)) {
                throw DataError("checkpoint parameter " + c.params[i].name + " does not match the model");
            }
        }
        if (!j.at("norm").is_null()) c.norm = norm_stats_from_json(j.at("norm"));
        if (!j.at("calibration_scores").is_null()) {
            c.calibration = CalibrationSet{j.at("calibration_scores").get<std::vector<double>>()};
        }
        return c;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed checkpoint: ") + e.what());
    }
}

void save_json(const std::filesystem::path& path, const json& j) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

json load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) { save_json(path, to_json(ckpt)); }

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(load_json(path)); }

}  // namespace nigcast
