#include "nigcast/experiment.hpp"

#include "nigcast/errors.hpp"
#include "nigcast/report.hpp"
#include "nigcast/special.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace nigcast {

using nlohmann::json;

namespace {

// A symbol whose history is too short to form any training window.
class InsufficientData : public DataError {
public:
    using DataError::DataError;
};

template <typename T>
T read_key(const json& j, const std::string& key) {
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type");
    }
}

json to_jnum(const Maybe& v) {
    if (!v) return nullptr;
    if (std::isnan(*v)) return "NaN";
    if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
    return *v;
}

Maybe from_jnum(const json& j) {
    if (j.is_null()) return std::nullopt;
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        return std::numeric_limits<double>::quiet_NaN();
    }
    return j.get<double>();
}

}  // namespace

// --- configuration ------------------------------------------------------------

ExperimentConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    ExperimentConfig c;
    auto& t = c.train;
    auto& w = t.loss_weights;
    using Setter = std::function<void(const json&, const std::string&)>;
    const std::map<std::string, Setter> setters = {
        {"data_path",
         [&](const json& v, const std::string& k) {
             if (v.is_null()) {
                 c.data_path.reset();
             } else {
                 c.data_path = read_key<std::string>(v, k);
             }
         }},
        {"synthetic",
         [&](const json& v, const std::string& k) {
             if (!v.is_object()) throw ConfigError("config key 'synthetic' must be an object");
             for (const auto& [sk, sv] : v.items()) {
                 const auto key = k + "." + sk;
                 if (sk == "kind") {
                     c.synthetic.kind = parse_synthetic_kind(read_key<std::string>(sv, key));
                 } else if (sk == "symbols") {
                     c.synthetic.n_symbols = read_key<std::size_t>(sv, key);
                 } else if (sk == "days") {
                     c.synthetic.n_days = read_key<std::size_t>(sv, key);
                 } else if (sk == "start") {
                     c.synthetic.start = parse_date(read_key<std::string>(sv, key));
                 } else {
                     throw ConfigError("unknown config key '" + key + "'");
                 }
             }
         }},
        {"temporal_split_cutoff",
         [&](const json& v, const std::string& k) { c.cutoff = parse_date(read_key<std::string>(v, k)); }},
        {"validation_split", [&](const json& v, const std::string& k) { c.val_fraction = read_key<double>(v, k); }},
        {"methods",
         [&](const json& v, const std::string& k) {
             c.methods.clear();
             for (const auto& m : read_key<std::vector<std::string>>(v, k)) c.methods.push_back(parse_method(m));
         }},
        {"symbols",
         [&](const json& v, const std::string& k) { c.symbols = read_key<std::vector<std::string>>(v, k); }},
        {"backbone",
         [&](const json& v, const std::string& k) { c.model.backbone = parse_backbone(read_key<std::string>(v, k)); }},
        {"frequency",
         [&](const json& v, const std::string& k) { c.frequency = parse_frequency(read_key<std::string>(v, k)); }},
        {"lookback",
         [&](const json& v, const std::string& k) {
             c.model.lstm.lookback = c.model.patchformer.lookback = read_key<std::size_t>(v, k);
         }},
        {"hidden_dim", [&](const json& v, const std::string& k) { c.model.lstm.hidden_dim = read_key<std::size_t>(v, k); }},
        {"dropout", [&](const json& v, const std::string& k) { c.model.lstm.dropout_rate = read_key<double>(v, k); }},
        {"patchformer",
         [&](const json& v, const std::string& k) {
             if (!v.is_object()) throw ConfigError("config key 'patchformer' must be an object");
             auto& p = c.model.patchformer;
             for (const auto& [pk, pv] : v.items()) {
                 const auto key = k + "." + pk;
                 if (pk == "d_model") {
                     p.d_model = read_key<std::size_t>(pv, key);
                 } else if (pk == "n_heads") {
                     p.n_heads = read_key<std::size_t>(pv, key);
                 } else if (pk == "n_layers") {
                     p.n_layers = read_key<std::size_t>(pv, key);
                 } else if (pk == "ffn_hidden") {
                     p.ffn_hidden = read_key<std::size_t>(pv, key);
                 } else {
                     throw ConfigError("unknown config key '" + key + "'");
                 }
             }
         }},
        {"learning_rate", [&](const json& v, const std::string& k) { t.learning_rate = read_key<double>(v, k); }},
        {"batch_size", [&](const json& v, const std::string& k) { t.batch_size = read_key<std::size_t>(v, k); }},
        {"max_epochs", [&](const json& v, const std::string& k) { t.max_epochs = read_key<std::size_t>(v, k); }},
        {"early_stopping_patience",
         [&](const json& v, const std::string& k) { t.patience = read_key<std::size_t>(v, k); }},
        {"gradient_clip_max_norm", [&](const json& v, const std::string& k) { t.clip_max_norm = read_key<double>(v, k); }},
        {"weight_decay", [&](const json& v, const std::string& k) { t.weight_decay = w.lambda_wd = read_key<double>(v, k); }},
        {"warmup_fraction", [&](const json& v, const std::string& k) { t.warmup_fraction = read_key<double>(v, k); }},
        {"anneal_fraction", [&](const json& v, const std::string& k) { t.anneal_fraction = read_key<double>(v, k); }},
        {"adam_betas",
         [&](const json& v, const std::string& k) {
             const auto b = read_key<std::vector<double>>(v, k);
             if (b.size() != 2) throw ConfigError("config key 'adam_betas' needs two values");
             t.beta1 = b[0];
             t.beta2 = b[1];
         }},
        {"adam_epsilon", [&](const json& v, const std::string& k) { t.epsilon = read_key<double>(v, k); }},
        {"seed", [&](const json& v, const std::string& k) { t.seed = read_key<std::uint64_t>(v, k); }},
        {"lambda_evd", [&](const json& v, const std::string& k) { w.lambda_evd = read_key<double>(v, k); }},
        {"lambda_coverage", [&](const json& v, const std::string& k) { w.lambda_coverage = read_key<double>(v, k); }},
        {"target_picp", [&](const json& v, const std::string& k) { w.target_picp = read_key<double>(v, k); }},
        {"coverage_sharpness", [&](const json& v, const std::string& k) { w.sharpness_k = read_key<double>(v, k); }},
        {"l2_in_loss", [&](const json& v, const std::string& k) { t.l2_in_loss = read_key<bool>(v, k); }},
        {"huber_delta", [&](const json& v, const std::string& k) { t.loss_options.huber_delta = read_key<double>(v, k); }},
        {"bounded_predictions", [&](const json& v, const std::string& k) { c.bounded_predictions = read_key<bool>(v, k); }},
        {"bound_scale", [&](const json& v, const std::string& k) { c.model.head.bound_scale = read_key<double>(v, k); }},
        {"quantile_levels",
         [&](const json& v, const std::string& k) { c.model.head.quantile_levels = read_key<std::vector<double>>(v, k); }},
        {"mixture_components",
         [&](const json& v, const std::string& k) { c.model.head.n_components = read_key<std::size_t>(v, k); }},
        {"interval_level", [&](const json& v, const std::string& k) { c.interval_level = read_key<double>(v, k); }},
        {"crps_mode",
         [&](const json& v, const std::string& k) {
             const auto m = read_key<std::string>(v, k);
             if (m == "gaussian") {
                 c.crps_mode = CrpsMode::gaussian;
             } else if (m == "student_t") {
                 c.crps_mode = CrpsMode::student_t;
             } else {
                 throw ConfigError("crps_mode must be 'gaussian' or 'student_t'");
             }
         }},
        {"uncertainty_threshold_percentile",
         [&](const json& v, const std::string& k) { c.uncertainty_percentile = read_key<double>(v, k); }},
        {"conformal",
         [&](const json& v, const std::string& k) {
             if (!v.is_object()) throw ConfigError("config key 'conformal' must be an object");
             for (const auto& [ck, cv] : v.items()) {
                 const auto key = k + "." + ck;
                 if (ck == "alpha") {
                     c.conformal.alpha = read_key<double>(cv, key);
                 } else if (ck == "gamma") {
                     c.conformal.gamma = read_key<double>(cv, key);
                 } else if (ck == "adaptive") {
                     c.conformal.adaptive = read_key<bool>(cv, key);
                 } else {
                     throw ConfigError("unknown config key '" + key + "'");
                 }
             }
         }},
        {"output_dir", [&](const json& v, const std::string& k) { c.output_dir = read_key<std::string>(v, k); }},
        {"report_formats",
         [&](const json& v, const std::string& k) { c.report_formats = read_key<std::vector<std::string>>(v, k); }},
        {"workers", [&](const json& v, const std::string& k) { c.workers = read_key<std::size_t>(v, k); }},
    };
    for (const auto& [key, value] : j.items()) {
        const auto it = setters.find(key);
        if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
        try {
            it->second(value, key);
        } catch (const DataError& e) {
            throw ConfigError("config key '" + key + "': " + e.what());
        }
    }
    validate(c);
    return c;
}

json to_json(const ExperimentConfig& c) {
    std::vector<std::string> methods;
    for (auto m : c.methods) methods.emplace_back(method_name(m));
    const auto& t = c.train;
    const auto& w = t.loss_weights;
    const auto& p = c.model.patchformer;
    return {
        {"data_path", c.data_path ? json(c.data_path->string()) : json(nullptr)},
        {"synthetic",
         {{"kind", synthetic_kind_name(c.synthetic.kind)},
          {"symbols", c.synthetic.n_symbols},
          {"days", c.synthetic.n_days},
          {"start", format_date(c.synthetic.start)}}},
        {"temporal_split_cutoff", format_date(c.cutoff)},
        {"validation_split", c.val_fraction},
        {"methods", methods},
        {"symbols", c.symbols},
        {"backbone", backbone_name(c.model.backbone)},
        {"frequency", frequency_name(c.frequency)},
        {"lookback", c.model.lstm.lookback},
        {"hidden_dim", c.model.lstm.hidden_dim},
        {"dropout", c.model.lstm.dropout_rate},
        {"patchformer", {{"d_model", p.d_model}, {"n_heads", p.n_heads}, {"n_layers", p.n_layers}, {"ffn_hidden", p.ffn_hidden}}},
        {"learning_rate", t.learning_rate},
        {"batch_size", t.batch_size},
        {"max_epochs", t.max_epochs},
        {"early_stopping_patience", t.patience},
        {"gradient_clip_max_norm", t.clip_max_norm},
        {"weight_decay", t.weight_decay},
        {"warmup_fraction", t.warmup_fraction},
        {"anneal_fraction", t.anneal_fraction},
        {"adam_betas", {t.beta1, t.beta2}},
        {"adam_epsilon", t.epsilon},
        {"seed", t.seed},
        {"lambda_evd", w.lambda_evd},
        {"lambda_coverage", w.lambda_coverage},
        {"target_picp", w.target_picp},
        {"coverage_sharpness", w.sharpness_k},
        {"l2_in_loss", t.l2_in_loss},
        {"huber_delta", t.loss_options.huber_delta},
        {"bounded_predictions", c.bounded_predictions},
        {"bound_scale", c.model.head.bound_scale},
        {"quantile_levels", c.model.head.quantile_levels},
        {"mixture_components", c.model.head.n_components},
        {"interval_level", c.interval_level},
        {"crps_mode", c.crps_mode == CrpsMode::gaussian ? "gaussian" : "student_t"},
        {"uncertainty_threshold_percentile", c.uncertainty_percentile},
        {"conformal", {{"alpha", c.conformal.alpha}, {"gamma", c.conformal.gamma}, {"adaptive", c.conformal.adaptive}}},
        {"output_dir", c.output_dir.string()},
        {"report_formats", c.report_formats},
        {"workers", c.workers},
    };
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

void validate(const ExperimentConfig& c) {
    try {
        validate(c.train);
        validate(c.model.lstm);
        validate(c.model.patchformer);
        for (auto m : c.methods) validate(cell_model_spec(c, m).head);
    } catch (const ContractError& e) {
        throw ConfigError(e.what());
    }
    if (c.methods.empty()) throw ConfigError("methods must not be empty");
    for (std::size_t i = 0; i < c.methods.size(); ++i) {
        for (std::size_t k = 0; k < i; ++k) {
            if (c.methods[i] == c.methods[k]) throw ConfigError("duplicate method " + std::string(method_name(c.methods[i])));
        }
    }
    if (!(c.val_fraction > 0.0 && c.val_fraction < 1.0)) throw ConfigError("validation_split must lie in (0, 1)");
    if (!(c.interval_level > 0.0 && c.interval_level < 1.0)) throw ConfigError("interval_level must lie in (0, 1)");
    if (!(c.uncertainty_percentile >= 0.0 && c.uncertainty_percentile <= 100.0)) {
        throw ConfigError("uncertainty_threshold_percentile must lie in [0, 100]");
    }
    if (!(c.conformal.alpha > 0.0 && c.conformal.alpha < 1.0)) throw ConfigError("conformal.alpha must lie in (0, 1)");
    if (!(c.conformal.gamma >= 0.0)) throw ConfigError("conformal.gamma must be nonnegative");
    if (!(c.model.head.bound_scale > 0.0)) throw ConfigError("bound_scale must be positive");
    if (!c.data_path) {
        if (c.synthetic.n_symbols == 0) throw ConfigError("synthetic.symbols must be positive");
        if (c.synthetic.n_days < 100) throw ConfigError("synthetic.days must be at least 100");
        if (c.synthetic.kind == SyntheticKind::heteroscedastic_cubic) {
            throw ConfigError("synthetic.kind heteroscedastic_cubic has no price series");
        }
    }
    for (const auto& f : c.report_formats) {
        if (f != "csv" && f != "json") throw ConfigError("unknown report format '" + f + "'");
    }
}

// --- data ---------------------------------------------------------------------

namespace {

std::string synthetic_symbol(std::size_t i) {
    std::ostringstream os;
    os << "SYM" << std::setw(2) << std::setfill('0') << i + 1;
    return os.str();
}

}  // namespace

std::vector<PriceSeries> load_inputs(const ExperimentConfig& cfg) {
    std::vector<PriceSeries> all;
    if (cfg.data_path) {
        if (!std::filesystem::exists(*cfg.data_path)) throw ConfigError("data file " + cfg.data_path->string() + " does not exist");
        all = load_prices(*cfg.data_path);
    } else {
        for (std::size_t i = 0; i < cfg.synthetic.n_symbols; ++i) {
            all.push_back(gen_synthetic_prices(cfg.synthetic.kind, synthetic_symbol(i), cfg.synthetic.n_days,
                                               cfg.train.seed * 1000003ULL + 7919ULL * (i + 1), cfg.synthetic.start));
        }
    }
    if (cfg.symbols.empty()) return all;
    std::vector<PriceSeries> picked;
    for (const auto& s : cfg.symbols) {
        const auto it = std::find_if(all.begin(), all.end(), [&](const PriceSeries& p) { return p.symbol == s; });
        if (it == all.end()) throw ConfigError("symbol " + s + " not found in the data");
        picked.push_back(*it);
    }
    return picked;
}

SymbolData prepare_symbol(const PriceSeries& prices, const ExperimentConfig& cfg) {
    const std::size_t L = cfg.model.lookback();
    const auto returns = log_returns(prices);
    const auto split = temporal_split(returns, cfg.cutoff, cfg.val_fraction);
    const auto norm = fit_and_apply_norm(split);
    const auto& seg = norm.segments;

    SymbolData d;
    d.symbol = prices.symbol;
    d.stats = norm.stats;
    d.train = make_sequences(seg.train.values, L);
    if (d.train.size() == 0) {
        throw InsufficientData("symbol " + prices.symbol + ": training segment of " + std::to_string(seg.train.size()) +
                               " returns is not longer than the lookback " + std::to_string(L));
    }
    d.val = make_sequences(seg.val.values, L, seg.train.values);
    std::vector<double> history = seg.train.values;
    history.insert(history.end(), seg.val.values.begin(), seg.val.values.end());
    d.test = make_sequences(seg.test.values, L, history);
    d.val_dates = split.val.dates;
    d.val_actual = split.val.values;
    d.test_dates = split.test.dates;
    d.test_actual = split.test.values;
    return d;
}

// --- cells ----------------------------------------------------------------------

ModelSpec cell_model_spec(const ExperimentConfig& cfg, Method method) {
    ModelSpec spec = cfg.model;
    spec.head.method = method;
    spec.head.bounded_mean = cfg.bounded_predictions && method == Method::evidential;
    if (spec.backbone == Backbone::patchformer) {
        spec.patchformer.patch_size = choose_patch_size(select_patch_sizes(cfg.frequency), spec.patchformer.lookback);
    }
    return spec;
}

TrainConfig cell_train_config(const ExperimentConfig& cfg) {
    return cfg.train;
}

TrainedCell train_cell(const SymbolData& data, Method method, const ExperimentConfig& cfg) {
    TrainedCell cell;
    cell.spec = cell_model_spec(cfg, method);
    auto result = train(cell.spec, data.train, data.val, cell_train_config(cfg));
    cell.params = std::move(result.best_params);
    cell.history = std::move(result.history);
    if (method == Method::conformal_base) {
        const auto raw = predict_raw(cell.params, cell.spec, data.val.inputs);
        std::vector<double> preds(data.val.size());
        for (std::size_t i = 0; i < preds.size(); ++i) {
            preds[i] = denormalize_mean(summarize(cell.spec.head, {&raw.values()[i], 1}, cfg.interval_level).mean, data.stats);
        }
        cell.calibration = calibration_scores(preds, data.val_actual);
    }
    return cell;
}

Checkpoint to_checkpoint(const TrainedCell& cell, const NormStats& stats) {
    return {cell.spec, cell.params, stats, cell.calibration};
}

TrainedCell from_checkpoint(const Checkpoint& ckpt) {
    TrainedCell cell;
    cell.spec = ckpt.spec;
    cell.params = ckpt.params;
    cell.calibration = ckpt.calibration;
    if (cell.spec.head.method == Method::conformal_base && !cell.calibration) {
        throw DataError("conformal checkpoint lacks calibration scores");
    }
    return cell;
}

std::vector<PredictionRecord> predict_cell(const SymbolData& data, const TrainedCell& cell,
                                           const ExperimentConfig& cfg) {
    const auto& head = cell.spec.head;
    const auto raw = predict_raw(cell.params, cell.spec, data.test.inputs);
    const std::size_t width = output_dim(head);
    const double k = data.stats.std / kTargetScale;
    std::vector<PredictionRecord> rows(data.test.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto s = summarize(head, {&raw.values()[i * width], width}, cfg.interval_level);
        auto& r = rows[i];
        r.date = data.test_dates[i];
        r.actual = data.test_actual[i];
        r.mean = denormalize_mean(s.mean, data.stats);
        if (s.sigma) r.sigma = denormalize_scale(*s.sigma, data.stats);
        if (s.interval) {
            r.interval = Interval{denormalize_mean(s.interval->lower, data.stats),
                                  denormalize_mean(s.interval->upper, data.stats), s.interval->level,
                                  s.interval->unbounded};
        }
        if (s.nig) {
            r.aleatoric = s.nig->aleatoric * k * k;
            r.epistemic = s.nig->epistemic * k * k;
        }
        r.gaussian_crps = s.gaussian_crps;
        if (s.t_scale && s.t_df) {
            r.t_scale = denormalize_scale(*s.t_scale, data.stats);
            r.t_df = s.t_df;
        }
    }
    if (head.method == Method::conformal_base) {
        if (!cell.calibration) throw ContractError("predict_cell: conformal cell without calibration scores");
        std::vector<double> means, actuals;
        for (const auto& r : rows) {
            means.push_back(r.mean);
            actuals.push_back(r.actual);
        }
        const AdaptiveState state{cfg.conformal.alpha, cfg.conformal.gamma, cfg.conformal.alpha};
        const auto intervals = conformal_stream(*cell.calibration, means, actuals, state, cfg.conformal.adaptive);
        const double z = special::normal_quantile(1.0 - 0.5 * cfg.conformal.alpha);
        const double widest = *std::max_element(cell.calibration->scores.begin(), cell.calibration->scores.end());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            rows[i].interval = intervals[i];
            const double half = intervals[i].unbounded ? widest : 0.5 * intervals[i].width();
            if (half > 0.0) rows[i].sigma = half / z;
            rows[i].gaussian_crps = half > 0.0;
        }
    }
    return rows;
}

namespace {

std::string fmt_num(double v) {
    if (std::isnan(v)) return "NaN";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_num(*v) : "NA"; }

std::optional<double> parse_opt(const std::string& s) {
    if (s == "NA") return std::nullopt;
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw DataError("bad number '" + s + "'");
        return v;
    } catch (const std::logic_error&) {
        throw DataError("bad number '" + s + "'");
    }
}

}  // namespace

void write_predictions(std::ostream& out, const std::vector<PredictionRecord>& rows, bool with_decomposition) {
    out << "date,actual,mean,sigma,lower,upper";
    if (with_decomposition) out << ",aleatoric,epistemic";
    const bool with_t = !rows.empty() && rows.front().t_df.has_value();
    if (with_t) out << ",t_scale,t_df";
    out << '\n';
    for (const auto& r : rows) {
        out << format_date(r.date) << ',' << fmt_num(r.actual) << ',' << fmt_num(r.mean) << ',' << fmt_opt(r.sigma) << ','
            << (r.interval ? fmt_num(r.interval->lower) : "NA") << ',' << (r.interval ? fmt_num(r.interval->upper) : "NA");
        if (with_decomposition) out << ',' << fmt_opt(r.aleatoric) << ',' << fmt_opt(r.epistemic);
        if (with_t) out << ',' << fmt_opt(r.t_scale) << ',' << fmt_opt(r.t_df);
        out << '\n';
    }
}

std::vector<PredictionRecord> read_predictions(std::istream& in, double level) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty predictions file");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    auto col = [&](const std::string& name) -> int {
        const auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : static_cast<int>(it - header.begin());
    };
    const int c_date = col("date"), c_actual = col("actual"), c_mean = col("mean"), c_sigma = col("sigma");
    const int c_lower = col("lower"), c_upper = col("upper"), c_ale = col("aleatoric"), c_epi = col("epistemic");
    const int c_ts = col("t_scale"), c_tdf = col("t_df");
    if (c_date < 0 || c_actual < 0 || c_mean < 0 || c_sigma < 0 || c_lower < 0 || c_upper < 0) {
        throw DataError("predictions file lacks required columns");
    }
    std::vector<PredictionRecord> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != header.size()) throw DataError("predictions line " + std::to_string(line_no) + ": wrong field count");
        auto at = [&](int c) { return f[static_cast<std::size_t>(c)]; };
        PredictionRecord r;
        r.date = parse_date(at(c_date));
        r.actual = *parse_opt(at(c_actual));
        r.mean = *parse_opt(at(c_mean));
        r.sigma = parse_opt(at(c_sigma));
        const auto lo = parse_opt(at(c_lower)), hi = parse_opt(at(c_upper));
        if (lo && hi) r.interval = Interval{*lo, *hi, level, std::isinf(*lo) || std::isinf(*hi)};
        if (c_ale >= 0) r.aleatoric = parse_opt(at(c_ale));
        if (c_epi >= 0) r.epistemic = parse_opt(at(c_epi));
        if (c_ts >= 0) r.t_scale = parse_opt(at(c_ts));
        if (c_tdf >= 0) r.t_df = parse_opt(at(c_tdf));
        r.gaussian_crps = r.sigma.has_value();
        rows.push_back(r);
    }
    return rows;
}

// --- metrics ---------------------------------------------------------------------

Maybe mean_crps(const std::vector<PredictionRecord>& rows, CrpsMode mode) {
    if (rows.empty()) return std::nullopt;
    double s = 0.0;
    for (const auto& r : rows) {
        if (mode == CrpsMode::student_t && r.t_scale && r.t_df && *r.t_scale > 0.0 && *r.t_df > 1.0) {
            s += crps_student_t(r.mean, *r.t_scale, *r.t_df, r.actual);
            continue;
        }
        if (!r.gaussian_crps || !r.sigma || !(*r.sigma > 0.0) || std::isinf(*r.sigma)) return std::nullopt;
        s += crps_gaussian(r.mean, *r.sigma, r.actual);
    }
    return s / static_cast<double>(rows.size());
}

ProbabilisticMetrics probabilistic_metrics(const std::vector<PredictionRecord>& rows, Method method, CrpsMode mode) {
    ProbabilisticMetrics m;
    if (is_point_method(method) || rows.empty()) return m;
    if (method != Method::quantile) m.crps = mean_crps(rows, mode);
    std::vector<Interval> intervals;
    std::vector<double> actuals, sigmas, errors;
    bool all_intervals = true, all_sigmas = true;
    for (const auto& r : rows) {
        if (r.interval) {
            intervals.push_back(*r.interval);
        } else {
            all_intervals = false;
        }
        if (r.sigma && std::isfinite(*r.sigma)) {
            sigmas.push_back(*r.sigma);
        } else {
            all_sigmas = false;
        }
        actuals.push_back(r.actual);
        errors.push_back(std::abs(r.actual - r.mean));
    }
    if (all_intervals) {
        m.picp = picp(intervals, actuals);
        m.sharpness = sharpness(intervals);
    }
    if (all_sigmas && rows.size() >= 2) m.unc_err_corr = unc_err_corr(sigmas, errors);
    return m;
}

TradeLogs run_backtest(const std::string& symbol, const std::vector<PredictionRecord>& rows, Method method,
                       double pct) {
    std::vector<double> preds, actuals, unc;
    for (const auto& r : rows) {
        preds.push_back(r.mean);
        actuals.push_back(r.actual);
        if (r.sigma) unc.push_back(*r.sigma);
    }
    const bool has_unc = !is_point_method(method) && unc.size() == rows.size();
    TradeLogs logs;
    logs.unfiltered = make_trades(symbol, preds, actuals, has_unc ? std::span<const double>(unc) : std::span<const double>{});
    if (has_unc) logs.filtered = uncertainty_filter(logs.unfiltered, pct);
    return logs;
}

namespace {

std::optional<TradingMetrics> try_trading(const std::vector<double>& pnl) {
    if (pnl.size() < 2) return std::nullopt;
    return trading_metrics(pnl);
}

}  // namespace

void add_trading_metrics(CellMetrics& m, const TradeLogs& logs) {
    m.trading = try_trading(daily_pnl(logs.unfiltered));
    m.filtered.reset();
    m.filtered_all_days.reset();
    m.n_filtered = 0;
    if (!logs.filtered.empty()) {
        m.filtered = try_trading(executed_pnl(logs.filtered));
        m.filtered_all_days = try_trading(daily_pnl(logs.filtered));
        for (const auto& r : logs.filtered) m.n_filtered += r.filtered ? 1 : 0;
    }
}

CellMetrics evaluate_predictions(const std::vector<PredictionRecord>& rows, Method method, CrpsMode mode) {
    if (rows.empty()) throw DataError("no test predictions to evaluate");
    CellMetrics m;
    m.n_test = rows.size();
    std::vector<double> preds, actuals;
    for (const auto& r : rows) {
        preds.push_back(r.mean);
        actuals.push_back(r.actual);
    }
    m.accuracy = accuracy_metrics(preds, actuals);
    m.probabilistic = probabilistic_metrics(rows, method, mode);
    return m;
}

std::string_view cell_status_name(CellStatus s) {
    switch (s) {
        case CellStatus::ok: return "ok";
        case CellStatus::failed: return "failed";
        case CellStatus::skipped: return "skipped";
    }
    return "unknown";
}

namespace {

CellStatus parse_cell_status(const std::string& s) {
    if (s == "ok") return CellStatus::ok;
    if (s == "failed") return CellStatus::failed;
    if (s == "skipped") return CellStatus::skipped;
    throw DataError("unknown cell status '" + s + "'");
}

json trading_json(const std::optional<TradingMetrics>& t) {
    if (!t) return nullptr;
    return {{"daily_sharpe", to_jnum(t->daily_sharpe)},
            {"annual_sharpe", to_jnum(t->annual_sharpe)},
            {"annual_sortino", to_jnum(t->annual_sortino)},
            {"max_drawdown_bps", to_jnum(t->max_drawdown)},
            {"calmar", to_jnum(t->calmar)},
            {"win_rate", to_jnum(t->win_rate)},
            {"n_trades", t->n_trades}};
}

std::optional<TradingMetrics> trading_from_json(const json& j) {
    if (j.is_null()) return std::nullopt;
    TradingMetrics t;
    t.daily_sharpe = from_jnum(j.at("daily_sharpe"));
    t.annual_sharpe = from_jnum(j.at("annual_sharpe"));
    t.annual_sortino = from_jnum(j.at("annual_sortino"));
    t.max_drawdown = *from_jnum(j.at("max_drawdown_bps"));
    t.calmar = from_jnum(j.at("calmar"));
    t.win_rate = *from_jnum(j.at("win_rate"));
    t.n_trades = j.at("n_trades").get<std::size_t>();
    return t;
}

}  // namespace

json to_json(const CellMetrics& m) {
    const auto& p = m.probabilistic;
    return {{"accuracy", {{"rmse", to_jnum(m.accuracy.rmse)}, {"mae", to_jnum(m.accuracy.mae)}, {"pearson_corr", to_jnum(m.accuracy.pearson)}}},
            {"probabilistic",
             {{"crps", to_jnum(p.crps)}, {"picp", to_jnum(p.picp)}, {"sharpness", to_jnum(p.sharpness)}, {"unc_err_corr", to_jnum(p.unc_err_corr)}}},
            {"trading", trading_json(m.trading)},
            {"trading_filtered", trading_json(m.filtered)},
            {"trading_filtered_all_days", trading_json(m.filtered_all_days)},
            {"n_test", m.n_test},
            {"n_filtered", m.n_filtered}};
}

CellMetrics cell_metrics_from_json(const json& j) {
    CellMetrics m;
    const auto& a = j.at("accuracy");
    m.accuracy.rmse = *from_jnum(a.at("rmse"));
    m.accuracy.mae = *from_jnum(a.at("mae"));
    m.accuracy.pearson = from_jnum(a.at("pearson_corr"));
    const auto& p = j.at("probabilistic");
    m.probabilistic.crps = from_jnum(p.at("crps"));
    m.probabilistic.picp = from_jnum(p.at("picp"));
    m.probabilistic.sharpness = from_jnum(p.at("sharpness"));
    m.probabilistic.unc_err_corr = from_jnum(p.at("unc_err_corr"));
    m.trading = trading_from_json(j.at("trading"));
    m.filtered = trading_from_json(j.at("trading_filtered"));
    m.filtered_all_days = trading_from_json(j.at("trading_filtered_all_days"));
    m.n_test = j.at("n_test").get<std::size_t>();
    m.n_filtered = j.at("n_filtered").get<std::size_t>();
    return m;
}

json to_json(const CellResult& r) {
    return {{"symbol", r.symbol},
            {"method", method_name(r.method)},
            {"status", cell_status_name(r.status)},
            {"stage", r.stage},
            {"error", r.error},
            {"best_epoch", r.best_epoch},
            {"epochs_run", r.epochs_run},
            {"metrics", to_json(r.metrics)}};
}

CellResult cell_result_from_json(const json& j) {
    try {
        CellResult r;
        r.symbol = j.at("symbol").get<std::string>();
        r.method = parse_method(j.at("method").get<std::string>());
        r.status = parse_cell_status(j.at("status").get<std::string>());
        r.stage = j.at("stage").get<std::string>();
        r.error = j.at("error").get<std::string>();
        r.best_epoch = j.at("best_epoch").get<std::size_t>();
        r.epochs_run = j.at("epochs_run").get<std::size_t>();
        r.metrics = cell_metrics_from_json(j.at("metrics"));
        return r;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed cell result: ") + e.what());
    } catch (const ConfigError& e) {
        throw DataError(std::string("malformed cell result: ") + e.what());
    }
}

int RunSummary::exit_code() const {
    for (const auto& c : cells) {
        if (c.status == CellStatus::failed) return 2;
    }
    return 0;
}

std::filesystem::path cell_dir(const ExperimentConfig& cfg, const std::string& symbol, Method method) {
    return cfg.output_dir / "cells" / symbol / std::string(method_name(method));
}

// --- orchestration ------------------------------------------------------------------

namespace {

std::string stage_name(Stage s) {
    switch (s) {
        case Stage::train: return "train";
        case Stage::evaluate: return "evaluate";
        case Stage::backtest: return "backtest";
        case Stage::report: return "report";
        case Stage::all: return "run-all";
    }
    return "unknown";
}

void write_text(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    body(out);
}

std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path, double level) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return read_predictions(in, level);
}

struct CellJob {
    std::size_t symbol_index = 0;
    Method method = Method::mse;
};

void run_cell(const ExperimentConfig& cfg, Stage stage, const SymbolData& data, CellResult& result) {
    const auto dir = cell_dir(cfg, data.symbol, result.method);
    const bool decomposition = result.method == Method::evidential;
    TrainedCell trained;
    std::vector<PredictionRecord> rows;

    if (stage == Stage::train || stage == Stage::all) {
        result.stage = "train";
        trained = train_cell(data, result.method, cfg);
        result.best_epoch = trained.history.best_epoch;
        result.epochs_run = trained.history.epochs_run;
        result.stage = "checkpoint";
        save_checkpoint(dir / "checkpoint.json", to_checkpoint(trained, data.stats));
        save_json(dir / "history.json", to_json(trained.history));
    }
    if (stage == Stage::evaluate) {
        result.stage = "load-checkpoint";
        trained = from_checkpoint(load_checkpoint(dir / "checkpoint.json"));
        if (trained.spec.head.method != result.method) throw DataError("checkpoint holds a different method");
        const auto h = history_from_json(load_json(dir / "history.json"));
        result.best_epoch = h.best_epoch;
        result.epochs_run = h.epochs_run;
    }
    if (stage == Stage::evaluate || stage == Stage::all) {
        result.stage = "predict";
        rows = predict_cell(data, trained, cfg);
        write_text(dir / "predictions.csv", [&](std::ostream& out) { write_predictions(out, rows, decomposition); });
        result.stage = "metrics";
        result.metrics = evaluate_predictions(rows, result.method, cfg.crps_mode);
    }
    if (stage == Stage::backtest) {
        result.stage = "load-predictions";
        rows = load_predictions(dir / "predictions.csv", cfg.interval_level);
        const auto previous = cell_result_from_json(load_json(dir / "result.json"));
        result.metrics = previous.metrics;
        result.best_epoch = previous.best_epoch;
        result.epochs_run = previous.epochs_run;
    }
    if (stage == Stage::backtest || stage == Stage::all) {
        result.stage = "backtest";
        const auto logs = run_backtest(data.symbol, rows, result.method, cfg.uncertainty_percentile);
        add_trading_metrics(result.metrics, logs);
        write_text(dir / "trades.csv", [&](std::ostream& out) { write_trade_log(out, logs.unfiltered); });
        if (!logs.filtered.empty()) {
            write_text(dir / "trades_filtered.csv", [&](std::ostream& out) { write_trade_log(out, logs.filtered); });
        }
    }
    result.stage = stage_name(stage);
    save_json(dir / "result.json", to_json(result));
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& cfg, Stage stage) {
    validate(cfg);
    try {
        std::filesystem::create_directories(cfg.output_dir);
    } catch (const std::filesystem::filesystem_error& e) {
        throw ConfigError("cannot create output directory " + cfg.output_dir.string() + ": " + e.what());
    }
    const auto inputs = load_inputs(cfg);

    std::vector<std::optional<SymbolData>> prepared(inputs.size());
    std::vector<std::string> prep_error(inputs.size());
    std::vector<bool> prep_skipped(inputs.size(), false);
    if (stage != Stage::report) {
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            try {
                prepared[i] = prepare_symbol(inputs[i], cfg);
            } catch (const InsufficientData& e) {
                prep_skipped[i] = true;
                prep_error[i] = e.what();
                std::cerr << "warning: skipping " << inputs[i].symbol << ": " << e.what() << '\n';
            } catch (const std::exception& e) {
                prep_error[i] = e.what();
            }
        }
    }

    std::vector<CellJob> jobs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (auto m : cfg.methods) jobs.push_back({i, m});
    }
    RunSummary summary;
    summary.cells.resize(jobs.size());

    std::mutex log_mutex;
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t j = next.fetch_add(1);
            if (j >= jobs.size()) return;
            const auto& job = jobs[j];
            CellResult& r = summary.cells[j];
            r.symbol = inputs[job.symbol_index].symbol;
            r.method = job.method;
            const auto t0 = std::chrono::steady_clock::now();
            try {
                if (stage == Stage::report) {
                    r = cell_result_from_json(load_json(cell_dir(cfg, r.symbol, r.method) / "result.json"));
                } else if (prep_skipped[job.symbol_index]) {
                    r.status = CellStatus::skipped;
                    r.stage = "preprocess";
                    r.error = prep_error[job.symbol_index];
                } else if (!prepared[job.symbol_index]) {
                    r.status = CellStatus::failed;
                    r.stage = "preprocess";
                    r.error = prep_error[job.symbol_index];
                } else {
                    run_cell(cfg, stage, *prepared[job.symbol_index], r);
                }
            } catch (const std::exception& e) {
                r.status = CellStatus::failed;
                r.error = e.what();
            }
            r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::lock_guard<std::mutex> lock(log_mutex);
            std::cerr << "[" << r.symbol << "/" << method_name(r.method) << "] " << cell_status_name(r.status);
            if (r.status == CellStatus::failed) std::cerr << " at " << r.stage << ": " << r.error;
            std::cerr << " (" << std::fixed << std::setprecision(1) << r.wall_seconds << "s)\n";
            std::cerr.unsetf(std::ios::fixed);
        }
    };
    std::size_t n_workers = cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
    n_workers = std::max<std::size_t>(1, std::min(n_workers, jobs.size()));
    std::vector<std::thread> pool;
    for (std::size_t i = 1; i < n_workers; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    if (stage == Stage::all || stage == Stage::report || stage == Stage::backtest) {
        std::vector<CellResult> reportable;
        for (const auto& c : summary.cells) {
            if (c.status == CellStatus::ok) reportable.push_back(c);
        }
        if (!reportable.empty()) emit_report(reportable, cfg);
    }
    write_manifest(summary, cfg, stage_name(stage));
    return summary;
}

void tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

}  // namespace nigcast
