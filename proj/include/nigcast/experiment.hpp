#pragma once

// End-to-end pipeline over (symbol x method) cells: preprocessing, training,
// prediction, metrics and trading, plus the JSON experiment configuration.

#include "nigcast/backtest.hpp"
#include "nigcast/checkpoint.hpp"
#include "nigcast/conformal.hpp"
#include "nigcast/dataio.hpp"
#include "nigcast/metrics.hpp"
#include "nigcast/model.hpp"
#include "nigcast/optim.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace nigcast {

struct SyntheticSource {
    SyntheticKind kind = SyntheticKind::random_walk_prices;
    std::size_t n_symbols = 11;
    std::size_t n_days = 1500;
    Date start = parse_date("2020-01-01");
};

struct ConformalOptions {
    double alpha = 0.05;
    double gamma = 0.01;
    bool adaptive = true;
};

enum class CrpsMode { gaussian, student_t };

struct ExperimentConfig {
    std::optional<std::filesystem::path> data_path;  // synthetic data when empty
    SyntheticSource synthetic;
    Date cutoff = parse_date("2023-07-01");
    double val_fraction = 0.2;
    std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
    std::vector<std::string> symbols;  // empty: every symbol in the data
    TrainConfig train;
    ModelSpec model;  // head method is set per cell
    bool bounded_predictions = true;  // evidential mean = bound * tanh(raw)
    Frequency frequency = Frequency::daily;
    double interval_level = 0.95;
    CrpsMode crps_mode = CrpsMode::gaussian;  // student_t: closed form where the head has a t predictive
    double uncertainty_percentile = 75.0;
    ConformalOptions conformal;
    std::filesystem::path output_dir = "nigcast_out";
    std::vector<std::string> report_formats{"csv", "json"};
    std::size_t workers = 0;  // 0: hardware concurrency
};

/// Unknown keys and out-of-range values raise ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);
void validate(const ExperimentConfig& cfg);

/// Price series named by the config (file or synthetic), filtered by `symbols`.
std::vector<PriceSeries> load_inputs(const ExperimentConfig& cfg);

/// One symbol after splitting, normalization and windowing. Validation windows
/// draw their lookback from the train tail and test windows from train + val,
/// so every validation and test day gets a prediction.
struct SymbolData {
    std::string symbol;
    NormStats stats;
    SampleSet train, val, test;
    std::vector<Date> val_dates, test_dates;
    std::vector<double> val_actual, test_actual;  // raw (unclipped) returns
};

SymbolData prepare_symbol(const PriceSeries& prices, const ExperimentConfig& cfg);

/// Model description of one cell: the config's backbone with the method's head,
/// bound and patch size resolved. The bound applies to the model's target
/// (x100) units as given.
ModelSpec cell_model_spec(const ExperimentConfig& cfg, Method method);
TrainConfig cell_train_config(const ExperimentConfig& cfg);

struct TrainedCell {
    ModelSpec spec;
    ParameterSet params;
    TrainHistory history;
    std::optional<CalibrationSet> calibration;  // conformal_base only, return units
};

TrainedCell train_cell(const SymbolData& data, Method method, const ExperimentConfig& cfg);

Checkpoint to_checkpoint(const TrainedCell& cell, const NormStats& stats);
TrainedCell from_checkpoint(const Checkpoint& ckpt);

/// One test-day forecast in return units.
struct PredictionRecord {
    Date date;
    double actual = 0.0;
    double mean = 0.0;
    std::optional<double> sigma;
    std::optional<Interval> interval;
    std::optional<double> aleatoric;  // variances, evidential only
    std::optional<double> epistemic;
    bool gaussian_crps = false;
    std::optional<double> t_scale;  // Student-t predictive (evidential, student_t_nll)
    std::optional<double> t_df;
};

std::vector<PredictionRecord> predict_cell(const SymbolData& data, const TrainedCell& cell,
                                           const ExperimentConfig& cfg);

void write_predictions(std::ostream& out, const std::vector<PredictionRecord>& rows, bool with_decomposition);
std::vector<PredictionRecord> read_predictions(std::istream& in, double level);

struct ProbabilisticMetrics {
    Maybe crps;
    Maybe picp;
    Maybe sharpness;
    Maybe unc_err_corr;
};

struct CellMetrics {
    AccuracyMetrics accuracy;
    ProbabilisticMetrics probabilistic;
    std::optional<TradingMetrics> trading;
    std::optional<TradingMetrics> filtered;           // executed trades only
    std::optional<TradingMetrics> filtered_all_days;  // skipped days count as 0
    std::size_t n_test = 0;
    std::size_t n_filtered = 0;
};

/// Student-t mode falls back to the Gaussian form on rows without t parameters.
Maybe mean_crps(const std::vector<PredictionRecord>& rows, CrpsMode mode = CrpsMode::gaussian);
ProbabilisticMetrics probabilistic_metrics(const std::vector<PredictionRecord>& rows, Method method,
                                           CrpsMode mode = CrpsMode::gaussian);

struct TradeLogs {
    std::vector<TradeRecord> unfiltered;
    std::vector<TradeRecord> filtered;  // empty for point methods
};

TradeLogs run_backtest(const std::string& symbol, const std::vector<PredictionRecord>& rows, Method method,
                       double pct);
void add_trading_metrics(CellMetrics& m, const TradeLogs& logs);

CellMetrics evaluate_predictions(const std::vector<PredictionRecord>& rows, Method method,
                                 CrpsMode mode = CrpsMode::gaussian);

enum class CellStatus { ok, failed, skipped };
std::string_view cell_status_name(CellStatus s);

struct CellResult {
    std::string symbol;
    Method method = Method::mse;
    CellStatus status = CellStatus::ok;
    std::string stage;  // stage reached (failure point when failed)
    std::string error;
    double wall_seconds = 0.0;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    CellMetrics metrics;
};

nlohmann::json to_json(const CellMetrics& m);
CellMetrics cell_metrics_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CellResult& r);
CellResult cell_result_from_json(const nlohmann::json& j);

enum class Stage { train, evaluate, backtest, report, all };

struct RunSummary {
    std::vector<CellResult> cells;
    /// 0 when every cell succeeded, 2 when any failed.
    int exit_code() const;
};

/// Directory holding one cell's artefacts.
std::filesystem::path cell_dir(const ExperimentConfig& cfg, const std::string& symbol, Method method);

/// Runs the requested stage for every cell in a worker pool. Earlier stages'
/// artefacts are read from the output directory when a later stage runs alone.
RunSummary run_experiment(const ExperimentConfig& cfg, Stage stage = Stage::all);

/// Keeps mid-sized tensor buffers on the heap instead of fresh mmap regions
/// (glibc); a no-op elsewhere. Call once at program start.
void tune_allocator();

}  // namespace nigcast
