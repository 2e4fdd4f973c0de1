#pragma once

// Per-symbol metric tables (accuracy, probabilistic, trading), the combined
// JSON report and the run manifest. Missing values are written as "NA".

#include "nigcast/experiment.hpp"

#include <array>
#include <string>
#include <vector>

namespace nigcast {

inline constexpr std::array<const char*, 4> kAccuracyColumns = {"method", "rmse", "mae", "pearson_corr"};
inline constexpr std::array<const char*, 5> kProbabilisticColumns = {"method", "crps", "picp_95", "sharpness_95",
                                                                     "unc_err_corr"};
inline constexpr std::array<const char*, 20> kTradingColumns = {
    "method",
    "daily_sharpe",
    "annual_sharpe",
    "annual_sortino",
    "max_drawdown_bps",
    "calmar",
    "win_rate",
    "n_trades",
    "filtered_daily_sharpe",
    "filtered_annual_sharpe",
    "filtered_annual_sortino",
    "filtered_max_drawdown_bps",
    "filtered_calmar",
    "filtered_win_rate",
    "filtered_n_trades",
    "filtered_all_days_annual_sharpe",
    "filtered_all_days_annual_sortino",
    "filtered_all_days_max_drawdown_bps",
    "filtered_all_days_calmar",
    "n_filtered_days",
};

/// Fixed 10-significant-digit rendering; nullopt as "NA".
std::string format_metric(const Maybe& v);

struct SymbolTables {
    std::string accuracy;
    std::string probabilistic;
    std::string trading;
};

/// CSV text of the three tables for one symbol, rows in the given cell order.
SymbolTables render_tables(const std::vector<CellResult>& cells_of_symbol);

/// Writes reports/<symbol>/{accuracy,probabilistic,trading}.csv and report.json
/// according to cfg.report_formats. Throws DataError if nothing can be written.
void emit_report(const std::vector<CellResult>& cells, const ExperimentConfig& cfg);

nlohmann::json report_json(const std::vector<CellResult>& cells);

void write_manifest(const RunSummary& summary, const ExperimentConfig& cfg, const std::string& stage);

}  // namespace nigcast
