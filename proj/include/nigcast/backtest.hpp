#pragma once

// Directional long/short simulation on predicted returns, with an optional
// filter that skips the most uncertain days.

#include "nigcast/metrics.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nigcast {

struct TradeRecord {
    std::string symbol;
    std::size_t index = 0;
    int signal = 0;  // +1 long, -1 short, 0 no trade
    double predicted = 0.0;
    double actual = 0.0;
    double pnl_bps = 0.0;
    std::optional<double> uncertainty;
    bool filtered = false;
};

/// +1 when the prediction is strictly positive, otherwise -1.
std::vector<int> generate_signals(std::span<const double> predicted);

/// signal * actual * 100.
std::vector<double> compute_pnl(std::span<const int> signals, std::span<const double> actuals);

std::vector<TradeRecord> make_trades(const std::string& symbol, std::span<const double> predicted,
                                     std::span<const double> actuals,
                                     std::span<const double> uncertainties = {});

/// Zeroes every signal whose uncertainty is >= the given percentile of all
/// uncertainties in `records`. Records without uncertainties are returned
/// unchanged when none have one; a partial set is an error.
std::vector<TradeRecord> uncertainty_filter(std::vector<TradeRecord> records, double pct = 75.0);

/// pnl of executed trades only (signal != 0).
std::vector<double> executed_pnl(std::span<const TradeRecord> records);
/// pnl of every day, filtered days contributing 0.
std::vector<double> daily_pnl(std::span<const TradeRecord> records);

void write_trade_log(std::ostream& out, std::span<const TradeRecord> records);
void save_trade_log(const std::filesystem::path& path, std::span<const TradeRecord> records);

}  // namespace nigcast
