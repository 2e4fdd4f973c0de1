#include "nigcast/backtest.hpp"

#include "nigcast/dataio.hpp"
#include "nigcast/errors.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

namespace nigcast {

std::vector<int> generate_signals(std::span<const double> predicted) {
    std::vector<int> out;
    out.reserve(predicted.size());
    for (double p : predicted) {
        if (!std::isfinite(p)) throw ContractError("generate_signals: non-finite prediction");
        out.push_back(p > 0.0 ? 1 : -1);
    }
    return out;
}

std::vector<double> compute_pnl(std::span<const int> signals, std::span<const double> actuals) {
    if (signals.size() != actuals.size()) throw ContractError("compute_pnl: length mismatch");
    std::vector<double> out(signals.size());
    for (std::size_t i = 0; i < signals.size(); ++i) out[i] = static_cast<double>(signals[i]) * actuals[i] * 100.0;
    return out;
}

std::vector<TradeRecord> make_trades(const std::string& symbol, std::span<const double> predicted,
                                     std::span<const double> actuals, std::span<const double> uncertainties) {
    if (predicted.size() != actuals.size()) throw ContractError("make_trades: length mismatch");
    if (!uncertainties.empty() && uncertainties.size() != predicted.size()) {
        throw ContractError("make_trades: uncertainty length mismatch");
    }
    const auto signals = generate_signals(predicted);
    const auto pnl = compute_pnl(signals, actuals);
    std::vector<TradeRecord> out(predicted.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = {symbol, i, signals[i], predicted[i], actuals[i], pnl[i], std::nullopt, false};
        if (!uncertainties.empty()) out[i].uncertainty = uncertainties[i];
    }
    return out;
}

std::vector<TradeRecord> uncertainty_filter(std::vector<TradeRecord> records, double pct) {
    if (records.empty()) return records;
    std::vector<double> u;
    for (const auto& r : records) {
        if (r.uncertainty) u.push_back(*r.uncertainty);
    }
    if (u.empty()) return records;
    if (u.size() != records.size()) throw ContractError("uncertainty_filter: some records lack an uncertainty");
    const double threshold = percentile(u, pct);
    for (auto& r : records) {
        if (*r.uncertainty >= threshold) {
            r.signal = 0;
            r.pnl_bps = 0.0;
            r.filtered = true;
        }
    }
    return records;
}

std::vector<double> executed_pnl(std::span<const TradeRecord> records) {
    std::vector<double> out;
    for (const auto& r : records) {
        if (r.signal != 0) out.push_back(r.pnl_bps);
    }
    return out;
}

std::vector<double> daily_pnl(std::span<const TradeRecord> records) {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.signal != 0 ? r.pnl_bps : 0.0);
    return out;
}

void write_trade_log(std::ostream& out, std::span<const TradeRecord> records) {
    out << "symbol,index,signal,predicted,actual,pnl_bps,uncertainty,filtered\n";
    out << std::setprecision(17);
    for (const auto& r : records) {
        out << r.symbol << ',' << r.index << ',' << r.signal << ',' << r.predicted << ',' << r.actual << ','
            << r.pnl_bps << ',';
        if (r.uncertainty) {
            out << *r.uncertainty;
        } else {
            out << "NA";
        }
        out << ',' << (r.filtered ? 1 : 0) << '\n';
    }
}

void save_trade_log(const std::filesystem::path& path, std::span<const TradeRecord> records) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    write_trade_log(out, records);
}

}  // namespace nigcast
