#include "nigcast/report.hpp"

#include "nigcast/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace nigcast {

using nlohmann::json;

std::string format_metric(const Maybe& v) {
    if (!v) return "NA";
    if (std::isnan(*v)) return "NaN";
    if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", *v);
    return buf;
}

namespace {

template <std::size_t N>
std::string header(const std::array<const char*, N>& cols) {
    std::string s;
    for (std::size_t i = 0; i < N; ++i) {
        if (i) s += ',';
        s += cols[i];
    }
    return s + '\n';
}

Maybe count(std::size_t n) { return static_cast<double>(n); }

void append_trading(std::vector<Maybe>& row, const std::optional<TradingMetrics>& t, bool full) {
    if (!t) {
        row.insert(row.end(), full ? 7 : 4, std::nullopt);
        return;
    }
    if (full) row.push_back(t->daily_sharpe);
    row.push_back(t->annual_sharpe);
    row.push_back(t->annual_sortino);
    row.push_back(t->max_drawdown);
    row.push_back(t->calmar);
    if (full) {
        row.push_back(t->win_rate);
        row.push_back(count(t->n_trades));
    }
}

std::string line(const std::string& method, const std::vector<Maybe>& values) {
    std::string s = method;
    for (const auto& v : values) s += ',' + format_metric(v);
    return s + '\n';
}

}  // namespace

SymbolTables render_tables(const std::vector<CellResult>& cells) {
    SymbolTables t{header(kAccuracyColumns), header(kProbabilisticColumns), header(kTradingColumns)};
    for (const auto& c : cells) {
        const std::string m(method_name(c.method));
        const auto& a = c.metrics.accuracy;
        t.accuracy += line(m, {a.rmse, a.mae, a.pearson});
        const auto& p = c.metrics.probabilistic;
        t.probabilistic += line(m, {p.crps, p.picp, p.sharpness, p.unc_err_corr});
        std::vector<Maybe> row;
        append_trading(row, c.metrics.trading, true);
        append_trading(row, c.metrics.filtered, true);
        append_trading(row, c.metrics.filtered_all_days, false);
        row.push_back(is_point_method(c.method) ? Maybe{} : count(c.metrics.n_filtered));
        t.trading += line(m, row);
    }
    return t;
}

json report_json(const std::vector<CellResult>& cells) {
    json symbols = json::object();
    for (const auto& c : cells) {
        json entry = to_json(c.metrics);
        entry["best_epoch"] = c.best_epoch;
        entry["epochs_run"] = c.epochs_run;
        symbols[c.symbol][std::string(method_name(c.method))] = entry;
    }
    return {{"units",
             {{"accuracy", "return units"},
              {"pnl", "signal * actual_return * 100"},
              {"calmar", "(mean pnl * 252) / |max drawdown|, pnl units"}}},
            {"symbols", symbols}};
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace

void emit_report(const std::vector<CellResult>& cells, const ExperimentConfig& cfg) {
    if (cells.empty()) throw ContractError("emit_report: no results");
    const auto root = cfg.output_dir / "reports";
    try {
        std::filesystem::create_directories(root);
    } catch (const std::filesystem::filesystem_error& e) {
        throw DataError(std::string("cannot create report directory: ") + e.what());
    }
    const auto wants = [&](const char* f) {
        return std::find(cfg.report_formats.begin(), cfg.report_formats.end(), f) != cfg.report_formats.end();
    };
    if (wants("csv")) {
        std::vector<std::string> order;
        std::map<std::string, std::vector<CellResult>> by_symbol;
        for (const auto& c : cells) {
            if (!by_symbol.count(c.symbol)) order.push_back(c.symbol);
            by_symbol[c.symbol].push_back(c);
        }
        for (const auto& s : order) {
            const auto dir = root / s;
            std::filesystem::create_directories(dir);
            const auto t = render_tables(by_symbol[s]);
            write_file(dir / "accuracy.csv", t.accuracy);
            write_file(dir / "probabilistic.csv", t.probabilistic);
            write_file(dir / "trading.csv", t.trading);
        }
    }
    if (wants("json")) write_file(root / "report.json", report_json(cells).dump(2) + "\n");
}

void write_manifest(const RunSummary& summary, const ExperimentConfig& cfg, const std::string& stage) {
    json cells = json::array();
    std::size_t ok = 0, failed = 0, skipped = 0;
    for (const auto& c : summary.cells) {
        cells.push_back({{"symbol", c.symbol},
                         {"method", method_name(c.method)},
                         {"status", cell_status_name(c.status)},
                         {"stage", c.stage},
                         {"error", c.error},
                         {"wall_seconds", c.wall_seconds}});
        ok += c.status == CellStatus::ok;
        failed += c.status == CellStatus::failed;
        skipped += c.status == CellStatus::skipped;
    }
    const json manifest = {{"stage", stage},
                           {"exit_code", summary.exit_code()},
                           {"counts", {{"ok", ok}, {"failed", failed}, {"skipped", skipped}}},
                           {"config", to_json(cfg)},
                           {"cells", cells}};
    save_json(cfg.output_dir / "manifest.json", manifest);
}

}  // namespace nigcast
