#include "nigcast/dataio.hpp"
#include "nigcast/errors.hpp"
#include "nigcast/experiment.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"

using namespace nigcast;

namespace {

struct CommonOptions {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string methods;
    std::string symbols;
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

ExperimentConfig resolve(const CommonOptions& o) {
    ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (o.seed) cfg.train.seed = *o.seed;
    if (!o.methods.empty()) {
        cfg.methods.clear();
        for (const auto& m : split_list(o.methods)) cfg.methods.push_back(parse_method(m));
    }
    if (!o.symbols.empty()) cfg.symbols = split_list(o.symbols);
    validate(cfg);
    return cfg;
}

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config, "experiment configuration (JSON)");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--seed", o.seed, "random seed");
    cmd->add_option("--methods", o.methods, "comma-separated methods");
    cmd->add_option("--symbols", o.symbols, "comma-separated symbols");
}

int run_stage(const CommonOptions& o, Stage stage) {
    const auto cfg = resolve(o);
    const auto summary = run_experiment(cfg, stage);
    std::size_t failed = 0;
    for (const auto& c : summary.cells) failed += c.status == CellStatus::failed;
    std::cerr << summary.cells.size() - failed << " of " << summary.cells.size() << " cells finished; see "
              << (cfg.output_dir / "manifest.json").string() << '\n';
    return summary.exit_code();
}

struct SynthOptions {
    std::string kind = "random_walk_prices";
    std::size_t n = 1500;
    std::size_t symbols = 11;
    std::uint64_t seed = 0;
    std::string start = "2020-01-01";
    std::string out = "synthetic.csv";
};

int run_synth(const SynthOptions& o) {
    const auto kind = parse_synthetic_kind(o.kind);
    if (o.n < 100) throw ConfigError("--n must be at least 100");
    if (kind == SyntheticKind::heteroscedastic_cubic) {
        const auto s = gen_cubic(o.n, o.seed);
        std::ofstream out(o.out);
        if (!out) throw ConfigError("cannot write " + o.out);
        out << "x,y,sigma\n" << std::setprecision(17);
        for (std::size_t i = 0; i < s.x.size(); ++i) out << s.x[i] << ',' << s.y[i] << ',' << s.sigma[i] << '\n';
        return 0;
    }
    ExperimentConfig cfg;
    cfg.synthetic.kind = kind;
    cfg.synthetic.n_days = o.n;
    cfg.synthetic.n_symbols = o.symbols;
    cfg.synthetic.start = parse_date(o.start);
    cfg.train.seed = o.seed;
    save_prices(o.out, load_inputs(cfg));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    nigcast::tune_allocator();
    CLI::App app{"Evidential and baseline probabilistic forecasters for daily returns"};
    app.require_subcommand(1);

    SynthOptions synth;
    auto* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset");
    synth_cmd->add_option("--kind", synth.kind, "random_walk_prices | iid_gaussian_returns | heteroscedastic_cubic");
    synth_cmd->add_option("--n", synth.n, "observations per symbol");
    synth_cmd->add_option("--n-symbols", synth.symbols, "number of symbols (price kinds)");
    synth_cmd->add_option("--seed", synth.seed, "random seed");
    synth_cmd->add_option("--start", synth.start, "first date (YYYY-MM-DD)");
    synth_cmd->add_option("--out", synth.out, "output CSV");

    CommonOptions common;
    const std::vector<std::pair<std::string, Stage>> stages = {{"train", Stage::train},
                                                               {"evaluate", Stage::evaluate},
                                                               {"backtest", Stage::backtest},
                                                               {"report", Stage::report},
                                                               {"run-all", Stage::all}};
    const std::map<std::string, std::string> help = {
        {"train", "train every (symbol, method) cell and save checkpoints"},
        {"evaluate", "predict the test split from saved checkpoints"},
        {"backtest", "run the trading simulation on saved predictions"},
        {"report", "assemble report tables from saved cell results"},
        {"run-all", "full pipeline: train, evaluate, backtest, report"}};
    std::vector<std::pair<CLI::App*, Stage>> stage_cmds;
    for (const auto& [name, stage] : stages) {
        auto* cmd = app.add_subcommand(name, help.at(name));
        add_common(cmd, common);
        stage_cmds.emplace_back(cmd, stage);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*synth_cmd) return run_synth(synth);
        for (const auto& [cmd, stage] : stage_cmds) {
            if (*cmd) return run_stage(common, stage);
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
