#include "nigcast/errors.hpp"
#include "nigcast/experiment.hpp"
#include "nigcast/metrics.hpp"
#include "nigcast/report.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace nigcast {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string l;
    while (std::getline(in, l)) out.push_back(l);
    return out;
}

ExperimentConfig tiny(const fs::path& out) {
    ExperimentConfig cfg;
    cfg.synthetic.n_symbols = 1;
    cfg.synthetic.n_days = 300;
    cfg.cutoff = parse_date("2020-09-01");
    cfg.model.lstm.lookback = 10;
    cfg.model.lstm.hidden_dim = 8;
    cfg.train.max_epochs = 2;
    cfg.workers = 1;
    cfg.output_dir = out;
    return cfg;
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("nigcast_experiment_" + name);
    fs::remove_all(p);
    return p;
}

TEST(Config, UnknownKeysAndBadValuesRejected) {
    EXPECT_THROW(config_from_json(nlohmann::json{{"learning_rat", 0.1}}), ConfigError);
    EXPECT_THROW(config_from_json(nlohmann::json{{"conformal", {{"beta", 0.1}}}}), ConfigError);
    EXPECT_THROW(config_from_json(nlohmann::json{{"batch_size", 0}}), ConfigError);
    EXPECT_THROW(config_from_json(nlohmann::json{{"methods", {"mse", "lasso"}}}), ConfigError);
    EXPECT_THROW(config_from_json(nlohmann::json{{"learning_rate", "fast"}}), ConfigError);
    EXPECT_THROW(config_from_json(nlohmann::json{{"crps_mode", "sampled"}}), ConfigError);
}

TEST(Config, JsonRoundTrip) {
    auto j = nlohmann::json{{"learning_rate", 0.002}, {"methods", {"evidential", "mse"}}, {"lookback", 20}};
    const auto cfg = config_from_json(j);
    EXPECT_EQ(cfg.train.learning_rate, 0.002);
    EXPECT_EQ(cfg.model.lstm.lookback, 20u);
    ASSERT_EQ(cfg.methods.size(), 2u);
    const auto back = config_from_json(to_json(cfg));
    EXPECT_EQ(to_json(back), to_json(cfg));
}

TEST(Crps, StudentTModeUsesTParametersWhenPresent) {
    PredictionRecord a;
    a.actual = 0.02;
    a.sigma = 0.01;
    a.gaussian_crps = true;
    PredictionRecord b = a;
    b.t_scale = 0.008;
    b.t_df = 4.0;
    const std::vector<PredictionRecord> rows{a, b};
    EXPECT_DOUBLE_EQ(*mean_crps(rows), crps_gaussian(0.0, 0.01, 0.02));
    EXPECT_DOUBLE_EQ(*mean_crps(rows, CrpsMode::student_t),
                     0.5 * (crps_gaussian(0.0, 0.01, 0.02) + crps_student_t(0.0, 0.008, 4.0, 0.02)));
    EXPECT_EQ(config_from_json(nlohmann::json{{"crps_mode", "student_t"}}).crps_mode, CrpsMode::student_t);
}

TEST(Predictions, CsvRoundTripKeepsTParameters) {
    PredictionRecord r;
    r.date = parse_date("2024-01-02");
    r.actual = 0.01;
    r.mean = 0.002;
    r.sigma = 0.02;
    r.interval = Interval{-0.03, 0.04, 0.95, false};
    r.t_scale = 0.015;
    r.t_df = 5.5;
    std::stringstream ss;
    write_predictions(ss, {r}, false);
    const auto back = read_predictions(ss, 0.95);
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0].t_scale, r.t_scale);
    EXPECT_EQ(back[0].t_df, r.t_df);
    EXPECT_FALSE(back[0].aleatoric.has_value());
}

TEST(Prepare, EveryValidationAndTestDayGetsAWindow) {
    const auto cfg = tiny(scratch("prep"));
    const auto inputs = load_inputs(cfg);
    ASSERT_EQ(inputs.size(), 1u);
    const auto d = prepare_symbol(inputs[0], cfg);
    EXPECT_EQ(d.val.size(), d.val_dates.size());
    EXPECT_EQ(d.test.size(), d.test_dates.size());
    EXPECT_EQ(d.test.size() + d.val.size() + d.train.size() + cfg.model.lstm.lookback, 299u);
    EXPECT_GE(d.test_dates.front(), cfg.cutoff);
}

TEST(Pipeline, SmallRunWritesTablesWithNaPattern) {
    auto cfg = tiny(scratch("run"));
    cfg.methods = {Method::mse, Method::huber, Method::evidential, Method::conformal_base};
    const auto summary = run_experiment(cfg);
    EXPECT_EQ(summary.exit_code(), 0);
    const auto dir = cfg.output_dir / "reports" / "SYM01";
    const auto prob = lines(slurp(dir / "probabilistic.csv"));
    ASSERT_EQ(prob.size(), 5u);
    EXPECT_EQ(prob[1], "mse,NA,NA,NA,NA");
    EXPECT_EQ(prob[2], "huber,NA,NA,NA,NA");
    EXPECT_EQ(prob[3].find("NA"), std::string::npos) << prob[3];
    EXPECT_EQ(lines(slurp(dir / "accuracy.csv")).size(), 5u);
    const auto trading = lines(slurp(dir / "trading.csv"));
    ASSERT_EQ(trading.size(), 5u);
    EXPECT_NE(trading[1].find(",NA,NA,NA,NA,NA,NA,NA,NA,NA,NA,NA,NA"), std::string::npos) << trading[1];
    EXPECT_TRUE(fs::exists(cfg.output_dir / "reports" / "report.json"));
    EXPECT_TRUE(fs::exists(cfg.output_dir / "manifest.json"));
    EXPECT_TRUE(fs::exists(cell_dir(cfg, "SYM01", Method::evidential) / "trades_filtered.csv"));
    EXPECT_FALSE(fs::exists(cell_dir(cfg, "SYM01", Method::mse) / "trades_filtered.csv"));
}

TEST(Pipeline, RepeatRunsAreByteIdentical) {
    auto a = tiny(scratch("a"));
    auto b = tiny(scratch("b"));
    a.methods = b.methods = {Method::evidential, Method::quantile};
    run_experiment(a);
    run_experiment(b);
    for (const char* f : {"accuracy.csv", "probabilistic.csv", "trading.csv"}) {
        EXPECT_EQ(slurp(a.output_dir / "reports" / "SYM01" / f), slurp(b.output_dir / "reports" / "SYM01" / f)) << f;
    }
    EXPECT_EQ(slurp(a.output_dir / "reports" / "report.json"), slurp(b.output_dir / "reports" / "report.json"));
    for (auto m : a.methods) {
        EXPECT_EQ(slurp(cell_dir(a, "SYM01", m) / "predictions.csv"), slurp(cell_dir(b, "SYM01", m) / "predictions.csv"));
    }
}

TEST(Pipeline, StagesRunSeparately) {
    auto cfg = tiny(scratch("stages"));
    cfg.methods = {Method::gaussian_nll};
    EXPECT_EQ(run_experiment(cfg, Stage::train).exit_code(), 0);
    EXPECT_TRUE(fs::exists(cell_dir(cfg, "SYM01", Method::gaussian_nll) / "checkpoint.json"));
    EXPECT_EQ(run_experiment(cfg, Stage::evaluate).exit_code(), 0);
    EXPECT_EQ(run_experiment(cfg, Stage::backtest).exit_code(), 0);
    EXPECT_EQ(run_experiment(cfg, Stage::report).exit_code(), 0);
    EXPECT_EQ(lines(slurp(cfg.output_dir / "reports" / "SYM01" / "accuracy.csv")).size(), 2u);
}

TEST(Pipeline, EvaluateWithoutCheckpointFailsTheCell) {
    auto cfg = tiny(scratch("nockpt"));
    cfg.methods = {Method::mse};
    EXPECT_EQ(run_experiment(cfg, Stage::evaluate).exit_code(), 2);
}

}  // namespace
}  // namespace nigcast
