#pragma once

// Price ingestion, return construction, splitting, normalization and
// sequence windows, plus the synthetic generators used by tests and smoke runs.

#include "nigcast/optim.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace nigcast {

using Date = std::chrono::sys_days;

/// Strict YYYY-MM-DD. Throws DataError.
Date parse_date(std::string_view text);
std::string format_date(Date d);

struct Observation {
    Date date;
    double close = 0.0;
};

struct PriceSeries {
    std::string symbol;
    std::vector<Observation> observations;
};

/// CSV with header `date,symbol,close` (column order free). One series per
/// symbol in order of first appearance, each sorted by date.
std::vector<PriceSeries> read_prices(std::istream& in, const std::string& source = "<stream>");
std::vector<PriceSeries> load_prices(const std::filesystem::path& path);
void write_prices(std::ostream& out, const std::vector<PriceSeries>& series);
void save_prices(const std::filesystem::path& path, const std::vector<PriceSeries>& series);

/// Values indexed by the date of the later observation.
struct ReturnSeries {
    std::string symbol;
    std::vector<Date> dates;
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }
};

/// r_t = ln(P_t / P_{t-1}).
ReturnSeries log_returns(const PriceSeries& series);

struct SplitSegments {
    ReturnSeries train, val, test;
};

/// test = dates >= cutoff; the last `val_fraction` of the earlier part is validation.
SplitSegments temporal_split(const ReturnSeries& returns, Date cutoff, double val_fraction = 0.2);

/// Linear interpolation between order statistics, p in [0, 100].
double percentile(std::vector<double> values, double p);

struct NormStats {
    std::string symbol;
    double mean = 0.0;
    double std = 1.0;
    double lower_clip = 0.0;
    double upper_clip = 0.0;
};

/// Clip to the train segment's [p1, p99], then standardize (population std) with
/// the train segment's clipped mean and std. Only the train segment is looked at
/// when fitting.
NormStats fit_norm(const ReturnSeries& train);
std::vector<double> apply_norm(const std::vector<double>& values, const NormStats& stats);

struct NormalizedSplit {
    SplitSegments segments;  // normalized values, original dates
    NormStats stats;
};

NormalizedSplit fit_and_apply_norm(const SplitSegments& raw);

inline constexpr double kTargetScale = 100.0;

/// Windows of `lookback` values and the next value times kTargetScale as the
/// target. `context` values (typically the tail of the preceding segment) are
/// prepended to the window source but never produce targets themselves.
/// Sample count = segment length - max(0, lookback - context length), never negative.
SampleSet make_sequences(std::span<const double> segment, std::size_t lookback,
                         std::span<const double> context = {});

/// Model-scale outputs back to return units.
double denormalize_mean(double scaled, const NormStats& stats);
double denormalize_scale(double scaled, const NormStats& stats);

// --- synthetic data ---------------------------------------------------------

enum class SyntheticKind { heteroscedastic_cubic, iid_gaussian_returns, random_walk_prices };

std::string_view synthetic_kind_name(SyntheticKind k);
SyntheticKind parse_synthetic_kind(std::string_view name);

/// Noise scale of the cubic benchmark: 0.1 + 0.2 |x|.
double cubic_noise_sigma(double x);

struct CubicSample {
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> sigma;
};

/// y = x^3 / 10 + sigma(x) eps, x uniform on [x_lo, x_hi].
CubicSample gen_cubic(std::size_t n, std::uint64_t seed, double x_lo = -4.0, double x_hi = 4.0);

/// i.i.d. N(0, sigma^2) draws.
std::vector<double> gen_iid_returns(std::size_t n, std::uint64_t seed, double sigma = 0.01);

/// Geometric random walk of n daily closes starting at `start_price`.
PriceSeries gen_random_walk(const std::string& symbol, std::size_t n, std::uint64_t seed, Date start,
                            double start_price = 100.0, double daily_vol = 0.02);

/// Price series for a return-style kind: random_walk_prices or
/// iid_gaussian_returns (compounded from 100). Requires n >= 100.
PriceSeries gen_synthetic_prices(SyntheticKind kind, const std::string& symbol, std::size_t n, std::uint64_t seed,
                                 Date start);

}  // namespace nigcast
