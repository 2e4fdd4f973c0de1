#include "nigcast/dataio.hpp"

#include "nigcast/errors.hpp"
#include "nigcast/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

namespace nigcast {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end && !s.empty();
}

}  // namespace

Date parse_date(std::string_view text) {
    text = trim(text);
    int y = 0;
    unsigned m = 0, d = 0;
    if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !parse_number(text.substr(0, 4), y) ||
        !parse_number(text.substr(5, 2), m) || !parse_number(text.substr(8, 2), d)) {
        throw DataError("unparseable date '" + std::string(text) + "' (expected YYYY-MM-DD)");
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) throw DataError("invalid calendar date '" + std::string(text) + "'");
    return Date{ymd};
}

std::string format_date(Date d) {
    const std::chrono::year_month_day ymd{d};
    std::ostringstream os;
    os << std::setfill('0') << std::setw(4) << static_cast<int>(ymd.year()) << '-' << std::setw(2)
       << static_cast<unsigned>(ymd.month()) << '-' << std::setw(2) << static_cast<unsigned>(ymd.day());
    return os.str();
}

std::vector<PriceSeries> read_prices(std::istream& in, const std::string& source) {
    std::string line;
    if (!std::getline(in, line)) throw DataError(source + ": empty file");
    const auto header = split_commas(line);
    int col_date = -1, col_symbol = -1, col_close = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "date") col_date = static_cast<int>(i);
        if (header[i] == "symbol") col_symbol = static_cast<int>(i);
        if (header[i] == "close") col_close = static_cast<int>(i);
    }
    std::string missing;
    if (col_date < 0) missing += " date";
    if (col_symbol < 0) missing += " symbol";
    if (col_close < 0) missing += " close";
    if (!missing.empty()) throw DataError(source + ": missing column(s):" + missing);
    const auto width = static_cast<std::size_t>(std::max({col_date, col_symbol, col_close}) + 1);

    std::vector<PriceSeries> out;
    std::map<std::string, std::size_t, std::less<>> index;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_commas(line);
        const auto where = source + ":" + std::to_string(line_no) + ": ";
        if (fields.size() < width) throw DataError(where + "expected at least " + std::to_string(width) + " fields");
        Date date;
        try {
            date = parse_date(fields[static_cast<std::size_t>(col_date)]);
        } catch (const DataError& e) {
            throw DataError(where + e.what());
        }
        const auto close_text = fields[static_cast<std::size_t>(col_close)];
        double close = 0.0;
        if (!parse_number(close_text, close) || !std::isfinite(close)) {
            throw DataError(where + "non-numeric close '" + std::string(close_text) + "'");
        }
        if (close <= 0.0) throw DataError(where + "non-positive close " + std::string(close_text));
        const std::string symbol(fields[static_cast<std::size_t>(col_symbol)]);
        if (symbol.empty()) throw DataError(where + "empty symbol");
        auto it = index.find(symbol);
        if (it == index.end()) {
            it = index.emplace(symbol, out.size()).first;
            out.push_back({symbol, {}});
        }
        out[it->second].observations.push_back({date, close});
    }
    if (out.empty()) throw DataError(source + ": no data rows");
    for (auto& s : out) {
        std::stable_sort(s.observations.begin(), s.observations.end(),
                         [](const Observation& a, const Observation& b) { return a.date < b.date; });
        for (std::size_t i = 1; i < s.observations.size(); ++i) {
            if (s.observations[i].date == s.observations[i - 1].date) {
                throw DataError(source + ": duplicate date " + format_date(s.observations[i].date) + " for symbol " +
                                s.symbol);
            }
        }
    }
    return out;
}

std::vector<PriceSeries> load_prices(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open price file " + path.string());
    return read_prices(in, path.string());
}

void write_prices(std::ostream& out, const std::vector<PriceSeries>& series) {
    out << "date,symbol,close\n";
    out << std::setprecision(17);
    for (const auto& s : series) {
        for (const auto& o : s.observations) out << format_date(o.date) << ',' << s.symbol << ',' << o.close << '\n';
    }
}

void save_prices(const std::filesystem::path& path, const std::vector<PriceSeries>& series) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    write_prices(out, series);
}

ReturnSeries log_returns(const PriceSeries& series) {
    const auto& obs = series.observations;
    if (obs.size() < 2) throw ContractError("log_returns: series " + series.symbol + " has fewer than 2 observations");
    ReturnSeries r;
    r.symbol = series.symbol;
    r.dates.reserve(obs.size() - 1);
    r.values.reserve(obs.size() - 1);
    for (std::size_t i = 1; i < obs.size(); ++i) {
        r.dates.push_back(obs[i].date);
        r.values.push_back(std::log(obs[i].close / obs[i - 1].close));
    }
    return r;
}

namespace {

ReturnSeries slice(const ReturnSeries& r, std::size_t begin, std::size_t end) {
    ReturnSeries out;
    out.symbol = r.symbol;
    out.dates.assign(r.dates.begin() + static_cast<std::ptrdiff_t>(begin), r.dates.begin() + static_cast<std::ptrdiff_t>(end));
    out.values.assign(r.values.begin() + static_cast<std::ptrdiff_t>(begin),
                      r.values.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
}

}  // namespace

SplitSegments temporal_split(const ReturnSeries& returns, Date cutoff, double val_fraction) {
    if (returns.size() == 0) throw ContractError("temporal_split: empty return series");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("temporal_split: val_fraction must lie in (0, 1)");
    const auto first_test = static_cast<std::size_t>(
        std::lower_bound(returns.dates.begin(), returns.dates.end(), cutoff) - returns.dates.begin());
    const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(first_test)));
    const std::size_t n_train = first_test - n_val;
    if (n_train == 0) throw ConfigError("temporal_split: no training data before " + format_date(cutoff) + " for " + returns.symbol);
    if (n_val == 0) throw ConfigError("temporal_split: no validation data for " + returns.symbol);
    if (first_test == returns.size()) throw ConfigError("temporal_split: no test data on or after " + format_date(cutoff) + " for " + returns.symbol);
    return {slice(returns, 0, n_train), slice(returns, n_train, first_test), slice(returns, first_test, returns.size())};
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw ContractError("percentile: empty input");
    if (!(p >= 0.0 && p <= 100.0)) throw ContractError("percentile: p must lie in [0, 100]");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p / 100.0;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

NormStats fit_norm(const ReturnSeries& train) {
    if (train.size() < 10) throw ContractError("fit_norm: training segment of " + train.symbol + " has fewer than 10 points");
    NormStats s;
    s.symbol = train.symbol;
    s.lower_clip = percentile(train.values, 1.0);
    s.upper_clip = percentile(train.values, 99.0);
    double sum = 0.0;
    for (double v : train.values) sum += std::clamp(v, s.lower_clip, s.upper_clip);
    s.mean = sum / static_cast<double>(train.size());
    double ss = 0.0;
    for (double v : train.values) {
        const double d = std::clamp(v, s.lower_clip, s.upper_clip) - s.mean;
        ss += d * d;
    }
    s.std = std::sqrt(ss / static_cast<double>(train.size()));
    if (s.lower_clip == s.upper_clip || !(s.std > 0.0)) throw DataError("degenerate series " + train.symbol + ": zero variance in the training segment");
    return s;
}

std::vector<double> apply_norm(const std::vector<double>& values, const NormStats& stats) {
    std::vector<double> out;
    out.reserve(values.size());
    for (double v : values) out.push_back((std::clamp(v, stats.lower_clip, stats.upper_clip) - stats.mean) / stats.std);
    return out;
}

NormalizedSplit fit_and_apply_norm(const SplitSegments& raw) {
    NormalizedSplit out;
    out.stats = fit_norm(raw.train);
    out.segments = raw;
    out.segments.train.values = apply_norm(raw.train.values, out.stats);
    out.segments.val.values = apply_norm(raw.val.values, out.stats);
    out.segments.test.values = apply_norm(raw.test.values, out.stats);
    return out;
}

SampleSet make_sequences(std::span<const double> segment, std::size_t lookback, std::span<const double> context) {
    if (lookback == 0) throw ContractError("make_sequences: lookback must be positive");
    const std::size_t ctx = std::min(context.size(), lookback);
    std::vector<double> source(context.end() - static_cast<std::ptrdiff_t>(ctx), context.end());
    source.insert(source.end(), segment.begin(), segment.end());
    const std::size_t n = source.size() > lookback ? source.size() - lookback : 0;
    SampleSet out;
    out.inputs = diff::Tensor({n, lookback, 1});
    out.targets.reserve(n);
    auto& data = out.inputs.values();
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(source.begin() + static_cast<std::ptrdiff_t>(i), lookback,
                    data.begin() + static_cast<std::ptrdiff_t>(i * lookback));
        out.targets.push_back(kTargetScale * source[i + lookback]);
    }
    return out;
}

double denormalize_mean(double scaled, const NormStats& stats) { return scaled / kTargetScale * stats.std + stats.mean; }

double denormalize_scale(double scaled, const NormStats& stats) { return scaled / kTargetScale * stats.std; }

std::string_view synthetic_kind_name(SyntheticKind k) {
    switch (k) {
        case SyntheticKind::heteroscedastic_cubic: return "heteroscedastic_cubic";
        case SyntheticKind::iid_gaussian_returns: return "iid_gaussian_returns";
        case SyntheticKind::random_walk_prices: return "random_walk_prices";
    }
    return "unknown";
}

SyntheticKind parse_synthetic_kind(std::string_view name) {
    for (auto k : {SyntheticKind::heteroscedastic_cubic, SyntheticKind::iid_gaussian_returns,
                   SyntheticKind::random_walk_prices}) {
        if (synthetic_kind_name(k) == name) return k;
    }
    throw ConfigError("unknown synthetic kind '" + std::string(name) + "'");
}

double cubic_noise_sigma(double x) { return 0.1 + 0.2 * std::abs(x); }

CubicSample gen_cubic(std::size_t n, std::uint64_t seed, double x_lo, double x_hi) {
    if (!(x_lo < x_hi)) throw ContractError("gen_cubic: empty x range");
    Rng rng(seed);
    CubicSample s;
    s.x.reserve(n);
    s.y.reserve(n);
    s.sigma.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = rng.uniform(x_lo, x_hi);
        const double sd = cubic_noise_sigma(x);
        s.x.push_back(x);
        s.sigma.push_back(sd);
        s.y.push_back(x * x * x / 10.0 + sd * rng.normal());
    }
    return s;
}

std::vector<double> gen_iid_returns(std::size_t n, std::uint64_t seed, double sigma) {
    Rng rng(seed);
    std::vector<double> out(n);
    for (auto& v : out) v = sigma * rng.normal();
    return out;
}

PriceSeries gen_random_walk(const std::string& symbol, std::size_t n, std::uint64_t seed, Date start,
                            double start_price, double daily_vol) {
    if (!(start_price > 0.0)) throw ContractError("gen_random_walk: start price must be positive");
    Rng rng(seed);
    PriceSeries s{symbol, {}};
    s.observations.reserve(n);
    double log_price = std::log(start_price);
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) log_price += daily_vol * rng.normal() - 0.5 * daily_vol * daily_vol;
        s.observations.push_back({start + std::chrono::days{static_cast<int>(i)}, std::exp(log_price)});
    }
    return s;
}

PriceSeries gen_synthetic_prices(SyntheticKind kind, const std::string& symbol, std::size_t n, std::uint64_t seed,
                                 Date start) {
    if (n < 100) throw ContractError("gen_synthetic_prices: n must be at least 100");
    switch (kind) {
        case SyntheticKind::random_walk_prices: return gen_random_walk(symbol, n, seed, start);
        case SyntheticKind::iid_gaussian_returns: {
            const auto r = gen_iid_returns(n - 1, seed);
            PriceSeries s{symbol, {}};
            double p = 100.0;
            s.observations.push_back({start, p});
            for (std::size_t i = 0; i < r.size(); ++i) {
                p *= std::exp(r[i]);
                s.observations.push_back({start + std::chrono::days{static_cast<int>(i + 1)}, p});
            }
            return s;
        }
        case SyntheticKind::heteroscedastic_cubic: break;
    }
    throw ConfigError("synthetic kind '" + std::string(synthetic_kind_name(kind)) + "' does not produce prices");
}

}  // namespace nigcast
