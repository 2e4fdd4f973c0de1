#include "nigcast/head.hpp"

#include "nigcast/errors.hpp"
#include "nigcast/special.hpp"

#include <algorithm>
#include <cmath>

namespace nigcast {

std::string_view method_name(Method m) {
    switch (m) {
        case Method::mse: return "mse";
        case Method::huber: return "huber";
        case Method::gaussian_nll: return "gaussian_nll";
        case Method::student_t_nll: return "student_t_nll";
        case Method::quantile: return "quantile";
        case Method::mixture: return "mixture";
        case Method::conformal_base: return "conformal_base";
        case Method::evidential: return "evidential";
    }
    return "unknown";
}

Method parse_method(std::string_view name) {
    for (Method m : kAllMethods) {
        if (method_name(m) == name) return m;
    }
    throw ConfigError("unknown method '" + std::string(name) + "'");
}

bool is_point_method(Method m) { return m == Method::mse || m == Method::huber; }

std::size_t output_dim(const HeadSpec& head) {
    switch (head.method) {
        case Method::mse:
        case Method::huber:
        case Method::conformal_base: return 1;
        case Method::gaussian_nll: return 2;
        case Method::student_t_nll: return 3;
        case Method::quantile: return head.quantile_levels.size();
        case Method::mixture: return 3 * head.n_components;
        case Method::evidential: return 4;
    }
    return 0;
}

void validate(const HeadSpec& head) {
    if (head.method == Method::quantile) {
        if (head.quantile_levels.empty()) throw ContractError("quantile head needs at least one level");
        for (double q : head.quantile_levels) {
            if (!(q > 0.0 && q < 1.0)) throw ContractError("quantile levels must lie in (0, 1)");
        }
        if (!std::is_sorted(head.quantile_levels.begin(), head.quantile_levels.end())) {
            throw ContractError("quantile levels must be sorted ascending");
        }
    }
    if (head.method == Method::mixture && head.n_components == 0) {
        throw ContractError("mixture head needs at least one component");
    }
    if (head.bounded_mean && !(head.bound_scale > 0.0)) throw ContractError("bound_scale must be positive");
}

double bound_location(const HeadSpec& head, double raw) {
    return head.bounded_mean ? head.bound_scale * std::tanh(raw) : raw;
}

diff::Var bound_location(const HeadSpec& head, diff::Var raw) {
    return head.bounded_mean ? diff::tanh(raw) * head.bound_scale : raw;
}

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

double mixture_cdf(std::span<const double> w, std::span<const double> mu, std::span<const double> sigma, double y) {
    double s = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * special::normal_cdf((y - mu[k]) / sigma[k]);
    return s;
}

}  // namespace

double mixture_quantile(std::span<const double> weights, std::span<const double> means,
                        std::span<const double> sigmas, double p) {
    double lo = means[0], hi = means[0];
    double smax = 0.0;
    for (std::size_t k = 0; k < means.size(); ++k) {
        lo = std::min(lo, means[k]);
        hi = std::max(hi, means[k]);
        smax = std::max(smax, sigmas[k]);
    }
    lo -= 40.0 * smax;
    hi += 40.0 * smax;
    for (int i = 0; i < 200 && hi - lo > 1e-13 * std::max(1.0, std::fabs(hi)); ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mixture_cdf(weights, means, sigmas, mid) < p) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

PredictiveSummary summarize(const HeadSpec& head, std::span<const double> raw, double level) {
    if (raw.size() != output_dim(head)) throw ContractError("summarize: head output width mismatch");
    constexpr double kFloor = 1e-6;
    const double z = special::normal_quantile(0.5 * (1.0 + level));
    PredictiveSummary s;
    switch (head.method) {
        case Method::mse:
        case Method::huber:
        case Method::conformal_base:
            s.mean = bound_location(head, raw[0]);
            break;
        case Method::gaussian_nll: {
            s.mean = bound_location(head, raw[0]);
            const double sigma = std::sqrt(softplus(raw[1]) + kFloor);
            s.sigma = sigma;
            s.interval = Interval{s.mean - z * sigma, s.mean + z * sigma, level, false};
            s.gaussian_crps = true;
            break;
        }
        case Method::student_t_nll: {
            s.mean = bound_location(head, raw[0]);
            const double scale = softplus(raw[1]) + kFloor;
            const double df = softplus(raw[2]) + 2.0 + kFloor;
            const double t = special::student_t_upper_quantile(df, 0.5 * (1.0 - level));
            s.sigma = scale * std::sqrt(df / (df - 2.0));
            s.interval = Interval{s.mean - t * scale, s.mean + t * scale, level, false};
            s.gaussian_crps = true;
            s.t_scale = scale;
            s.t_df = df;
            break;
        }
        case Method::quantile: {
            std::vector<double> q(raw.size());
            for (std::size_t k = 0; k < raw.size(); ++k) q[k] = bound_location(head, raw[k]);
            std::sort(q.begin(), q.end());  // repairs crossed quantiles
            const auto& levels = head.quantile_levels;
            std::size_t median = 0;
            for (std::size_t k = 1; k < levels.size(); ++k) {
                if (std::fabs(levels[k] - 0.5) < std::fabs(levels[median] - 0.5)) median = k;
            }
            s.mean = q[median];
            if (levels.size() >= 2) {
                const double covered = levels.back() - levels.front();
                s.interval = Interval{q.front(), q.back(), covered, false};
                s.sigma = (q.back() - q.front()) / (2.0 * special::normal_quantile(0.5 * (1.0 + covered)));
            }
            break;
        }
        case Method::mixture: {
            const std::size_t K = head.n_components;
            std::vector<double> w(K), mu(K), sg(K);
            const double mx = *std::max_element(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(K));
            double zsum = 0.0;
            for (std::size_t k = 0; k < K; ++k) zsum += (w[k] = std::exp(raw[k] - mx));
            double mean = 0.0, second = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                w[k] /= zsum;
                mu[k] = bound_location(head, raw[K + k]);
                sg[k] = softplus(raw[2 * K + k]) + kFloor;
                mean += w[k] * mu[k];
                second += w[k] * (sg[k] * sg[k] + mu[k] * mu[k]);
            }
            s.mean = mean;
            s.sigma = std::sqrt(std::max(second - mean * mean, 0.0));
            s.interval = Interval{mixture_quantile(w, mu, sg, 0.5 * (1.0 - level)),
                                  mixture_quantile(w, mu, sg, 0.5 * (1.0 + level)), level, false};
            s.gaussian_crps = true;
            break;
        }
        case Method::evidential: {
            const NigParams p = constrain_nig(raw, head.bounded_mean, head.bound_scale);
            const auto u = decompose(p);
            s.mean = u.mean;
            s.sigma = std::sqrt(u.total_variance);
            s.interval = predictive_interval(p, level);
            s.nig = u;
            s.gaussian_crps = true;
            s.t_scale = predictive_scale(p);
            s.t_df = 2.0 * p.alpha;
            break;
        }
    }
    return s;
}

}  // namespace nigcast
