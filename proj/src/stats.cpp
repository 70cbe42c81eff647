#include "cbe/stats.hpp"

#include <algorithm>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <numbers>

#include "cbe/special.hpp"

namespace cbe {

namespace {

void check_finite(const std::vector<double>& v)
{
    for (double x : v)
        if (!std::isfinite(x))
            throw StatsError("non-finite value in sample");
}

}  // namespace

RunSummary summarize(const std::vector<double>& values, const Cdf& reference)
{
    const std::size_t n = values.size();
    if (n < 2)
        throw StatsError("summary needs at least two values");
    check_finite(values);
    CompensatedSum s;
    for (double x : values)
        s.add(x);
    const double mean = s.value() / n;
    CompensatedSum m2, m3, m4;
    for (double x : values) {
        double d = x - mean;
        m2.add(d * d);
        m3.add(d * d * d);
        m4.add(d * d * d * d);
    }
    const double c2 = m2.value() / n, c3 = m3.value() / n, c4 = m4.value() / n;

    RunSummary r;
    r.replicates = n;
    r.estimate = mean;
    r.variance = m2.value() / (n - 1);
    r.std_error = std::sqrt(r.variance / n);
    r.ci95 = {mean - 1.96 * r.std_error, mean + 1.96 * r.std_error};
    r.n_eff = static_cast<double>(n);
    // Var(s^2) ~ (mu4 - mu2^2 (n-3)/(n-1)) / n.
    double vv = (c4 - c2 * c2 * (n - 3.0) / (n - 1.0)) / n;
    r.variance_se = std::sqrt(std::max(vv, 0.0));
    if (c2 > 0.0) {
        r.skewness = c3 / std::pow(c2, 1.5);
        r.kurtosis = c4 / (c2 * c2) - 3.0;
    }
    if (reference) {
        r.ks_statistic = ks_statistic(values, reference);
        r.ks_pvalue = kolmogorov_pvalue(r.ks_statistic, n);
    }
    return r;
}

RunSummary summarize_weighted(const std::vector<double>& values, const std::vector<double>& log_weights)
{
    const std::size_t n = values.size();
    if (n < 2)
        throw StatsError("summary needs at least two values");
    if (log_weights.size() != n)
        throw StatsError("values and weights differ in length");
    check_finite(values);
    check_finite(log_weights);
    const double lmax = *std::max_element(log_weights.begin(), log_weights.end());
    std::vector<double> w(n);
    CompensatedSum sw, sw2, swx;
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = std::exp(log_weights[i] - lmax);
        sw.add(w[i]);
        sw2.add(w[i] * w[i]);
        swx.add(w[i] * values[i]);
    }
    const double W = sw.value();
    const double mean = swx.value() / W;
    CompensatedSum num, var;
    for (std::size_t i = 0; i < n; ++i) {
        double d = values[i] - mean;
        num.add(w[i] * w[i] * d * d);
        var.add(w[i] * d * d);
    }
    RunSummary r;
    r.replicates = n;
    r.estimate = mean;
    r.std_error = std::sqrt(num.value()) / W;
    r.ci95 = {mean - 1.96 * r.std_error, mean + 1.96 * r.std_error};
    r.n_eff = W * W / sw2.value();
    r.variance = var.value() / W;
    return r;
}

LogLaplace log_laplace(const std::vector<double>& values, double t)
{
    const std::size_t n = values.size();
    if (n < 2)
        throw StatsError("log-Laplace estimate needs at least two values");
    check_finite(values);
    double m = -std::numeric_limits<double>::infinity();
    for (double x : values)
        m = std::max(m, t * x);
    CompensatedSum s, s2;
    for (double x : values) {
        double e = std::exp(t * x - m);
        s.add(e);
        s2.add(e * e);
    }
    double mean = s.value() / n;
    double var = std::max(s2.value() / n - mean * mean, 0.0) * n / (n - 1.0);
    return {m + std::log(mean), std::sqrt(var / n) / mean};
}

double normal_cdf(double x, double mean, double variance)
{
    if (!(variance > 0.0))
        throw StatsError("normal reference with degenerate variance");
    return 0.5 * std::erfc(-(x - mean) / std::sqrt(2.0 * variance));
}

double ks_statistic(std::vector<double> values, const Cdf& cdf)
{
    if (values.empty())
        throw StatsError("empty sample");
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    double d = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        double f = cdf(values[i]);
        d = std::max({d, (i + 1) / n - f, f - i / n});
    }
    return d;
}

double kolmogorov_pvalue(double d, std::size_t n)
{
    const double sn = std::sqrt(static_cast<double>(n));
    const double lambda = (sn + 0.12 + 0.11 / sn) * d;
    if (lambda < 0.2)
        return 1.0;
    // Q_KS(lambda) = 2 sum_{k>=1} (-1)^{k-1} e^{-2 k^2 lambda^2}.
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 ? 2.0 : -2.0) * term;
        if (term < 1e-18)
            break;
    }
    return std::clamp(sum, 0.0, 1.0);
}

double binomial_upper_tail(std::size_t k, std::size_t n, double p)
{
    if (k == 0)
        return 1.0;
    if (k > n)
        return 0.0;
    if (p <= 0.0)
        return 0.0;
    if (p >= 1.0)
        return 1.0;
    return boost::math::ibeta(static_cast<double>(k), static_cast<double>(n - k + 1), p);
}

double quantile(std::vector<double> values, double q)
{
    if (values.empty())
        throw StatsError("empty sample");
    std::sort(values.begin(), values.end());
    double pos = q * (values.size() - 1);
    std::size_t i = static_cast<std::size_t>(std::floor(pos));
    if (i + 1 >= values.size())
        return values.back();
    double f = pos - i;
    return values[i] * (1.0 - f) + values[i + 1] * f;
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

}  // namespace cbe
