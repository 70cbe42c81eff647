#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace cbe {

class StatsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct RunSummary {
    std::size_t replicates = 0;
    double estimate = 0.0;   // mean, or self-normalized mean when reweighted
    double std_error = 0.0;
    Interval ci95;           // estimate +- 1.96 std_error
    double n_eff = 0.0;      // replicates, or the ESS when reweighted
    double variance = 0.0;   // unbiased sample variance
    double variance_se = 0.0;
    double skewness = 0.0;
    double kurtosis = 0.0;   // excess
    double ks_statistic = std::numeric_limits<double>::quiet_NaN();
    double ks_pvalue = std::numeric_limits<double>::quiet_NaN();
};

using Cdf = std::function<double(double)>;

// Throws StatsError for fewer than two values or non-finite input.
RunSummary summarize(const std::vector<double>& values, const Cdf& reference = {});

// Self-normalized importance-sampling mean with weights exp(log_weights), delta-method SE
// and Kish ESS.
RunSummary summarize_weighted(const std::vector<double>& values, const std::vector<double>& log_weights);

// log mean exp(t x_i) and its delta-method standard error.
struct LogLaplace {
    double value = 0.0;
    double std_error = 0.0;
};
LogLaplace log_laplace(const std::vector<double>& values, double t);

double normal_cdf(double x, double mean, double variance);

// One-sample Kolmogorov-Smirnov statistic and the asymptotic p-value with the
// Stephens small-sample correction.
double ks_statistic(std::vector<double> values, const Cdf& cdf);
double kolmogorov_pvalue(double d, std::size_t n);

// P[X >= k] for X ~ Binomial(n, p).
double binomial_upper_tail(std::size_t k, std::size_t n, double p);

double median(std::vector<double> values);
double quantile(std::vector<double> values, double q);

}  // namespace cbe
