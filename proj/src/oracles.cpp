#include "cbe/oracles.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "cbe/special.hpp"

namespace cbe {

namespace {

constexpr double kPi = std::numbers::pi;

void check_query(const MomentQuery& q)
{
    if (!(q.beta > 0.0) || !std::isfinite(q.beta))
        throw OracleError("beta must be positive");
    if (q.n < 1)
        throw OracleError("n must be at least 1");
    if (!std::isfinite(q.gamma))
        throw OracleError("gamma must be finite");
}

// sum_{l >= 1} log(1 + a^2 / (c + 2l)^2) for c >= 0.
double inner_product_sum(double a, double c)
{
    if (a == 0.0)
        return 0.0;
    const double a2 = a * a;
    auto f = [&](double l) { return std::log1p(a2 / ((c + 2.0 * l) * (c + 2.0 * l))); };
    // Explicit terms until the remainder is smooth on the scale of one step.
    const long lmax = 64 + static_cast<long>(4.0 * std::abs(a));
    CompensatedSum s;
    for (long l = lmax; l >= 1; --l)
        s.add(f(static_cast<double>(l)));
    // Euler-Maclaurin for sum_{l > lmax} f(l): int_{lmax}^inf f - f(lmax)/2 - f'(lmax)/12 + f'''(lmax)/720.
    const double u = c + 2.0 * lmax;
    const double integral = 0.5 * (2.0 * std::abs(a) * std::atan(std::abs(a) / u) - u * std::log1p(a2 / (u * u)));
    // f'(l) and f'''(l) for f(l) = h(u), h(u) = log(1 + a^2/u^2), u = c + 2l.
    const double u2 = u * u;
    const double d1 = -4.0 * a2 / (u * (u2 + a2));
    const double h3 = (4.0 * u * u2 - 12.0 * u * a2) / ((u2 + a2) * (u2 + a2) * (u2 + a2)) - 4.0 / (u * u2);
    const double d3 = 8.0 * h3;
    const double tail = integral - 0.5 * f(static_cast<double>(lmax)) - d1 / 12.0 + d3 / 720.0;
    s.add(tail);
    return s.value();
}

}  // namespace

std::string to_string(MomentKind k)
{
    return k == MomentKind::abs_charpoly ? "abs_charpoly" : "exp_psi";
}

MomentKind moment_kind_from_string(const std::string& s)
{
    if (s == "abs_charpoly")
        return MomentKind::abs_charpoly;
    if (s == "exp_psi")
        return MomentKind::exp_psi;
    throw OracleError("unknown moment kind '" + s + "'");
}

double moment_abs_charpoly(const MomentQuery& q)
{
    check_query(q);
    if (!(q.gamma > -1.0))
        throw OracleError("moment_abs_charpoly requires gamma > -1");
    if (q.gamma == 0.0)
        return 0.0;
    long double acc = 0.0L, comp = 0.0L;
    const long double g = q.gamma, b = q.beta;
    for (int k = q.n - 1; k >= 0; --k) {
        long double x = b * k / 2.0L;
        long double term = std::lgamma(1.0L + x) + std::lgamma(1.0L + g + x) - 2.0L * std::lgamma(1.0L + x + g / 2.0L);
        long double t = acc + term;
        comp += (std::fabs(acc) >= std::fabs(term)) ? (acc - t) + term : (term - t) + acc;
        acc = t;
    }
    return static_cast<double>(acc + comp);
}

namespace {

// 2 (log Gamma(x) - Re log Gamma(x + iy)). For large x the Stirling series is differenced
// term by term, which avoids cancelling two values of size x log x.
double gamma_ratio_term(double x, double y)
{
    if (x < 10.0)
        return 2.0 * (std::lgamma(x) - lgamma_complex({x, y}).real());
    static constexpr double bern[] = {1.0 / 6, -1.0 / 30, 1.0 / 42, -1.0 / 30, 5.0 / 66, -691.0 / 2730, 7.0 / 6};
    const double t = y / x;
    const double phase = std::atan(t);
    double d = (x - 0.5) * 0.5 * std::log1p(t * t) - y * phase;
    for (int m = 1; m <= 7; ++m) {
        const int p = 2 * m - 1;
        const double c = bern[m - 1] / (2.0 * m * p) * std::pow(x, -p);
        const double rel = std::pow(1.0 + t * t, -0.5 * p) * std::cos(p * phase) - 1.0;
        d += c * rel;
    }
    return -2.0 * d;
}

}  // namespace

double moment_exp_psi_gamma_route(const MomentQuery& q)
{
    check_query(q);
    if (q.gamma == 0.0)
        return 0.0;
    CompensatedSum s;
    for (int k = q.n - 1; k >= 0; --k) {
        s.add(gamma_ratio_term(1.0 + 0.5 * k * q.beta, 0.5 * q.gamma));
    }
    return s.value();
}

double moment_exp_psi_product_route(const MomentQuery& q)
{
    check_query(q);
    CompensatedSum s;
    for (int k = q.n - 1; k >= 0; --k)
        s.add(inner_product_sum(q.gamma, k * q.beta));
    return s.value();
}

double moment_exp_psi(const MomentQuery& q)
{
    double a = moment_exp_psi_gamma_route(q);
    double b = moment_exp_psi_product_route(q);
    if (std::abs(a - b) > 1e-10 * std::max(1.0, std::abs(a))) {
        std::ostringstream os;
        os.precision(17);
        os << "exp_psi routes disagree: gamma-route " << a << ", product-route " << b << " (beta=" << q.beta
           << ", n=" << q.n << ", gamma=" << q.gamma << ")";
        throw OracleError(os.str());
    }
    return b;
}

double log_moment(const MomentQuery& q)
{
    return q.kind == MomentKind::abs_charpoly ? moment_abs_charpoly(q) : moment_exp_psi(q);
}

double exp_moment_constant(double beta)
{
    return 1.0 / (2.0 * beta) + kPi * kPi / 24.0;
}

GaussianPrediction clt_prediction(double sigma2, double beta)
{
    if (!(sigma2 >= 0.0))
        throw OracleError("sigma2 must be nonnegative");
    if (!(beta > 0.0))
        throw OracleError("beta must be positive");
    return {2.0 * sigma2 / beta, sigma2 / beta};
}

double gff_covariance(std::complex<double> z, std::complex<double> z2)
{
    if (!(std::abs(z) < 1.0) || !(std::abs(z2) < 1.0))
        throw OracleError("gff_covariance requires points in the open unit disk");
    // Averaging both orders makes the value exactly symmetric under contracted arithmetic.
    const double a = std::log(std::abs(1.0 - std::conj(z) * z2));
    const double b = std::log(std::abs(1.0 - std::conj(z2) * z));
    return -0.25 * (a + b);
}

double maxh_tail_bound(double beta, int n, double t)
{
    if (n < 2 || !(t > 0.0) || !(beta > 0.0))
        throw OracleError("maxh_tail_bound requires n >= 2, t > 0, beta > 0");
    double v = 3.0 * n * std::exp(-beta * t * t / std::log(static_cast<double>(n)));
    return std::min(1.0, v);
}

double free_energy_prediction(double beta, double gamma)
{
    if (!(gamma >= 0.0) || !(beta > 0.0))
        throw OracleError("free energy requires gamma >= 0, beta > 0");
    double crit = std::sqrt(2.0 * beta);
    if (gamma <= crit)
        return gamma * gamma / (2.0 * beta);
    return std::sqrt(2.0 * gamma * gamma / beta) - 1.0;
}

std::pair<double, double> rigidity_band(double beta, int n, double delta)
{
    if (!(beta > 0.0) || n < 2 || !(delta >= 0.0 && delta < 1.0))
        throw OracleError("rigidity_band requires beta > 0, n >= 2, delta in [0, 1)");
    double unit = std::sqrt(2.0 / beta) * std::log(static_cast<double>(n)) / n;
    return {(2.0 - delta) * unit, (2.0 + delta) * unit};
}

}  // namespace cbe
