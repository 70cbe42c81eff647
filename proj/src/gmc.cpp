#include "cbe/gmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "cbe/log.hpp"
#include "cbe/quadrature.hpp"

namespace cbe {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double log_mean_exp(const std::vector<double>& v, double gamma)
{
    double peak = -std::numeric_limits<double>::infinity();
    for (double x : v)
        peak = std::max(peak, gamma * x);
    if (!std::isfinite(peak))
        return peak;
    double acc = 0.0;
    for (double x : v)
        acc += std::exp(gamma * x - peak);
    return peak + std::log(acc / static_cast<double>(v.size()));
}

double wrap_pm_pi(double x)
{
    return std::remainder(x, kTwoPi);
}

// Length of A intersected with (B + delta) on the circle.
double arc_overlap(const Arc& a, const Arc& b, double delta)
{
    double total = 0.0;
    for (int n = -2; n <= 2; ++n) {
        double lo = std::max(a.start, b.start + delta + kTwoPi * n);
        double hi = std::min(a.start + a.length, b.start + b.length + delta + kTwoPi * n);
        if (hi > lo)
            total += hi - lo;
    }
    return total;
}

std::size_t boundary_grid(int n, std::size_t grid)
{
    return grid ? grid : default_field_grid(n);
}

}  // namespace

double GmcMeasureGrid::total_mass() const
{
    double s = 0.0;
    for (double w : weights)
        s += w;
    return s / static_cast<double>(weights.size());
}

double GmcMeasureGrid::mass(const Arc& a) const
{
    const std::size_t m = weights.size();
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double th = kTwoPi * static_cast<double>(i) / static_cast<double>(m);
        double rel = std::fmod(th - a.start, kTwoPi);
        if (rel < 0.0)
            rel += kTwoPi;
        if (rel < a.length - 1e-12)
            s += weights[i];
    }
    return s / static_cast<double>(m);
}

double asymptotic_log_normalizer(double beta, double gamma, double r)
{
    if (!(r >= 0.0 && r < 1.0))
        throw GmcError("radius must lie in [0, 1)");
    return -(gamma * gamma / (2.0 * beta)) * std::log1p(-r * r);
}

double monte_carlo_log_normalizer(const std::vector<FieldGrid>& fields, double gamma)
{
    if (fields.empty())
        throw GmcError("monte carlo normalizer needs at least one replicate");
    std::vector<double> per(fields.size());
    for (std::size_t i = 0; i < fields.size(); ++i)
        per[i] = log_mean_exp(fields[i].values, gamma);
    return log_mean_exp(per, 1.0);
}

GmcMeasureGrid build_measure(const FieldGrid& field, double gamma, NormalizerMode mode, double log_normalizer)
{
    if (field.kind == FieldKind::counting)
        throw GmcError("GMC measures use log|P_N| or Psi fields");
    if (!(field.r > 0.0 && field.r < 1.0))
        throw GmcError("GMC measures need a radius in (0, 1)");
    const double beta = field.source.beta;
    if (std::abs(gamma) > std::sqrt(2.0 * beta)) {
        std::ostringstream os;
        os << "supercritical gamma " << gamma << " > sqrt(2 beta) = " << std::sqrt(2.0 * beta);
        log_warning(os.str());
    }
    GmcMeasureGrid g;
    g.gamma = gamma;
    g.r = field.r;
    g.normalizer_mode = mode;
    g.log_normalizer = mode == NormalizerMode::asymptotic ? asymptotic_log_normalizer(beta, gamma, field.r)
                                                          : log_normalizer;
    g.weights.resize(field.size());
    for (std::size_t i = 0; i < field.size(); ++i)
        g.weights[i] = gamma == 0.0 ? 1.0 : std::exp(gamma * field.values[i] - g.log_normalizer);
    return g;
}

GmcMeasureGrid build_measure(const SpectrumSample& s, double gamma, double r, FieldKind kind,
                             NormalizerMode mode, double log_normalizer, std::size_t grid)
{
    FieldGrid f = field_grid(s, kind, r, boundary_grid(s.n(), grid));
    return build_measure(f, gamma, mode, log_normalizer);
}

double mass_second_moment(double gamma, double r, double beta, const Arc& a, const Arc& b)
{
    if (!(r >= 0.0 && r < 1.0))
        throw GmcError("radius must lie in [0, 1)");
    const double p = gamma * gamma / beta;
    if (p >= 1.0) {
        std::ostringstream os;
        os << "gamma^2/beta = " << p << " is outside the L2 regime; second-moment prediction withheld";
        throw GmcError(os.str());
    }
    if (gamma == 0.0)
        return a.length * b.length / (kTwoPi * kTwoPi);
    const double r2 = r * r;
    auto f = [&](double d) {
        double h = std::sin(0.5 * d);
        double mod2 = (1.0 - r2) * (1.0 - r2) + 4.0 * r2 * h * h;
        return std::pow(mod2, -0.5 * p) * arc_overlap(a, b, d);
    };
    std::vector<double> cuts = {-kPi, kPi, 0.0};
    for (double scale : {1.0, 10.0, 100.0}) {
        double e = scale * (1.0 - r2);
        if (e < kPi) {
            cuts.push_back(e);
            cuts.push_back(-e);
        }
    }
    for (int n = -1; n <= 1; ++n) {
        for (double x : {a.start - b.start - b.length, a.start - b.start, a.start + a.length - b.start - b.length,
                         a.start + a.length - b.start}) {
            double y = wrap_pm_pi(x + kTwoPi * n);
            if (y > -kPi && y < kPi)
                cuts.push_back(y);
        }
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end(), [](double x, double y) { return y - x < 1e-12; }), cuts.end());
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        acc += integrate_adaptive(f, cuts[i], cuts[i + 1], 1e-12);
    return acc / (kTwoPi * kTwoPi);
}

double thick_point_measure(const FieldGrid& field, double gamma)
{
    if (!(gamma > 0.0))
        throw GmcError("thick points need gamma > 0");
    if (field.r != 1.0)
        throw GmcError("thick points are defined on the boundary field");
    const double n = field.source.n;
    const double level = gamma / field.source.beta * std::log(n);
    std::size_t count = 0;
    for (double v : field.values)
        count += v >= level;
    return kTwoPi * static_cast<double>(count) / static_cast<double>(field.size());
}

double thick_point_measure(const SpectrumSample& s, double gamma, FieldKind kind, std::size_t grid)
{
    FieldGrid f = field_grid(s, kind, 1.0, boundary_grid(s.n(), grid), 0.5);
    return thick_point_measure(f, gamma);
}

double log_partition_rate(const FieldGrid& field, double gamma)
{
    if (gamma == 0.0)
        return 0.0;
    return log_mean_exp(field.values, gamma) / std::log(static_cast<double>(field.source.n));
}

double free_energy(const std::vector<SpectrumSample>& samples, double gamma, std::size_t grid)
{
    if (!(gamma >= 0.0))
        throw GmcError("free energy needs gamma >= 0");
    if (samples.empty())
        throw GmcError("free energy needs at least one sample");
    if (gamma == 0.0)
        return 0.0;
    double acc = 0.0;
    for (const auto& s : samples) {
        FieldGrid f = field_grid(s, FieldKind::log_abs_P, 1.0, boundary_grid(s.n(), grid), 0.5);
        acc += log_partition_rate(f, gamma);
    }
    return acc / static_cast<double>(samples.size());
}

}  // namespace cbe
