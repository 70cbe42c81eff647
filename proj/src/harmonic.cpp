#include "cbe/harmonic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "cbe/fft.hpp"
#include "cbe/log.hpp"
#include "cbe/quadrature.hpp"

namespace cbe {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::complex<double> ik_pow(int k, int order)
{
    std::complex<double> r = 1.0;
    for (int i = 0; i < order; ++i)
        r *= std::complex<double>(0.0, k);
    return r;
}

std::vector<double> synthesize(const std::vector<std::complex<double>>& c, std::size_t m)
{
    if (m < 2 * c.size())
        throw HarmonicError("grid of " + std::to_string(m) + " points cannot carry bandwidth " +
                            std::to_string(c.size() - 1));
    return irfft(c, m);
}

}  // namespace

PeriodicFn PeriodicFn::from_grid(std::vector<double> values)
{
    const std::size_t m = values.size();
    if (m < 2)
        throw HarmonicError("periodic grid needs at least 2 points");
    auto half = rfft(values);
    const std::size_t k_max = (m % 2 == 0) ? m / 2 - 1 : (m - 1) / 2;
    PeriodicFn f;
    f.coeffs_.resize(k_max + 1);
    for (std::size_t k = 0; k <= k_max; ++k)
        f.coeffs_[k] = half[k] / static_cast<double>(m);
    f.coeffs_[0] = {f.coeffs_[0].real(), 0.0};
    f.grid_ = std::move(values);
    return f;
}

PeriodicFn PeriodicFn::from_coefficients(std::vector<std::complex<double>> coeffs, std::size_t m)
{
    if (coeffs.empty())
        coeffs.push_back(0.0);
    coeffs[0] = {coeffs[0].real(), 0.0};
    PeriodicFn f;
    f.grid_ = synthesize(coeffs, m);
    f.coeffs_ = std::move(coeffs);
    return f;
}

PeriodicFn PeriodicFn::from_function(const std::function<double(double)>& fn, std::size_t m)
{
    std::vector<double> v(m);
    for (std::size_t i = 0; i < m; ++i)
        v[i] = fn(kTwoPi * static_cast<double>(i) / static_cast<double>(m));
    return from_grid(std::move(v));
}

std::complex<double> PeriodicFn::coefficient(int k) const
{
    int a = std::abs(k);
    if (a > bandwidth())
        return 0.0;
    return k >= 0 ? coeffs_[a] : std::conj(coeffs_[a]);
}

double PeriodicFn::derivative_at(double theta, int order) const
{
    if (coeffs_.empty())
        return 0.0;
    double s = order == 0 ? coeffs_[0].real() : 0.0;
    const std::complex<double> step = std::polar(1.0, theta);
    std::complex<double> e = step;
    double acc = 0.0;
    for (int k = 1; k <= bandwidth(); ++k) {
        if (k % 64 == 0)
            e = std::polar(1.0, k * theta);
        acc += (ik_pow(k, order) * coeffs_[k] * e).real();
        e *= step;
    }
    return s + 2.0 * acc;
}

PeriodicFn PeriodicFn::derivative(int order) const
{
    std::vector<std::complex<double>> c(coeffs_.size());
    for (std::size_t k = 0; k < c.size(); ++k)
        c[k] = ik_pow(static_cast<int>(k), order) * coeffs_[k];
    if (order > 0)
        c[0] = 0.0;
    return from_coefficients(std::move(c), grid_.size());
}

PeriodicFn PeriodicFn::resampled(std::size_t m) const
{
    std::vector<std::complex<double>> c = coeffs_;
    std::size_t k_lim = (m % 2 == 0) ? m / 2 - 1 : (m - 1) / 2;
    if (c.size() > k_lim + 1)
        c.resize(k_lim + 1);
    return from_coefficients(std::move(c), m);
}

std::vector<std::complex<double>> fourier_coeffs(const PeriodicFn& f, int k_max)
{
    if (k_max < 0)
        throw HarmonicError("negative coefficient index");
    if (f.grid_size() < 2 * static_cast<std::size_t>(k_max) + 2)
        throw HarmonicError("fourier_coeffs requires M >= 2K+2");
    auto half = rfft(f.grid());
    const double m = static_cast<double>(f.grid_size());
    std::vector<std::complex<double>> table(2 * k_max + 1);
    double biggest = 0.0;
    for (int k = 0; k <= k_max; ++k) {
        std::complex<double> c = half[k] / m;
        if (k == 0)
            c = {c.real(), 0.0};
        table[k_max + k] = c;
        table[k_max - k] = std::conj(c);
        biggest = std::max(biggest, std::abs(c));
    }
    if (k_max > 0 && std::abs(table[2 * k_max]) > 1e-8 * biggest)
        log_warning("fourier_coeffs: |f^_K| = " + std::to_string(std::abs(table[2 * k_max])) +
                    " exceeds 1e-8 of the largest coefficient; possible aliasing");
    return table;
}

SigmaSq sigma_sq(const PeriodicFn& f)
{
    const auto& c = f.coefficients();
    const int k_max = f.bandwidth();
    const int tail_start = std::max(1, 3 * k_max / 4 + 1);
    double total = 0.0, tail = 0.0;
    // High to low so small terms accumulate first.
    for (int k = k_max; k >= 1; --k) {
        double t = 2.0 * k * std::norm(c[k]);
        total += t;
        if (k >= tail_start)
            tail += t;
    }
    if (k_max >= 4 && tail > 1e-6 * total)
        throw HarmonicError("sigma_sq: truncated band holds " + std::to_string(tail / total) +
                            " of the total; refine the grid");
    return {total, k_max >= 4 ? tail : 0.0};
}

PeriodicFn hilbert_circle(const PeriodicFn& f)
{
    std::vector<std::complex<double>> c = f.coefficients();
    if (!c.empty())
        c[0] = 0.0;
    for (std::size_t k = 1; k < c.size(); ++k)
        c[k] *= std::complex<double>(0.0, -1.0);
    return PeriodicFn::from_coefficients(std::move(c), f.grid_size());
}

CompactFn::CompactFn(double half_width, Eval eval, int smoothness_class, int max_order,
                     std::vector<double> kinks)
    : s_(half_width), eval_(std::move(eval)), smoothness_(smoothness_class), max_order_(max_order)
{
    if (!(half_width > 0.0))
        throw HarmonicError("support half-width must be positive");
    breaks_.push_back(-s_);
    std::sort(kinks.begin(), kinks.end());
    for (double k : kinks)
        if (k > -s_ && k < s_ && k != breaks_.back())
            breaks_.push_back(k);
    breaks_.push_back(s_);
}

double CompactFn::derivative(double x, int order) const
{
    if (order > max_order_)
        throw HarmonicError("derivative of order " + std::to_string(order) + " not available");
    if (!(x > -s_ && x < s_))
        return 0.0;
    return eval_(x, order);
}

CompactFn CompactFn::from_samples(std::vector<double> x, std::vector<double> y)
{
    if (x.size() != y.size() || x.size() < 2)
        throw HarmonicError("need at least two (x, value) pairs");
    for (std::size_t i = 1; i < x.size(); ++i)
        if (!(x[i] > x[i - 1]))
            throw HarmonicError("sample abscissae must be strictly increasing");
    double s = std::max(std::abs(x.front()), std::abs(x.back()));
    auto eval = [x, y](double t, int order) {
        if (t < x.front() || t > x.back())
            return 0.0;
        auto it = std::upper_bound(x.begin(), x.end(), t);
        std::size_t i = it == x.end() ? x.size() - 2 : static_cast<std::size_t>(it - x.begin()) - 1;
        double slope = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
        return order == 0 ? y[i] + slope * (t - x[i]) : slope;
    };
    std::vector<double> kinks(x.begin(), x.end());
    return CompactFn(s, eval, 0, 1, kinks);
}

CompactFn CompactFn::from_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw HarmonicError("cannot open " + path);
    std::vector<double> x, y;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream is(line);
        double a, b;
        if (is >> a >> b) {
            x.push_back(a);
            y.push_back(b);
        }
    }
    return from_samples(std::move(x), std::move(y));
}

double hilbert_line_scaled(const CompactFn& w, double scale, double x)
{
    const double s = w.support_half_width();
    if (!(scale > 0.0) || s > 0.5 * kPi * scale * (1.0 + 1e-12))
        throw HarmonicError("hilbert_line_scaled: support exceeds [-pi L/2, pi L/2]");
    const double fx = w(x);
    auto integrand = [&](double t) {
        double d = x - t;
        return (fx - w(t)) / (2.0 * kPi * scale * std::tan(d / (2.0 * scale)));
    };
    std::vector<double> cuts = w.breakpoints();
    if (x > -s && x < s)
        cuts.push_back(x);
    std::sort(cuts.begin(), cuts.end());
    double inner = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        inner += integrate_adaptive(integrand, cuts[i], cuts[i + 1], 1e-12);
    double outer = 0.0;
    if (fx != 0.0)
        outer = -(fx / kPi) *
                std::log(std::abs(std::sin((x + s) / (2.0 * scale)) / std::sin((x - s) / (2.0 * scale))));
    return -(inner + outer);
}

double hilbert_line(const CompactFn& w, double x)
{
    const double s = w.support_half_width();
    const double fx = w(x);
    auto integrand = [&](double t) { return (fx - w(t)) / (x - t); };
    std::vector<double> cuts = w.breakpoints();
    if (x > -s && x < s)
        cuts.push_back(x);
    std::sort(cuts.begin(), cuts.end());
    double inner = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        inner += integrate_adaptive(integrand, cuts[i], cuts[i + 1], 1e-12);
    double outer = fx != 0.0 ? fx * std::log(std::abs((x - s) / (x + s))) : 0.0;
    return -(inner + outer) / kPi;
}

std::complex<double> line_fourier(const CompactFn& w, double xi)
{
    std::vector<double> nodes, weights;
    composite_gauss(w.breakpoints(), 2, std::abs(xi) / 6.0 + 1.0, nodes, weights);
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        double v = weights[i] * w(nodes[i]);
        re += v * std::cos(xi * nodes[i]);
        im -= v * std::sin(xi * nodes[i]);
    }
    return {re / kTwoPi, im / kTwoPi};
}

HalfNorm h_half_norm(const CompactFn& w, double tol)
{
    const double s = w.support_half_width();
    std::vector<double> xs, xw;
    composite_gauss(w.breakpoints(), 2, 1.0, xs, xw);
    std::vector<double> wx(xs.size());

    // 2 int_a^b xi |w^(xi)|^2 dxi; the panel width resolves the 2S-bandwidth of w^.
    auto segment = [&](double a, double b) {
        composite_gauss(w.breakpoints(), 2, b / 6.0 + 1.0, xs, xw);
        wx.resize(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i)
            wx[i] = xw[i] * w(xs[i]);
        std::vector<double> ks, kw;
        composite_gauss({a, b}, 1, s / 2.0, ks, kw);
        double acc = 0.0;
        for (std::size_t j = 0; j < ks.size(); ++j) {
            double re = 0.0, im = 0.0;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                re += wx[i] * std::cos(ks[j] * xs[i]);
                im += wx[i] * std::sin(ks[j] * xs[i]);
            }
            acc += kw[j] * 2.0 * ks[j] * (re * re + im * im) / (kTwoPi * kTwoPi);
        }
        return acc;
    };

    double xi = 8.0 / s;
    double total = segment(0.0, xi);
    double prev_delta = 0.0, prev_estimate = 0.0;
    for (int j = 0; j < 16; ++j) {
        double delta = segment(xi, 2.0 * xi);
        total += delta;
        xi *= 2.0;
        double tail = delta;
        if (prev_delta > 0.0 && delta >= 0.0 && delta < prev_delta) {
            double rho = delta / prev_delta;
            tail = delta * rho / (1.0 - rho);
        }
        double estimate = total + tail;
        bool stable = j >= 2 && std::abs(estimate - prev_estimate) < tol * std::max(1.0, estimate);
        if (delta == 0.0 || stable || std::abs(tail) < tol * std::max(1.0, estimate) * 1e-2)
            return {estimate, xi, tail};
        prev_delta = delta;
        prev_estimate = estimate;
    }
    throw HarmonicError("h_half_norm: frequency tail did not settle below tolerance");
}

double h_half_norm_hilbert(const CompactFn& w)
{
    const auto& cuts = w.breakpoints();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        acc += integrate_adaptive([&](double x) { return hilbert_line(w, x) * w.derivative(x, 1); },
                                  cuts[i], cuts[i + 1], 1e-11);
    return -acc / kTwoPi;
}

std::size_t default_meso_grid(double scale)
{
    return std::max<std::size_t>(1024, static_cast<std::size_t>(std::ceil(64.0 * scale)));
}

PeriodicFn meso_wrap(const MesoScaledFn& m, std::size_t grid)
{
    if (!(m.scale >= 1.0))
        throw HarmonicError("meso scale must be at least 1");
    if (m.base.support_half_width() > kPi * m.scale * (1.0 + 1e-12))
        throw HarmonicError("meso_wrap: scaled support overflows [-pi, pi]");
    std::size_t n = grid ? grid : default_meso_grid(m.scale);
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        double th = kTwoPi * static_cast<double>(i) / static_cast<double>(n);
        if (th > kPi)
            th -= kTwoPi;
        v[i] = m.base(m.scale * th);
    }
    return PeriodicFn::from_grid(std::move(v));
}

namespace {

double param(const FnParams& p, const std::string& key, double fallback)
{
    auto it = p.find(key);
    return it == p.end() ? fallback : it->second;
}

void check_keys(const FnParams& p, std::initializer_list<const char*> allowed, const std::string& name)
{
    for (const auto& [k, v] : p) {
        bool ok = false;
        for (const char* a : allowed)
            ok = ok || k == a;
        if (!ok)
            throw HarmonicError("unknown parameter '" + k + "' for test function " + name);
    }
}

// C-infinity step: 0 at t<=0, 1 at t>=1.
double smooth_step(double t, int order)
{
    if (t <= 0.0 || t >= 1.0)
        return order == 0 ? (t >= 1.0 ? 1.0 : 0.0) : 0.0;
    double a = std::exp(-1.0 / t), b = std::exp(-1.0 / (1.0 - t));
    if (order == 0)
        return a / (a + b);
    return a * b * (1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t))) / ((a + b) * (a + b));
}

}  // namespace

bool is_compact_name(const std::string& name)
{
    return name == "bump3" || name == "triangle" || name == "cauchy";
}

bool is_periodic_name(const std::string& name)
{
    return name == "cos" || name == "phi_r" || name == "psi_r";
}

CompactFn make_compact(const std::string& name, const FnParams& params)
{
    if (name == "bump3") {
        check_keys(params, {"width", "amplitude"}, name);
        const double s = param(params, "width", 1.0), amp = param(params, "amplitude", 1.0);
        // (1-u^2)^4 = 1 - 4u^2 + 6u^4 - 4u^6 + u^8
        static const double c[9] = {1, 0, -4, 0, 6, 0, -4, 0, 1};
        auto eval = [s, amp](double x, int order) {
            double u = x / s;
            // Factored forms through order 4 keep relative accuracy near the support edge.
            const double q = 1.0 - u * u;
            switch (order) {
            case 0: return amp * q * q * q * q;
            case 1: return amp * -8.0 * u * q * q * q / s;
            case 2: return amp * q * q * (48.0 * u * u - 8.0 * q) / (s * s);
            case 3: return amp * 48.0 * u * q * (3.0 * q - 4.0 * u * u) / (s * s * s);
            case 4: return amp * (144.0 * q * q - 1152.0 * u * u * q + 384.0 * u * u * u * u) / (s * s * s * s);
            default: break;
            }
            double acc = 0.0;
            for (int p = 8; p >= order; --p) {
                double coef = c[p];
                for (int q = 0; q < order; ++q)
                    coef *= (p - q);
                acc = acc * u + coef;
            }
            return amp * acc / std::pow(s, order);
        };
        return CompactFn(s, eval, 3, 8);
    }
    if (name == "triangle") {
        check_keys(params, {"width", "amplitude"}, name);
        const double s = param(params, "width", 1.0), amp = param(params, "amplitude", 1.0);
        auto eval = [s, amp](double x, int order) {
            if (order == 0)
                return amp * (1.0 - std::abs(x) / s);
            return -amp * (x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0)) / s;
        };
        return CompactFn(s, eval, 0, 1, {0.0});
    }
    if (name == "cauchy") {
        check_keys(params, {"width"}, name);
        const double s = param(params, "width", 40.0);
        auto eval = [s](double x, int order) {
            double ax = std::abs(x);
            double t = (s - ax) / (0.5 * s);
            double chi = smooth_step(t, 0);
            double f = 1.0 / (1.0 + x * x);
            if (order == 0)
                return chi * f;
            double dchi = -smooth_step(t, 1) / (0.5 * s) * (x > 0 ? 1.0 : -1.0);
            double df = -2.0 * x * f * f;
            return dchi * f + chi * df;
        };
        return CompactFn(s, eval, 3, 1);
    }
    throw HarmonicError("unknown compact test function '" + name + "'");
}

PeriodicFn make_periodic(const std::string& name, const FnParams& params, std::size_t grid)
{
    if (name == "cos") {
        check_keys(params, {"k", "amplitude"}, name);
        int k = static_cast<int>(param(params, "k", 1.0));
        double amp = param(params, "amplitude", 1.0);
        if (k < 0)
            throw HarmonicError("cos mode must be nonnegative");
        std::vector<std::complex<double>> c(k + 1, 0.0);
        c[k] = k == 0 ? amp : 0.5 * amp;
        std::size_t m = std::max<std::size_t>(grid, 2 * c.size());
        return PeriodicFn::from_coefficients(std::move(c), m);
    }
    if (name == "phi_r" || name == "psi_r") {
        check_keys(params, {"r"}, name);
        double r = param(params, "r", 0.5);
        if (!(r >= 0.0 && r < 1.0))
            throw HarmonicError(name + " requires r in [0, 1)");
        int k_max = r == 0.0 ? 1 : static_cast<int>(std::ceil(std::log(1e-17) / std::log(r)));
        std::vector<std::complex<double>> c(k_max + 1, 0.0);
        double rk = 1.0;
        for (int k = 1; k <= k_max; ++k) {
            rk *= r;
            c[k] = name == "phi_r" ? std::complex<double>(rk / (2.0 * k), 0.0)
                                   : std::complex<double>(0.0, -rk / (2.0 * k));
        }
        std::size_t m = grid;
        while (m < 2 * c.size())
            m *= 2;
        return PeriodicFn::from_coefficients(std::move(c), m);
    }
    throw HarmonicError("unknown periodic test function '" + name + "'");
}

}  // namespace cbe
