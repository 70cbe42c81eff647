#include "cbe/fields.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

#include "cbe/fft.hpp"

namespace cbe {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::size_t kLanes = 256;
constexpr int kChunk = 16;

void check_r(double r, bool allow_one)
{
    if (!(r >= 0.0) || (allow_one ? r > 1.0 : r >= 1.0))
        throw FieldError("radius out of range");
}

// 0.5 * sum_j log((1-r)^2 + r |e^{i theta} - e^{i theta_j}|^2) for a block of thetas.
void log_abs_block(const std::vector<double>& cj, const std::vector<double>& sj, double r,
                   const double* theta, double* out, std::size_t count)
{
    alignas(64) double c[kLanes], s[kLanes], prod[kLanes], acc[kLanes];
    const double a = (1.0 - r) * (1.0 - r);
    for (std::size_t m = 0; m < count; ++m) {
        c[m] = std::cos(theta[m]);
        s[m] = std::sin(theta[m]);
        acc[m] = 0.0;
    }
    const std::size_t n = cj.size();
    for (std::size_t j0 = 0; j0 < n; j0 += kChunk) {
        const std::size_t j1 = std::min(n, j0 + kChunk);
        for (std::size_t m = 0; m < count; ++m)
            prod[m] = 1.0;
        for (std::size_t j = j0; j < j1; ++j) {
            const double cc = cj[j], ss = sj[j];
#pragma GCC ivdep
            for (std::size_t m = 0; m < count; ++m) {
                double dc = c[m] - cc, ds = s[m] - ss;
                prod[m] *= a + r * (dc * dc + ds * ds);
            }
        }
        for (std::size_t m = 0; m < count; ++m) {
            if (prod[m] > 1e-280) {
                acc[m] += std::log(prod[m]);
                continue;
            }
            // Guard against underflow of the chunk product near an eigenangle.
            for (std::size_t j = j0; j < j1; ++j) {
                double dc = c[m] - cj[j], ds = s[m] - sj[j];
                acc[m] += std::log(a + r * (dc * dc + ds * ds));
            }
        }
    }
    for (std::size_t m = 0; m < count; ++m)
        out[m] = 0.5 * acc[m];
}

std::vector<double> grid_thetas(std::size_t m, double offset)
{
    std::vector<double> th(m);
    for (std::size_t i = 0; i < m; ++i)
        th[i] = kTwoPi * (static_cast<double>(i) + offset) / static_cast<double>(m);
    return th;
}

int spectral_bandwidth(double r)
{
    if (r == 0.0)
        return 1;
    return static_cast<int>(std::ceil(std::log(1e-17) / std::log(r)));
}

// Grid values of -sum_j kernel(theta - theta_j) from coefficients at k >= 1, folded mod M.
std::vector<double> spectral_fill(const SpectrumSample& s, FieldKind kind, double r, std::size_t m, double offset)
{
    const int k_max = spectral_bandwidth(r);
    std::vector<std::complex<double>> p(k_max + 1, 0.0);
    for (double t : s.angles) {
        const std::complex<double> step = std::polar(1.0, -t);
        std::complex<double> e = step;
        for (int k = 1; k <= k_max; ++k) {
            if (k % 64 == 0)
                e = std::polar(1.0, -k * t);
            p[k] += e;
            e *= step;
        }
    }
    std::vector<std::complex<double>> bins(m, 0.0);
    double rk = 1.0;
    for (int k = 1; k <= k_max; ++k) {
        rk *= r;
        std::complex<double> a = kind == FieldKind::log_abs_P ? -(rk / (2.0 * k)) * p[k]
                                                              : std::complex<double>(0.0, rk / (2.0 * k)) * p[k];
        a *= std::polar(1.0, kTwoPi * k * offset / static_cast<double>(m));
        bins[k % m] += a;
        bins[(m - k % m) % m] += std::conj(a);
    }
    std::vector<std::complex<double>> half(bins.begin(), bins.begin() + m / 2 + 1);
    if (m % 2 == 0)
        half[m / 2] = {half[m / 2].real(), 0.0};
    return irfft(half, m);
}

}  // namespace

std::string to_string(FieldKind k)
{
    switch (k) {
    case FieldKind::log_abs_P: return "log_abs_P";
    case FieldKind::Psi: return "Psi";
    case FieldKind::counting: return "counting";
    }
    return "?";
}

FieldKind field_kind_from_string(const std::string& s)
{
    if (s == "log_abs_P" || s == "abs")
        return FieldKind::log_abs_P;
    if (s == "Psi" || s == "psi")
        return FieldKind::Psi;
    if (s == "counting")
        return FieldKind::counting;
    throw FieldError("unknown field kind '" + s + "'");
}

double FieldGrid::theta(std::size_t m) const
{
    return kTwoPi * (static_cast<double>(m) + offset) / static_cast<double>(values.size());
}

double log_abs_p(const SpectrumSample& s, double r, double theta)
{
    check_r(r, true);
    double acc = 0.0;
    const double a = (1.0 - r) * (1.0 - r);
    for (double t : s.angles) {
        double h = std::sin(0.5 * (theta - t));
        double d = a + 4.0 * r * h * h;
        if (d == 0.0)
            throw FieldError("log|P_N| evaluated on an eigenangle");
        acc += std::log(d);
    }
    return 0.5 * acc;
}

double psi_field(const SpectrumSample& s, double r, double theta)
{
    check_r(r, true);
    double acc = 0.0;
    if (r == 1.0) {
        for (double t : s.angles) {
            double phi = std::fmod(theta - t, kTwoPi);
            if (phi < 0.0)
                phi += kTwoPi;
            if (phi == 0.0)
                throw FieldError("Psi_N evaluated on an eigenangle");
            acc += 0.5 * (phi - kPi);
        }
        return acc;
    }
    for (double t : s.angles) {
        double phi = theta - t;
        double h = std::sin(0.5 * phi);
        acc += std::atan2(-r * std::sin(phi), (1.0 - r) + 2.0 * r * h * h);
    }
    return acc;
}

double counting_function(const SpectrumSample& s, double theta)
{
    auto c = std::upper_bound(s.angles.begin(), s.angles.end(), theta) - s.angles.begin();
    return static_cast<double>(c) - s.n() * theta / kTwoPi;
}

Extrema max_psi_exact(const SpectrumSample& s)
{
    const int n = s.n();
    if (n < 1)
        throw FieldError("empty sample");
    double sum = 0.0;
    for (double t : s.angles)
        sum += t;
    const double base = n * kPi - sum;
    Extrema e;
    e.max = -std::numeric_limits<double>::infinity();
    e.min = 0.5 * base;  // value at theta = 0
    e.argmin = 0.0;
    for (int k = 1; k <= n; ++k) {
        double th = s.angles[k - 1];
        double left = 0.5 * (n * th + base - kTwoPi * (k - 1));
        double right = left - kPi;
        if (left > e.max) {
            e.max = left;
            e.argmax = th;
        }
        if (right < e.min) {
            e.min = right;
            e.argmin = th;
        }
    }
    return e;
}

double max_abs_counting_exact(const SpectrumSample& s)
{
    double best = 0.0;
    const int n = s.n();
    for (int k = 1; k <= n; ++k) {
        double x = n * s.angles[k - 1] / kTwoPi;
        best = std::max({best, std::abs(k - x), std::abs(k - 1 - x)});
    }
    return best;
}

std::size_t default_field_grid(int n)
{
    return std::max<std::size_t>(4096, 8 * static_cast<std::size_t>(n));
}

FieldGrid field_grid(const SpectrumSample& s, FieldKind kind, double r, std::size_t m, double offset)
{
    check_r(r, true);
    if (m < 2)
        throw FieldError("grid too small");
    FieldGrid g;
    g.kind = kind;
    g.r = r;
    g.offset = offset;
    g.source = s.spec;
    g.values.resize(m);
    const std::vector<double> th = grid_thetas(m, offset);
    const int n = s.n();

    if (kind == FieldKind::counting || (kind == FieldKind::Psi && r == 1.0)) {
        if (kind == FieldKind::counting && r != 1.0)
            throw FieldError("counting field is defined at r = 1 only");
        double sum = 0.0;
        for (double t : s.angles)
            sum += t;
        std::size_t c = 0;
        for (std::size_t i = 0; i < m; ++i) {
            while (c < s.angles.size() && s.angles[c] <= th[i])
                ++c;
            if (kind == FieldKind::counting) {
                g.values[i] = static_cast<double>(c) - n * th[i] / kTwoPi;
            } else {
                if (c > 0 && s.angles[c - 1] == th[i])
                    throw FieldError("Psi_N grid node coincides with an eigenangle");
                g.values[i] = 0.5 * (n * th[i] - sum + n * kPi - kTwoPi * static_cast<double>(c));
            }
        }
        return g;
    }
    if (r < 1.0 && static_cast<long long>(spectral_bandwidth(r)) < 4 * static_cast<long long>(m)) {
        g.values = spectral_fill(s, kind, r, m, offset);
        return g;
    }
    if (kind == FieldKind::log_abs_P) {
        std::vector<double> cj(n), sj(n);
        for (int j = 0; j < n; ++j) {
            cj[j] = std::cos(s.angles[j]);
            sj[j] = std::sin(s.angles[j]);
        }
        for (std::size_t off = 0; off < m; off += kLanes) {
            std::size_t len = std::min(kLanes, m - off);
            log_abs_block(cj, sj, r, th.data() + off, g.values.data() + off, len);
        }
        return g;
    }
    for (std::size_t i = 0; i < m; ++i)
        g.values[i] = psi_field(s, r, th[i]);
    return g;
}

double max_logp_grid(const SpectrumSample& s, int oversample)
{
    if (oversample < 2)
        throw FieldError("oversample must be at least 2");
    FieldGrid g = field_grid(s, FieldKind::log_abs_P, 1.0, static_cast<std::size_t>(oversample) * s.n());
    return *std::max_element(g.values.begin(), g.values.end());
}

double poisson_kernel(double r, double theta)
{
    double h = std::sin(0.5 * theta);
    return (1.0 - r * r) / ((1.0 - r) * (1.0 - r) + 4.0 * r * h * h);
}

FieldGrid poisson_smooth(const FieldGrid& field, double r_target)
{
    if (field.kind == FieldKind::counting)
        throw FieldError("poisson_smooth applies to log_abs_P or Psi fields");
    if (field.r != 1.0)
        throw FieldError("poisson_smooth expects a boundary field (r = 1)");
    check_r(r_target, false);
    const std::size_t m = field.size();
    if (static_cast<double>(m) < 16.0 / (1.0 - r_target))
        throw FieldError("grid of " + std::to_string(m) + " points cannot resolve the Poisson kernel at r = " +
                         std::to_string(r_target));
    FieldGrid out = field;
    out.r = r_target;
    std::vector<double> ker(m);
    for (std::size_t d = 0; d < m; ++d)
        ker[d] = poisson_kernel(r_target, kTwoPi * static_cast<double>(d) / static_cast<double>(m)) /
                 static_cast<double>(m);
    auto fh = rfft(field.values);
    auto kh = rfft(ker);
    for (std::size_t k = 0; k < fh.size(); ++k)
        fh[k] *= kh[k] / static_cast<double>(m);
    out.values = irfft(fh, m);
    return out;
}

double kernel_eval(const KernelFamily& fam, KernelType type, int order, double theta)
{
    const double r = fam.r;
    check_r(r, false);
    if (order < 0 || order > 3)
        throw FieldError("kernel derivative order must be 0..3");
    const double h = std::sin(0.5 * theta);
    const double re1 = (1.0 - r) + 2.0 * r * h * h;  // Re(1 - z), cancellation-free
    const double im1 = -r * std::sin(theta);
    if (order == 0) {
        if (type == KernelType::phi)
            return -0.5 * std::log((1.0 - r) * (1.0 - r) + 4.0 * r * h * h);
        return std::atan2(-im1, re1);
    }
    const std::complex<double> z = std::polar(r, theta);
    const std::complex<double> w(re1, im1);
    if (order == 1) {
        std::complex<double> q = z / w;
        return type == KernelType::phi ? -q.imag() : q.real();
    }
    if (order == 2) {
        std::complex<double> q = z / (w * w);
        return type == KernelType::phi ? -q.real() : -q.imag();
    }
    std::complex<double> q = z * (1.0 + z) / (w * w * w);
    return type == KernelType::phi ? q.imag() : -q.real();
}

double kernel_series(const KernelFamily& fam, KernelType type, int order, double theta)
{
    const double r = fam.r;
    check_r(r, false);
    if (order < 0 || order > 3)
        throw FieldError("kernel derivative order must be 0..3");
    // Extended precision: terms reach ~(1 - r)^{-order} and k theta grows large near r = 1.
    long double acc = 0.0L;
    long double rk = 1.0L;
    const long double shift = 0.5L * std::numbers::pi_v<long double> * order;
    for (int k = 1; k < 100000000; ++k) {
        rk *= r;
        long double mag = rk * std::pow(static_cast<long double>(k), order - 1);
        if (rk < 1e-16L && mag < 1e-18L)
            break;
        long double arg = k * static_cast<long double>(theta) + shift;
        acc += mag * (type == KernelType::phi ? std::cos(arg) : std::sin(arg));
    }
    return static_cast<double>(acc);
}

}  // namespace cbe
