#include "cbe/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "cbe/harmonic.hpp"
#include "cbe/log.hpp"

namespace cbe {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::size_t kBlock = 256;

double uniform_angle(RngStream& rng) { return kTwoPi * rng.uniform(); }

struct Coeffs {
    std::vector<double> re, im, rho2;
};

Coeffs split(const VerblunskySeq& v)
{
    Coeffs c;
    std::size_t m = v.alpha.empty() ? 0 : v.alpha.size() - 1;
    c.re.resize(m);
    c.im.resize(m);
    c.rho2.resize(m);
    for (std::size_t k = 0; k < m; ++k) {
        c.re[k] = v.alpha[k].real();
        c.im[k] = v.alpha[k].imag();
        c.rho2[k] = 1.0 - std::norm(v.alpha[k]);
    }
    return c;
}

// One block of lanes; every lane runs the same recursion so the inner loops vectorize.
void phase_block(const Coeffs& c, int n, const double* theta, double* value, double* deriv,
                 std::size_t count)
{
    alignas(64) double zr[kBlock], zi[kBlock], br[kBlock], bi[kBlock];
    alignas(64) double qr[kBlock], qi[kBlock], wind[kBlock], d[kBlock];
    for (std::size_t j = 0; j < count; ++j) {
        zr[j] = std::cos(theta[j]);
        zi[j] = std::sin(theta[j]);
        br[j] = zr[j];
        bi[j] = zi[j];
        qr[j] = 1.0;
        qi[j] = 0.0;
        wind[j] = 0.0;
        d[j] = 1.0;
    }
    const std::size_t m = c.re.size();
    for (std::size_t k = 0; k < m; ++k) {
        const double ar = c.re[k], ai = c.im[k], s = c.rho2[k];
#pragma GCC ivdep
        for (std::size_t j = 0; j < count; ++j) {
            double wr = 1.0 - (ar * br[j] - ai * bi[j]);
            double wi = -(ar * bi[j] + ai * br[j]);
            double n2 = wr * wr + wi * wi;
            double inv = 1.0 / std::sqrt(n2);
            double ur = wr * inv, ui = wi * inv;
            d[j] = 1.0 + s / n2 * d[j];
            double cr = ur * ur - ui * ui;
            double ci = -2.0 * ur * ui;
            double tr = br[j] * cr - bi[j] * ci;
            double ti = br[j] * ci + bi[j] * cr;
            double nbr = zr[j] * tr - zi[j] * ti;
            double nbi = zr[j] * ti + zi[j] * tr;
            double fix = 1.5 - 0.5 * (nbr * nbr + nbi * nbi);
            br[j] = nbr * fix;
            bi[j] = nbi * fix;
            double nqr = qr[j] * ur - qi[j] * ui;
            double nqi = qr[j] * ui + qi[j] * ur;
            // |arg u| < pi/2, so a branch-cut crossing of Q happens with Re Q < 0.
            double up = (qi[j] > 0.0) ? 1.0 : 0.0;
            double nup = (nqi > 0.0) ? 1.0 : 0.0;
            wind[j] += (nqr < 0.0) ? (up - nup) : 0.0;
            double qfix = 1.5 - 0.5 * (nqr * nqr + nqi * nqi);
            qr[j] = nqr * qfix;
            qi[j] = nqi * qfix;
        }
    }
    for (std::size_t j = 0; j < count; ++j) {
        double arg_sum = std::atan2(qi[j], qr[j]) + kTwoPi * wind[j];
        value[j] = n * theta[j] - 2.0 * arg_sum;
        if (deriv)
            deriv[j] = d[j];
    }
}

}  // namespace

void EnsembleSpec::validate() const
{
    if (!(beta > 0.0) || !std::isfinite(beta))
        throw std::invalid_argument("beta must be positive and finite");
    if (n < 1)
        throw std::invalid_argument("n must be at least 1");
}

VerblunskySeq sample_verblunsky(const EnsembleSpec& spec, RngStream& rng)
{
    spec.validate();
    VerblunskySeq v;
    v.alpha.resize(spec.n);
    for (int k = 0; k + 1 < spec.n; ++k) {
        double b = 0.5 * spec.beta * (spec.n - k - 1);
        // |alpha|^2 ~ Beta(1, b): 1 - U^{1/b}.
        double mod2 = -std::expm1(std::log(rng.uniform_pos()) / b);
        mod2 = std::min(mod2, 1.0 - std::numeric_limits<double>::epsilon());
        double phase = uniform_angle(rng);
        v.alpha[k] = std::polar(std::sqrt(mod2), phase);
    }
    v.alpha[spec.n - 1] = std::polar(1.0, uniform_angle(rng));
    return v;
}

void phase_function(const VerblunskySeq& v, const double* theta, double* value,
                    double* derivative, std::size_t count)
{
    Coeffs c = split(v);
    int n = static_cast<int>(v.alpha.size());
    for (std::size_t off = 0; off < count; off += kBlock) {
        std::size_t len = std::min(kBlock, count - off);
        phase_block(c, n, theta + off, value + off, derivative ? derivative + off : nullptr, len);
    }
}

std::vector<double> eigenangles(const VerblunskySeq& v, const EigenSolveOptions& opt)
{
    const int n = static_cast<int>(v.alpha.size());
    if (n < 1)
        throw std::invalid_argument("empty Verblunsky sequence");
    const double target = -std::arg(v.alpha[n - 1]);
    if (n == 1) {
        double t = std::fmod(target + kTwoPi, kTwoPi);
        return {t >= kTwoPi ? 0.0 : t};
    }
    const double floor_tol = 4.0 * std::numeric_limits<double>::epsilon() * kTwoPi;
    const double tol = std::max(opt.abs_tol > 0.0 ? opt.abs_tol : 1e-12 * kTwoPi / n, floor_tol);

    const double noise = 8.0 * std::numeric_limits<double>::epsilon() * kTwoPi * n;

    // Same spectrum from the reversed sequence; its phase has Clark weights equal to the
    // spectral weights of e_0, so F' stays of order n instead of growing exponentially.
    VerblunskySeq rev;
    rev.alpha.resize(n);
    const std::complex<double> last = v.alpha[n - 1];
    for (int k = 0; k + 1 < n; ++k)
        rev.alpha[k] = -last * std::conj(v.alpha[n - 2 - k]);
    rev.alpha[n - 1] = last;
    Coeffs c = split(rev);
    auto eval = [&](const std::vector<double>& th, std::vector<double>& f, std::vector<double>* df) {
        for (std::size_t off = 0; off < th.size(); off += kBlock) {
            std::size_t len = std::min(kBlock, th.size() - off);
            phase_block(c, n, th.data() + off, f.data() + off, df ? df->data() + off : nullptr, len);
        }
    };

    const std::size_t cells = static_cast<std::size_t>(std::max(2, opt.grid_factor)) * n;
    std::vector<double> grid(cells), fgrid(cells);
    for (std::size_t i = 0; i < cells; ++i)
        grid[i] = kTwoPi * static_cast<double>(i) / static_cast<double>(cells);
    eval(grid, fgrid, nullptr);
    const double f0 = fgrid[0];
    auto grid_value = [&](std::size_t i) { return i == cells ? f0 + kTwoPi * n : fgrid[i]; };

    // Levels target + 2pi m in (F(0), F(0) + 2pi n]; exactly n of them.
    double m0 = std::floor((f0 - target) / kTwoPi) + 1.0;
    std::vector<double> level(n), lo(n), hi(n), flo(n), fhi(n), x(n);
    std::size_t cell = 0;
    for (int r = 0; r < n; ++r) {
        level[r] = target + kTwoPi * (m0 + r);
        while (cell < cells && grid_value(cell + 1) < level[r])
            ++cell;
        if (cell >= cells)
            throw SamplerError("phase bracketing failed: level beyond F(2pi)");
        lo[r] = grid[cell];
        hi[r] = cell + 1 == cells ? kTwoPi : grid[cell + 1];
        flo[r] = grid_value(cell);
        fhi[r] = grid_value(cell + 1);
        double frac = (level[r] - flo[r]) / (fhi[r] - flo[r]);
        x[r] = lo[r] + frac * (hi[r] - lo[r]);
    }

    std::vector<int> active(n);
    for (int r = 0; r < n; ++r)
        active[r] = r;
    std::vector<double> prev_res(n, std::numeric_limits<double>::infinity());
    std::vector<double> th, f, df;
    for (int iter = 0; iter < opt.max_iter && !active.empty(); ++iter) {
        th.resize(active.size());
        f.resize(active.size());
        df.resize(active.size());
        for (std::size_t a = 0; a < active.size(); ++a)
            th[a] = x[active[a]];
        eval(th, f, &df);
        std::vector<int> still;
        still.reserve(active.size());
        for (std::size_t a = 0; a < active.size(); ++a) {
            int r = active[a];
            double res = f[a] - level[r];
            // F carries absolute roundoff of order eps * n * 2pi; below that the step is noise.
            if (std::abs(res) <= noise || std::abs(res) <= tol * df[a])
                continue;
            if (res < 0.0) {
                lo[r] = x[r];
                flo[r] = f[a];
            } else {
                hi[r] = x[r];
                fhi[r] = f[a];
            }
            // Newton on tan((F - level) / 2), which is close to a Moebius function of e^{i theta}.
            double xn = std::abs(res) < 0.5 * std::numbers::pi ? x[r] - std::sin(res) / df[a]
                                                                 : x[r] - res / df[a];
            // Bisect when Newton leaves the bracket or fails to halve the residual (cycling).
            if (!(xn > lo[r] && xn < hi[r]) || std::abs(res) > 0.5 * prev_res[r])
                xn = 0.5 * (lo[r] + hi[r]);
            prev_res[r] = std::abs(res);
            double step = std::abs(xn - x[r]);
            x[r] = xn;
            if (step > tol && hi[r] - lo[r] > tol)
                still.push_back(r);
        }
        active.swap(still);
    }
    if (!active.empty()) {
        std::ostringstream os;
        os << "eigenangle extraction did not converge: n=" << n << ", unconverged=" << active.size()
           << ", first bracket=[" << lo[active[0]] << ", " << hi[active[0]] << "]";
        throw SamplerError(os.str());
    }
    for (double& t : x) {
        if (t >= kTwoPi)
            t -= kTwoPi;
        if (t < 0.0)
            t += kTwoPi;
    }
    std::sort(x.begin(), x.end());
    return x;
}

SpectrumSample sample_spectrum(const EnsembleSpec& spec, RngStream& rng, const EigenSolveOptions& opt)
{
    spec.validate();
    SpectrumSample s;
    s.spec = spec;
    if (spec.n == 1) {
        s.angles = {uniform_angle(rng)};
        return s;
    }
    for (int attempt = 0; attempt < 16; ++attempt) {
        VerblunskySeq v = sample_verblunsky(spec, rng);
        s.angles = eigenangles(v, opt);
        bool distinct = true;
        for (int k = 1; k < spec.n; ++k)
            distinct = distinct && s.angles[k] > s.angles[k - 1];
        if (distinct)
            return s;
        std::ostringstream os;
        os << "coincident eigenangles (beta=" << spec.beta << ", n=" << spec.n << ", seed=" << spec.seed
           << "); redrawing";
        log_warning(os.str());
    }
    throw SamplerError("repeated coincident eigenangles; tolerance too coarse for n");
}

SpectrumSample sample_spectrum(const EnsembleSpec& spec)
{
    RngStream rng(spec.seed);
    return sample_spectrum(spec, rng);
}

double importance_weight(const SpectrumSample& sample, const PeriodicFn& w)
{
    double s = 0.0;
    for (double t : sample.angles)
        s += w(t);
    return s;
}

}  // namespace cbe
