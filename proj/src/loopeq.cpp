#include "cbe/loopeq.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <stdexcept>

#include "cbe/quadrature.hpp"

namespace cbe {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::size_t pow2_at_least(std::size_t n)
{
    std::size_t p = 1;
    while (p < n)
        p *= 2;
    return p;
}

double grid_l1(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v)
        s += std::abs(x);
    return s * kTwoPi / static_cast<double>(v.size());
}

double grid_sup(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v)
        s = std::max(s, std::abs(x));
    return s;
}

// Largest k whose k^3 |c_k| is within 1e-13 of the peak.
int effective_bandwidth(const PeriodicFn& f)
{
    const auto& c = f.coefficients();
    double peak = 0.0;
    for (std::size_t k = 1; k < c.size(); ++k)
        peak = std::max(peak, std::pow(static_cast<double>(k), 3) * std::abs(c[k]));
    int last = 1;
    for (std::size_t k = 1; k < c.size(); ++k)
        if (std::pow(static_cast<double>(k), 3) * std::abs(c[k]) > 1e-13 * peak)
            last = static_cast<int>(k);
    return last;
}

PeriodicFn on_grid(const PeriodicFn& f, std::size_t m)
{
    return f.resampled(m);
}

}  // namespace

LoopFunctional::LoopFunctional(const PeriodicFn& w)
{
    const int k = std::max(1, w.bandwidth());
    quad_nodes_ = pow2_at_least(std::max<std::size_t>(64, 4 * static_cast<std::size_t>(k) + 4));
    w_ = on_grid(w, quad_nodes_);
    wp_ = w_.derivative(1);
    g_ = hilbert_circle(w_);
    gp_ = g_.derivative(1);
    ug_ = hilbert_circle(g_);
    double acc = 0.0;
    for (std::size_t m = 0; m < quad_nodes_; ++m)
        acc += g_.grid()[m] * wp_.grid()[m];
    mean_gwp_ = acc / static_cast<double>(quad_nodes_);
    mean_ug_ = ug_.coefficient(0).real();
}

double LoopFunctional::pair_sum(const SpectrumSample& s) const
{
    const int n = s.n();
    std::vector<double> gv(n);
    double diag = 0.0;
    for (int j = 0; j < n; ++j) {
        gv[j] = g_(s.angles[j]);
        diag += gp_(s.angles[j]);
    }
    double off = 0.0;
    for (int j = 0; j < n; ++j) {
        double row = 0.0;
        for (int k = j + 1; k < n; ++k)
            row += (gv[j] - gv[k]) / (2.0 * std::tan(0.5 * (s.angles[j] - s.angles[k])));
        off += row;
    }
    return 2.0 * off + diag;
}

double LoopFunctional::centering_integral(double x) const
{
    const std::size_t m = quad_nodes_;
    const double gx = g_(x);
    double acc = gp_(x);
    for (std::size_t i = 1; i < m; ++i) {
        double d = kTwoPi * static_cast<double>(i) / static_cast<double>(m);
        double u = x + d;
        acc += (gx - g_(u)) / (2.0 * std::tan(-0.5 * d));
    }
    return acc / static_cast<double>(m);
}

double LoopFunctional::w_functional(const SpectrumSample& s, double t) const
{
    const double beta = s.spec.beta;
    double lin = 0.0, cross = 0.0;
    for (double th : s.angles) {
        lin += gp_(th);
        cross += g_(th) * wp_(th);
    }
    return 0.5 * beta * pair_sum(s) + (1.0 - 0.5 * beta) * lin + t * cross;
}

LoopTerms LoopFunctional::w_tilde(const SpectrumSample& s, double t, CenteringRoute route) const
{
    const double beta = s.spec.beta;
    const double n = s.n();
    double lin = 0.0, cross = 0.0, a_sum = 0.0;
    for (double th : s.angles) {
        lin += gp_(th);
        cross += g_(th) * wp_(th);
        a_sum += route == CenteringRoute::quadrature ? centering_integral(th) : -0.5 * ug_(th);
    }
    double b = 0.0;
    if (route == CenteringRoute::quadrature) {
        for (std::size_t m = 0; m < quad_nodes_; ++m)
            b += centering_integral(kTwoPi * static_cast<double>(m) / static_cast<double>(quad_nodes_));
        b /= static_cast<double>(quad_nodes_);
    } else {
        b = -0.5 * mean_ug_;
    }
    LoopTerms out;
    out.quad_term = 0.5 * beta * (pair_sum(s) - 2.0 * n * a_sum + n * n * b);
    out.linear_term = (1.0 - 0.5 * beta) * (lin - n * gp_.coefficient(0).real());
    out.cross_term = t * (cross - n * mean_gwp_);
    out.total = out.quad_term + out.linear_term + out.cross_term;
    return out;
}

double LoopFunctional::w5_reconstruction(const SpectrumSample& s, double t, const LoopTerms& tilde) const
{
    const double beta = s.spec.beta;
    const double n = s.n();
    double ug_sum = 0.0;
    for (double th : s.angles)
        ug_sum += ug_(th);
    const double centered_ug = ug_sum - n * mean_ug_;
    return -0.5 * n * beta * centered_ug - 0.25 * n * n * beta * mean_ug_ + t * n * mean_gwp_ + tilde.total;
}

double w_functional(const SpectrumSample& s, const PeriodicFn& w, double t)
{
    return LoopFunctional(w).w_functional(s, t);
}

LoopTerms w_tilde(const SpectrumSample& s, const PeriodicFn& w, double t)
{
    return LoopFunctional(w).w_tilde(s, t);
}

namespace {

// Tensor rule with x1 on midpoints and x2 on nodes of an L-point grid; g0, g1, g3 hold
// g, g', g''' on the 2L-point grid.
double r0_level(const std::vector<double>& g0, const std::vector<double>& g1, const std::vector<double>& g3,
                std::size_t l)
{
    const double h = kTwoPi / static_cast<double>(l);
    const std::size_t span = 2 * l - 1;
    std::vector<double> tan_u(span), inv_den(span);
    std::vector<char> taylor(span);
    for (std::size_t e = 0; e < span; ++e) {
        long d = static_cast<long>(e) - static_cast<long>(l - 1);
        double u = (static_cast<double>(d) + 0.5) * h;
        double sn = std::sin(0.5 * u), tn = std::tan(0.5 * u);
        tan_u[e] = tn;
        inv_den[e] = 1.0 / (4.0 * sn * sn * std::abs(tn));
        // Cells adjacent to the diagonal use the Taylor limit |g''' + g'| / 6.
        double wrapped = std::remainder(u, kTwoPi);
        taylor[e] = std::abs(wrapped) < 1.5 * h;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < l; ++i) {
        const double a1 = g0[2 * i + 1], b1 = g1[2 * i + 1], c1 = g3[2 * i + 1];
        double row = 0.0;
        for (std::size_t j = 0; j < l; ++j) {
            const std::size_t e = i + (l - 1) - j;
            const double a2 = g0[2 * j], b2 = g1[2 * j];
            double v;
            if (taylor[e]) {
                v = std::abs(0.5 * (c1 + g3[2 * j]) + 0.5 * (b1 + b2)) / 6.0;
            } else {
                double num = (a1 - a2) - (b1 + b2) * tan_u[e];
                v = std::abs(num) * inv_den[e];
            }
            row += v;
        }
        total += row;
    }
    return total * h * h;
}

}  // namespace

RFunctionals r_functionals(const PeriodicFn& w, std::size_t grid)
{
    PeriodicFn g = hilbert_circle(w);
    const int k_eff = effective_bandwidth(g);
    std::size_t m = grid ? grid : std::max<std::size_t>(1024, pow2_at_least(16 * static_cast<std::size_t>(k_eff)));
    RFunctionals out;
    out.grid = m;

    double levels[2];
    double floor = 0.0;
    for (int lev = 0; lev < 2; ++lev) {
        std::size_t l = m << lev;
        PeriodicFn gg = g.resampled(2 * l);
        std::vector<double> g1 = gg.derivative(1).grid(), g3 = gg.derivative(3).grid();
        levels[lev] = r0_level(gg.grid(), g1, g3, l);
        // Roundoff scale of the integrand summed over the grid; an identically cancelling
        // integrand (g = sin) stays below it.
        floor = 1e-9 * kTwoPi * kTwoPi * (grid_sup(g1) + grid_sup(g3));
    }
    out.R0 = levels[1];
    out.R0_change = std::abs(levels[1] - levels[0]);
    if (out.R0_change > 5e-2 * out.R0 + floor)
        throw std::runtime_error("R0 quadrature did not converge between M=" + std::to_string(m) + " and 2M");

    const std::size_t p = 4 * m;
    PeriodicFn gg = g.resampled(p), ww = w.resampled(p);
    const auto& g0 = gg.grid();
    std::vector<double> g1 = gg.derivative(1).grid(), g2 = gg.derivative(2).grid();
    std::vector<double> w1 = ww.derivative(1).grid(), w2 = ww.derivative(2).grid();
    std::vector<double> prod(p);
    for (std::size_t i = 0; i < p; ++i)
        prod[i] = g1[i] * w1[i] + g0[i] * w2[i];
    out.R1 = grid_l1(g2) + grid_l1(prod);
    out.R2 = grid_sup(g1) + grid_sup(g0) * grid_sup(w1);
    return out;
}

double r6_bound(const PeriodicFn& w, double eps)
{
    if (!(eps > 0.0 && eps <= 1.0))
        throw std::invalid_argument("epsilon must lie in (0, 1]");
    PeriodicFn g = hilbert_circle(w);
    const int k_eff = effective_bandwidth(g);
    const std::size_t p = std::max<std::size_t>(4096, pow2_at_least(32 * static_cast<std::size_t>(k_eff)));
    PeriodicFn gg = g.resampled(p);
    const auto& g0 = gg.grid();
    std::vector<double> g1 = gg.derivative(1).grid(), g3 = gg.derivative(3).grid();

    // Circular sliding maximum of |g'''| over |zeta - x| <= eps.
    const double h = kTwoPi / static_cast<double>(p);
    const long q = static_cast<long>(std::floor(eps / h));
    const long np = static_cast<long>(p);
    std::vector<double> mx(p);
    std::deque<long> dq;
    auto val = [&](long idx) { return std::abs(g3[static_cast<std::size_t>(((idx % np) + np) % np)]); };
    for (long idx = -q; idx < np + q; ++idx) {
        while (!dq.empty() && val(dq.back()) <= val(idx))
            dq.pop_back();
        dq.push_back(idx);
        long centre = idx - q;
        if (centre >= 0) {
            while (dq.front() < centre - q)
                dq.pop_front();
            mx[static_cast<std::size_t>(centre)] = val(dq.front());
        }
    }
    const double c = kPi * kPi * kPi / 4.0;
    return c * (grid_l1(g0) / (eps * eps) + grid_l1(g1) / eps + (eps / 3.0) * (grid_l1(mx) + grid_sup(g1)));
}

MesoR0Bound r8_bound(const CompactFn& w, double scale)
{
    if (w.max_derivative_order() < 4)
        throw std::invalid_argument("r8_bound needs derivatives of w up to order 4");
    if (!(scale >= 1.0))
        throw std::invalid_argument("scale must be at least 1");
    const double s = w.support_half_width();
    std::vector<double> nodes, weights;
    composite_gauss(w.breakpoints(), 64, 0.0, nodes, weights);
    const int samples = 20001;
    auto sup = [&](int order) {
        double best = 0.0;
        for (int i = 0; i < samples; ++i) {
            double x = -s + 2.0 * s * i / (samples - 1);
            best = std::max(best, std::abs(w.derivative(x, order)));
        }
        return best;
    };
    const double c = std::log(3.0);
    const double c_alpha = kTwoPi;
    MesoR0Bound out;
    for (int k = 0; k < 4; ++k) {
        double l1 = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i)
            l1 += weights[i] * std::abs(w.derivative(nodes[i], k));
        double sk = sup(k);
        double holder = sk + sup(k + 1);
        out.r[k] = 2.0 * l1 + kTwoPi * c * sk + kTwoPi * c_alpha * holder;
    }
    out.w2_sup = sup(2);
    out.rhs = 8.0 * std::log(kPi * scale) * (out.r[0] + out.r[1] + out.r[3] + out.w2_sup) * scale;
    return out;
}

}  // namespace cbe
