#pragma once

#include "cbe/harmonic.hpp"
#include "cbe/sampler.hpp"

namespace cbe {

struct LoopTerms {
    double quad_term = 0.0;
    double linear_term = 0.0;
    double cross_term = 0.0;
    double total = 0.0;
};

// How int F(x, u) du / 2pi is obtained when centering the double integral.
enum class CenteringRoute {
    quadrature,  // trapezoid rule in u
    hilbert      // identity int F(x, u) du / 2pi = -(1/2) U g(x)
};

// Precomputed g = U w and derivatives for repeated evaluation over samples.
class LoopFunctional {
public:
    LoopFunctional(const PeriodicFn& w);

    // W_N with diagonal terms F(x, x) = g'(x).
    double w_functional(const SpectrumSample& s, double t) const;
    LoopTerms w_tilde(const SpectrumSample& s, double t, CenteringRoute route = CenteringRoute::quadrature) const;
    // Right-hand side of the decomposition
    // W_N = -(N beta/2) int Ug dmu~ - (N^2 beta/4) int Ug dx/2pi + tN int g w' dx/2pi + W~_N.
    double w5_reconstruction(const SpectrumSample& s, double t, const LoopTerms& tilde) const;

    // int g w' dx / 2pi; equals -sigma^2(w).
    double mean_g_wprime() const { return mean_gwp_; }
    const PeriodicFn& g() const { return g_; }

private:
    double pair_sum(const SpectrumSample& s) const;
    double centering_integral(double x) const;

    PeriodicFn w_, wp_, g_, gp_, ug_;
    double mean_gwp_ = 0.0;
    double mean_ug_ = 0.0;
    std::size_t quad_nodes_ = 0;
};

double w_functional(const SpectrumSample& s, const PeriodicFn& w, double t);
LoopTerms w_tilde(const SpectrumSample& s, const PeriodicFn& w, double t);

struct RFunctionals {
    double R0 = 0.0;
    double R0_change = 0.0;  // |R0(2M) - R0(M)|, the Richardson check
    std::size_t grid = 0;    // M
    double R1 = 0.0;
    double R2 = 0.0;
};
// R0 by a tensor midpoint/node rule at M^2 and (2M)^2; M defaults to the larger of 1024
// and 16 times the effective bandwidth of g'''.
RFunctionals r_functionals(const PeriodicFn& w, std::size_t grid = 0);

// Right-hand side of the R0 bound with window epsilon in (0, 1].
double r6_bound(const PeriodicFn& w, double eps);

struct MesoR0Bound {
    double r[4] = {0, 0, 0, 0};  // r_{k,w}, k = 0..3
    double w2_sup = 0.0;
    double rhs = 0.0;
};
// 8 log(pi L)(r_0 + r_1 + r_3 + ||w''||_inf) L with c = log 3, alpha = 1, c_alpha = 2 pi and
// ||f||_{C^1} = ||f||_inf + ||f'||_inf.
MesoR0Bound r8_bound(const CompactFn& w, double scale);

}  // namespace cbe
