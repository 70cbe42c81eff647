#pragma once

#include <array>
#include <vector>

namespace cbe {

// 20-point Gauss-Legendre rule on [-1, 1].
struct GaussLegendre20 {
    std::array<double, 20> x;
    std::array<double, 20> w;
};
const GaussLegendre20& gauss_legendre20();

// Composite 20-point rule with max(panels_min, ceil(length * panels_per_length)) equal
// panels between consecutive breakpoints.
void composite_gauss(const std::vector<double>& breaks, int panels_min,
                     double panels_per_length, std::vector<double>& nodes,
                     std::vector<double>& weights);

// Adaptive Gauss-Kronrod over [a, b]; throws std::runtime_error when the error estimate
// stays above tol * max(1, |result|).
template <class F>
double integrate_adaptive(F f, double a, double b, double tol, double* error = nullptr);

}  // namespace cbe

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <stdexcept>
#include <string>

namespace cbe {

template <class F>
double integrate_adaptive(F f, double a, double b, double tol, double* error)
{
    if (a == b)
        return 0.0;
    double err = 0.0;
    double r = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 20, tol, &err);
    if (!(err <= 1e3 * tol * std::max(1.0, std::abs(r))) || !std::isfinite(r))
        throw std::runtime_error("adaptive quadrature did not converge on [" + std::to_string(a) + ", " +
                                 std::to_string(b) + "], error estimate " + std::to_string(err));
    if (error)
        *error = err;
    return r;
}

}  // namespace cbe
