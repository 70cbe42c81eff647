#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <utility>

namespace cbe {

class OracleError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

enum class MomentKind { abs_charpoly, exp_psi };

struct MomentQuery {
    double beta = 2.0;
    int n = 1;
    double gamma = 0.0;
    MomentKind kind = MomentKind::abs_charpoly;
};

struct GaussianPrediction {
    double variance = 0.0;
    double log_laplace = 0.0;
};

std::string to_string(MomentKind k);
MomentKind moment_kind_from_string(const std::string& s);

// log E|P_N(e^{i theta})|^gamma.
double moment_abs_charpoly(const MomentQuery& q);
// log E e^{gamma Psi_N(theta)}; both routes are computed and must agree to 1e-10.
double moment_exp_psi(const MomentQuery& q);
// Complex log-Gamma product route.
double moment_exp_psi_gamma_route(const MomentQuery& q);
// Real double-product route with an Euler-Maclaurin remainder for the inner sum.
double moment_exp_psi_product_route(const MomentQuery& q);
double log_moment(const MomentQuery& q);

// Constant c_beta with log E e^{gamma Psi_N} <= c_beta gamma^2 + (gamma^2 / 2 beta) log N.
double exp_moment_constant(double beta);

GaussianPrediction clt_prediction(double sigma2, double beta);
double gff_covariance(std::complex<double> z, std::complex<double> z2);
double maxh_tail_bound(double beta, int n, double t);
double free_energy_prediction(double beta, double gamma);
std::pair<double, double> rigidity_band(double beta, int n, double delta);

}  // namespace cbe
