#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "cbe/sampler.hpp"

namespace cbe {

class FieldError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class FieldKind { log_abs_P, Psi, counting };
std::string to_string(FieldKind k);
FieldKind field_kind_from_string(const std::string& s);

// Values at theta_m = 2 pi (m + offset) / M.
struct FieldGrid {
    FieldKind kind = FieldKind::log_abs_P;
    double r = 1.0;
    double offset = 0.0;  // 0 for nodes, 0.5 for midpoints
    std::vector<double> values;
    EnsembleSpec source;

    std::size_t size() const { return values.size(); }
    double theta(std::size_t m) const;
};

// log|P_N(r e^{i theta})| = sum_j log|1 - r e^{i(theta - theta_j)}|.
double log_abs_p(const SpectrumSample& s, double r, double theta);
// Psi_{N,r}(theta) = sum_j Im log(1 - r e^{i(theta - theta_j)}); at r = 1 each term is
// ((theta - theta_j) mod 2pi - pi) / 2.
double psi_field(const SpectrumSample& s, double r, double theta);
// h_N(theta) = #{theta_j <= theta} - N theta / 2pi.
double counting_function(const SpectrumSample& s, double theta);

struct Extrema {
    double max = 0.0;
    double argmax = 0.0;
    double min = 0.0;
    double argmin = 0.0;
};
// Exact sup and inf of Psi_N over the circle (sup is a left limit at an eigenangle).
Extrema max_psi_exact(const SpectrumSample& s);
// Exact sup over the circle of |h_N|.
double max_abs_counting_exact(const SpectrumSample& s);

double max_logp_grid(const SpectrumSample& s, int oversample);

// Grid fill. Direct O(NM) summation at r = 1; at r < 1 the spectral route via power sums.
FieldGrid field_grid(const SpectrumSample& s, FieldKind kind, double r, std::size_t m, double offset = 0.0);
std::size_t default_field_grid(int n);

FieldGrid poisson_smooth(const FieldGrid& field, double r_target);

// Appendix kernels phi_r = sum r^k cos(k.)/k, psi_r = sum r^k sin(k.)/k and derivatives.
enum class KernelType { phi, psi };
struct KernelFamily {
    double r = 0.5;
};
double kernel_eval(const KernelFamily& fam, KernelType type, int order, double theta);
// Truncated Fourier series of the same kernels; reference route for the closed forms.
double kernel_series(const KernelFamily& fam, KernelType type, int order, double theta);

double poisson_kernel(double r, double theta);

}  // namespace cbe
