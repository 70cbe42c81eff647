#pragma once

#include <complex>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbe {

class HarmonicError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Real 2pi-periodic function carried both as coefficients c_k = f^_k, k = 0..K
// (f^_{-k} = conj(c_k)), and as values on the grid theta_m = 2 pi m / M.
class PeriodicFn {
public:
    PeriodicFn() = default;

    static PeriodicFn from_grid(std::vector<double> values);
    // Coefficients c_0..c_K; grid synthesized with m points (m >= 2K+2).
    static PeriodicFn from_coefficients(std::vector<std::complex<double>> coeffs, std::size_t m);
    static PeriodicFn from_function(const std::function<double(double)>& f, std::size_t m);

    int bandwidth() const { return static_cast<int>(coeffs_.size()) - 1; }
    std::size_t grid_size() const { return grid_.size(); }
    const std::vector<double>& grid() const { return grid_; }
    const std::vector<std::complex<double>>& coefficients() const { return coeffs_; }
    std::complex<double> coefficient(int k) const;

    double operator()(double theta) const { return derivative_at(theta, 0); }
    double derivative_at(double theta, int order) const;

    PeriodicFn derivative(int order = 1) const;
    // Same coefficients, synthesized on a finer or coarser grid.
    PeriodicFn resampled(std::size_t m) const;

private:
    std::vector<std::complex<double>> coeffs_;
    std::vector<double> grid_;
};

// Table f^_{-K..K}; index k + K.
std::vector<std::complex<double>> fourier_coeffs(const PeriodicFn& f, int k_max);

struct SigmaSq {
    double value = 0.0;
    double tail = 0.0;  // estimated contribution of the last quarter of the band, a proxy for truncation
};
SigmaSq sigma_sq(const PeriodicFn& f);

PeriodicFn hilbert_circle(const PeriodicFn& f);

// Compactly supported function on [-S, S] with derivatives up to `max_order`.
class CompactFn {
public:
    using Eval = std::function<double(double x, int order)>;

    CompactFn() = default;
    CompactFn(double half_width, Eval eval, int smoothness_class, int max_order,
              std::vector<double> kinks = {});

    static CompactFn from_csv(const std::string& path);
    static CompactFn from_samples(std::vector<double> x, std::vector<double> y);

    double support_half_width() const { return s_; }
    int smoothness_class() const { return smoothness_; }
    int max_derivative_order() const { return max_order_; }
    // -S, interior points where a derivative of low order jumps, S.
    const std::vector<double>& breakpoints() const { return breaks_; }

    double operator()(double x) const { return derivative(x, 0); }
    double derivative(double x, int order) const;

private:
    double s_ = 0.0;
    Eval eval_;
    int smoothness_ = 0;
    int max_order_ = 0;
    std::vector<double> breaks_;
};

struct MesoScaledFn {
    CompactFn base;
    double scale = 1.0;
};

double hilbert_line_scaled(const CompactFn& w, double scale, double x);
// Line Hilbert transform with multiplier -i sgn(xi).
double hilbert_line(const CompactFn& w, double x);

struct HalfNorm {
    double value = 0.0;
    double cutoff = 0.0;     // frequency cutoff Xi
    double tail = 0.0;       // extrapolated contribution beyond Xi (already included)
};
HalfNorm h_half_norm(const CompactFn& w, double tol = 1e-8);
// -(1/2pi) int Hw w' dx, an independent route to the same norm.
double h_half_norm_hilbert(const CompactFn& w);
// Line Fourier transform (1/2pi) int w(x) e^{-i x xi} dx by composite Gauss-Legendre.
std::complex<double> line_fourier(const CompactFn& w, double xi);

PeriodicFn meso_wrap(const MesoScaledFn& m, std::size_t grid = 0);
std::size_t default_meso_grid(double scale);

// Built-in library. Compact: "bump3", "triangle", "cauchy". Periodic: "cos", "phi_r", "psi_r".
using FnParams = std::map<std::string, double>;
CompactFn make_compact(const std::string& name, const FnParams& params = {});
PeriodicFn make_periodic(const std::string& name, const FnParams& params = {}, std::size_t grid = 1024);
bool is_compact_name(const std::string& name);
bool is_periodic_name(const std::string& name);

}  // namespace cbe
