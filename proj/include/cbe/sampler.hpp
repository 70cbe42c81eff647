#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbe/rng.hpp"

namespace cbe {

class PeriodicFn;

struct EnsembleSpec {
    double beta = 2.0;
    int n = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

// alpha[0..n-2] lie in the open disk, alpha[n-1] on the unit circle.
struct VerblunskySeq {
    std::vector<std::complex<double>> alpha;
};

struct SpectrumSample {
    std::vector<double> angles;  // strictly increasing in [0, 2pi)
    EnsembleSpec spec;
    double log_weight = 0.0;

    int n() const { return static_cast<int>(angles.size()); }
};

class SamplerError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EigenSolveOptions {
    // Absolute tolerance on each angle; clamped from below by a few ulp of 2pi.
    double abs_tol = -1.0;  // negative selects 1e-12 * 2pi / n
    int max_iter = 200;
    int grid_factor = 2;    // bracketing grid has grid_factor * n cells
};

VerblunskySeq sample_verblunsky(const EnsembleSpec& spec, RngStream& rng);

// Eigenangles of the CMV matrix with the given coefficients, sorted ascending.
std::vector<double> eigenangles(const VerblunskySeq& v, const EigenSolveOptions& opt = {});

SpectrumSample sample_spectrum(const EnsembleSpec& spec, RngStream& rng,
                               const EigenSolveOptions& opt = {});
// Draws from the stream RngStream(spec.seed).
SpectrumSample sample_spectrum(const EnsembleSpec& spec);

double importance_weight(const SpectrumSample& sample, const PeriodicFn& w);

// Monotone phase F(theta) = n*theta - 2 sum_k arg(1 - alpha_k b_k(theta)) and its
// derivative; eigenangles solve F = -arg(alpha_{n-1}) mod 2pi. Exposed for tests.
void phase_function(const VerblunskySeq& v, const double* theta, double* value,
                    double* derivative, std::size_t count);

}  // namespace cbe
