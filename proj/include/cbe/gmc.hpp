#pragma once

#include <stdexcept>
#include <vector>

#include "cbe/fields.hpp"
#include "cbe/sampler.hpp"

namespace cbe {

class GmcError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class NormalizerMode { monte_carlo, asymptotic };

// Half-open arc [start, start + length) on the circle.
struct Arc {
    double start = 0.0;
    double length = 0.0;
};

struct GmcMeasureGrid {
    double gamma = 0.0;
    double r = 0.0;
    std::vector<double> weights;  // density against d theta / 2pi at theta_m = 2 pi m / M
    NormalizerMode normalizer_mode = NormalizerMode::asymptotic;
    double log_normalizer = 0.0;

    double total_mass() const;
    double mass(const Arc& a) const;
};

// log (1 - r^2)^{-gamma^2 / 2 beta}.
double asymptotic_log_normalizer(double beta, double gamma, double r);
// log of the mean over fields and grid points of exp(gamma * field).
double monte_carlo_log_normalizer(const std::vector<FieldGrid>& fields, double gamma);

GmcMeasureGrid build_measure(const FieldGrid& field, double gamma, NormalizerMode mode, double log_normalizer);
GmcMeasureGrid build_measure(const SpectrumSample& s, double gamma, double r, FieldKind kind,
                             NormalizerMode mode, double log_normalizer = 0.0, std::size_t grid = 0);

// Gaussian prediction of E[mu(A) mu(B)]: iint_{AxB} |1 - r^2 e^{i(t - t')}|^{-gamma^2/beta} dt dt'/(2pi)^2.
double mass_second_moment(double gamma, double r, double beta, const Arc& a, const Arc& b);

// Lebesgue measure of {theta : field(theta) >= (gamma / beta) log N} on a boundary field grid.
double thick_point_measure(const FieldGrid& boundary_field, double gamma);
double thick_point_measure(const SpectrumSample& s, double gamma, FieldKind kind, std::size_t grid = 0);

// (1 / log N) log of the grid mean of exp(gamma * field) for one boundary field.
double log_partition_rate(const FieldGrid& boundary_field, double gamma);
double free_energy(const std::vector<SpectrumSample>& samples, double gamma, std::size_t grid = 0);

}  // namespace cbe
