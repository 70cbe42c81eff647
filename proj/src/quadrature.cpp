#include "cbe/quadrature.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>

namespace cbe {

const GaussLegendre20& gauss_legendre20()
{
    static const GaussLegendre20 rule = [] {
        using G = boost::math::quadrature::gauss<double, 20>;
        GaussLegendre20 r{};
        const auto& a = G::abscissa();
        const auto& w = G::weights();
        for (std::size_t i = 0; i < a.size(); ++i) {
            r.x[9 - i] = -a[i];
            r.w[9 - i] = w[i];
            r.x[10 + i] = a[i];
            r.w[10 + i] = w[i];
        }
        return r;
    }();
    return rule;
}

void composite_gauss(const std::vector<double>& breaks, int panels_min, double panels_per_length,
                     std::vector<double>& nodes, std::vector<double>& weights)
{
    const auto& gl = gauss_legendre20();
    nodes.clear();
    weights.clear();
    for (std::size_t b = 0; b + 1 < breaks.size(); ++b) {
        double a = breaks[b], c = breaks[b + 1];
        if (!(c > a))
            continue;
        int panels = std::max(panels_min, static_cast<int>(std::ceil((c - a) * panels_per_length)));
        double h = (c - a) / panels;
        for (int p = 0; p < panels; ++p) {
            double mid = a + (p + 0.5) * h;
            for (int i = 0; i < 20; ++i) {
                nodes.push_back(mid + 0.5 * h * gl.x[i]);
                weights.push_back(0.5 * h * gl.w[i]);
            }
        }
    }
}

}  // namespace cbe
