#include "cbe/special.hpp"

#include <cmath>
#include <numbers>

namespace cbe {

namespace {

constexpr double kCof[14] = {57.1562356658629235,     -59.5979603554754912,    14.1360979747417471,
                             -0.491913816097620199,   .339946499848118887e-4,  .465236289270485756e-4,
                             -.983744753048795646e-4, .158088703224912494e-3,  -.210264441724104883e-3,
                             .217439618115212643e-3,  -.164318106536763890e-3, .844182239838527433e-4,
                             -.261908384015814087e-4, .368991826595316234e-5};

std::complex<double> lanczos_log(std::complex<double> z)
{
    std::complex<double> t = z + 5.24218750000000000;
    t = (z + 0.5) * std::log(t) - t;
    std::complex<double> ser = 0.999999999999997092;
    std::complex<double> y = z;
    for (double c : kCof) {
        y += 1.0;
        ser += c / y;
    }
    return t + std::log(2.5066282746310005 * ser / z);
}

}  // namespace

std::complex<double> lgamma_complex(std::complex<double> z)
{
    constexpr double pi = std::numbers::pi;
    if (z.real() >= 0.5)
        return lanczos_log(z);
    // Gamma(z) Gamma(1-z) = pi / sin(pi z)
    return std::log(pi) - std::log(std::sin(pi * z)) - lanczos_log(1.0 - z);
}

}  // namespace cbe
