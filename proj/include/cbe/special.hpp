#pragma once

#include <complex>

namespace cbe {

// log Gamma(z) on a continuous branch; Lanczos (g = 671/128, 14 terms) for Re z >= 1/2,
// reflection below. The real part is log|Gamma(z)|.
std::complex<double> lgamma_complex(std::complex<double> z);

// Neumaier compensated accumulator.
class CompensatedSum {
public:
    void add(double x)
    {
        double t = sum_ + x;
        if ((sum_ >= 0 ? sum_ : -sum_) >= (x >= 0 ? x : -x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

}  // namespace cbe
