#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace cbe {

// Unnormalized forward transform X_k = sum_m x_m e^{-2 pi i k m / M}, k = 0..M/2.
std::vector<std::complex<double>> rfft(const std::vector<double>& x);
// Unnormalized inverse: x_m = sum_{k=0}^{M-1} X_k e^{2 pi i k m / M} with Hermitian completion.
std::vector<double> irfft(const std::vector<std::complex<double>>& half, std::size_t m);

}  // namespace cbe
