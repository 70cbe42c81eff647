#include "cbe/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cstring>
#include <mutex>
#include <stdexcept>

namespace cbe {

namespace {

// FFTW planning is not thread-safe; execution on distinct buffers is.
std::mutex g_plan_mutex;

template <class T>
struct FftwBuffer {
    T* ptr;
    explicit FftwBuffer(std::size_t n) : ptr(static_cast<T*>(fftw_malloc(sizeof(T) * std::max<std::size_t>(n, 1))))
    {
        if (!ptr)
            throw std::bad_alloc();
    }
    ~FftwBuffer() { fftw_free(ptr); }
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;
};

struct Plan {
    fftw_plan p = nullptr;
    explicit Plan(fftw_plan q) : p(q)
    {
        if (!p)
            throw std::runtime_error("fftw plan creation failed");
    }
    ~Plan()
    {
        std::lock_guard<std::mutex> lock(g_plan_mutex);
        fftw_destroy_plan(p);
    }
    Plan(const Plan&) = delete;
    Plan& operator=(const Plan&) = delete;
};

}  // namespace

std::vector<std::complex<double>> rfft(const std::vector<double>& x)
{
    const std::size_t m = x.size();
    if (m == 0)
        return {};
    FftwBuffer<double> in(m);
    FftwBuffer<fftw_complex> out(m / 2 + 1);
    fftw_plan raw;
    {
        std::lock_guard<std::mutex> lock(g_plan_mutex);
        raw = fftw_plan_dft_r2c_1d(static_cast<int>(m), in.ptr, out.ptr, FFTW_ESTIMATE);
    }
    Plan plan(raw);
    std::memcpy(in.ptr, x.data(), sizeof(double) * m);
    fftw_execute(plan.p);
    std::vector<std::complex<double>> result(m / 2 + 1);
    for (std::size_t k = 0; k <= m / 2; ++k)
        result[k] = {out.ptr[k][0], out.ptr[k][1]};
    return result;
}

std::vector<double> irfft(const std::vector<std::complex<double>>& half, std::size_t m)
{
    if (m == 0)
        return {};
    FftwBuffer<fftw_complex> in(m / 2 + 1);
    FftwBuffer<double> out(m);
    fftw_plan raw;
    {
        std::lock_guard<std::mutex> lock(g_plan_mutex);
        raw = fftw_plan_dft_c2r_1d(static_cast<int>(m), in.ptr, out.ptr, FFTW_ESTIMATE);
    }
    Plan plan(raw);
    for (std::size_t k = 0; k <= m / 2; ++k) {
        std::complex<double> v = k < half.size() ? half[k] : std::complex<double>{};
        in.ptr[k][0] = v.real();
        in.ptr[k][1] = v.imag();
    }
    // The c2r transform assumes a real DC and (for even m) a real Nyquist bin.
    in.ptr[0][1] = 0.0;
    if (m % 2 == 0)
        in.ptr[m / 2][1] = 0.0;
    fftw_execute(plan.p);
    return std::vector<double>(out.ptr, out.ptr + m);
}

}  // namespace cbe
