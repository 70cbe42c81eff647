#pragma once

#include <cstdint>
#include <random>

namespace cbe {

std::uint64_t splitmix64(std::uint64_t x);

// One independent stream per (master seed, stream index). Output is a pure
// function of the pair, so replicate r reproduces regardless of scheduling.
class RngStream {
public:
    RngStream(std::uint64_t master_seed, std::uint64_t stream);
    explicit RngStream(std::uint64_t seed) : RngStream(seed, 0) {}

    std::uint64_t next() { return engine_(); }
    // Uniform on [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    // Uniform on (0,1].
    double uniform_pos() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }
    double normal();

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace cbe
