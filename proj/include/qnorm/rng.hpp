#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "qnorm/matrix.hpp"

namespace qnorm {

// Splittable counter-style stream: the state is derived from (seed,
// stream_id) by splitmix64 mixing, so any (seed, stream_id) pair names the
// same sample sequence on every run and thread schedule. One stream per
// task; streams are never shared across threads.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : state_(mix(mix(seed) ^ mix(stream_id ^ 0x9e3779b97f4a7c15ull))) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix(state_);
    }

    // Uniform on [0, 1) with 53 random bits.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_unit();
    }

    // Marsaglia polar method; the spare deviate is cached per stream.
    double normal(double mean, double sd) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + sd * spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * next_unit() - 1.0;
            v = 2.0 * next_unit() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        have_spare_ = true;
        return mean + sd * u * f;
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

inline Matrix sample_uniform(RngStream& rng, double lo, double hi,
                             std::size_t rows, std::size_t cols) {
    if (!(lo < hi))
        throw std::invalid_argument("sample_uniform: requires lo < hi");
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.uniform(lo, hi);
    return m;
}

inline Matrix sample_normal(RngStream& rng, double mean, double sd,
                            std::size_t rows, std::size_t cols) {
    if (!(sd > 0.0))
        throw std::invalid_argument("sample_normal: requires sd > 0");
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.normal(mean, sd);
    return m;
}

}  // namespace qnorm
