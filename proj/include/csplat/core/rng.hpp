#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "csplat/core/vec.hpp"

namespace csplat {

// Deterministic random source. mt19937_64 output is fully specified by the
// standard; the distributions below are hand-rolled so streams are identical
// across compilers and platforms (std::*_distribution is not portable).
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] via rejection-free modular draw on a wide range.
    int uniform_int(int lo, int hi) {
        const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(gen_() % span);
    }

    // Standard normal via Box-Muller, caching the second value.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    Vec3 normal_vec3() {
        const double a = normal(), b = normal(), c = normal();
        return {a, b, c};
    }

    Vec3 unit_vec3() {
        Vec3 v = normal_vec3();
        while (norm2(v) < 1e-12) v = normal_vec3();
        return normalized(v);
    }

    Quat unit_quat() {
        Quat q{normal(), normal(), normal(), normal()};
        while (q.norm() < 1e-6) q = Quat{normal(), normal(), normal(), normal()};
        return q.normalized();
    }

private:
    std::mt19937_64 gen_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace csplat
