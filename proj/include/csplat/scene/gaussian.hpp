#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "csplat/core/vec.hpp"

namespace csplat {

inline constexpr int kMaxShDegree = 3;
inline constexpr int kShCoeffCount = (kMaxShDegree + 1) * (kMaxShDegree + 1);  // 16

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

// One anisotropic 3D Gaussian primitive. Scales are stored as logs and
// opacity as a logit so the optimizer is unconstrained; the rotation is kept
// unit-norm by renormalizing after every step. gamma is the raw confidence,
// activated as exp(gamma) (so gamma = 0 means confidence 1).
struct Gaussian {
    Vec3 position;
    Quat rotation;
    Vec3 log_scale;
    double opacity_logit = 0.0;
    // SH coefficients, interleaved (coeff k, channel c) -> sh[k*3 + c].
    std::array<double, kShCoeffCount * 3> sh{};
    double gamma = 0.0;

    Vec3 scales() const {
        return {std::exp(log_scale.x), std::exp(log_scale.y), std::exp(log_scale.z)};
    }
    double opacity() const { return sigmoid(opacity_logit); }
    double confidence() const { return std::exp(gamma); }
};

struct Covariance {
    Mat3 sigma;
    Mat3 sigma_inv;
};

// Σ = R S Sᵀ Rᵀ and its inverse from the same factorization. Built as sums of
// outer products so both matrices are exactly symmetric.
Covariance covariance(const Gaussian& g);

// Unit normal of the primitive: the principal axis with the smallest
// activated scale, flipped so dot(n, view_dir) <= 0. Ties pick the lower
// axis index.
Vec3 gaussian_normal(const Gaussian& g, const Vec3& view_dir);

// Axis index the normal comes from (smallest activated scale, ties -> lower).
int normal_axis(const Gaussian& g);

struct DensifyStats {
    std::vector<double> grad_norm_accum;
    std::vector<uint32_t> count;

    void resize(std::size_t n) {
        grad_norm_accum.assign(n, 0.0);
        count.assign(n, 0);
    }
};

struct GaussianCloud {
    std::vector<Gaussian> gaussians;
    DensifyStats densify_stats;
    int active_sh_degree = 0;

    std::size_t size() const { return gaussians.size(); }
    bool empty() const { return gaussians.empty(); }
    Gaussian& operator[](std::size_t i) { return gaussians[i]; }
    const Gaussian& operator[](std::size_t i) const { return gaussians[i]; }

    void reset_stats() { densify_stats.resize(gaussians.size()); }
};

}  // namespace csplat
