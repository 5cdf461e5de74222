#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "csplat/core/image.hpp"
#include "csplat/render/sh.hpp"
#include "csplat/scene/camera.hpp"
#include "csplat/scene/gaussian.hpp"

namespace csplat {

inline constexpr double kAlphaMax = 0.999;
inline constexpr double kAlphaCutoff = 1.0 / 255.0;
inline constexpr double kTransmittanceMin = 1e-4;
inline constexpr double kConfidenceMin = 0.001;
inline constexpr double kConfidenceMax = 5.0;

struct MaxContribution {
    Vec3 point;
    double t = 0.0;
    bool in_front = false;  // t > 0; callers skip primitives behind the ray origin
};

// Point of maximum contribution along the ray: the minimizer of the
// Mahalanobis distance to the primitive center.
MaxContribution max_contribution_point(const Gaussian& g, const Ray& r);

// 3D opacity evaluated at the max-contribution point, clamped to kAlphaMax.
// Returns 0 for primitives behind the origin.
double alpha_3d(const Gaussian& g, const Ray& r);

// One retained blending record.
struct Contrib {
    uint32_t index = 0;    // gaussian index in the cloud
    double alpha = 0.0;    // in [cutoff, kAlphaMax]
    double weight = 0.0;   // alpha * transmittance before this primitive
    double t = 0.0;        // depth of the max-contribution point
    Vec3 color;            // sh color at the ray direction (clamped)
    Vec3 normal;           // unit primitive normal, camera-facing
    double confidence = 0.0;  // activated per-primitive confidence
    uint8_t color_clamp_mask = 0;
};

struct RaySample {
    Vec3 color;
    Vec3 normal;
    double depth = 0.0;
    double confidence = kConfidenceMin;  // post-blend clamp to [0.001, 5.0]
    double transmittance = 1.0;
    std::vector<Contrib> contribs;  // sorted ascending by t
};

struct RenderOutputs {
    ImageBuffer color;          // 3 channels
    ImageBuffer normal;         // 3 channels
    ImageBuffer depth;          // 1 channel
    ImageBuffer confidence;     // 1 channel
    ImageBuffer transmittance;  // 1 channel
    std::vector<RaySample> samples;  // per pixel, row-major; empty unless retained
    int width = 0, height = 0;

    const RaySample& sample(int x, int y) const {
        return samples[static_cast<std::size_t>(y) * width + x];
    }
};

// Per-cloud quantities that do not depend on the ray, rebuilt once per render
// or backward pass.
struct RenderCache {
    struct Entry {
        Vec3 position;
        Mat3 sigma_inv;
        double opacity;
        double confidence;
        double cull_radius2;  // squared distance beyond which alpha < cutoff
        Vec3 normal_axis;     // principal axis of the smallest scale (unsigned)
    };
    std::vector<Entry> entries;
    int sh_degree = 0;

    static RenderCache build(const GaussianCloud& cloud);
};

// Exact per-ray forward pass: gather contributions with t > 0 and
// alpha >= 1/255, sort ascending by t, alpha-blend color / normal / depth /
// confidence front-to-back, stop once transmittance falls below 1e-4.
RaySample render_ray(const GaussianCloud& cloud, const Ray& r);
RaySample render_ray_cached(const GaussianCloud& cloud, const RenderCache& cache, const Ray& r,
                            bool keep_contribs = true);

RenderOutputs render_image(const GaussianCloud& cloud, const Camera& cam, bool retain_samples);

}  // namespace csplat
