#pragma once

#include <optional>

#include "csplat/core/image.hpp"
#include "csplat/loss/ssim.hpp"
#include "csplat/render/forward.hpp"
#include "csplat/scene/camera.hpp"

namespace csplat {

struct LossWeights {
    double lambda_rgb = 0.2;
    double lambda_color_var = 0.5;
    double lambda_normal_var = 0.005;
    double beta = 0.075;
    double lambda_depth_normal = 0.05;
    double lambda_distortion = 100.0;
    int conf_start_iteration = 500;
    // Geometric terms switch on partway through the run; the trainer fills
    // these from the iteration budget (0 = always on).
    int depth_normal_start_iteration = 0;
    int distortion_start_iteration = 0;
    bool confidence_enabled = true;
    bool variance_enabled = true;

    bool confidence_active(int iteration) const {
        return confidence_enabled && iteration >= conf_start_iteration;
    }
    bool depth_normal_active(int iteration) const {
        return iteration >= depth_normal_start_iteration;
    }
    bool distortion_active(int iteration) const {
        return iteration >= distortion_start_iteration;
    }
};

struct LossReport {
    double total = 0.0;
    double l1 = 0.0;
    double dssim = 0.0;
    double conf = 0.0;  // photometric mean before activation, confidence loss after
    double color_var = 0.0;
    double normal_var = 0.0;
    double depth_normal = 0.0;
    double distortion = 0.0;
    ImageBuffer rgb_map;  // per-pixel photometric map, retained for the confidence loss
};

// (1-λ)·L1 + λ·decoupled D-SSIM, plus the per-pixel map combining per-pixel
// L1 (channel mean) and per-pixel 1 - l·c·s with the same weights.
struct PhotometricResult {
    double scalar = 0.0;
    double l1 = 0.0;
    double dssim = 0.0;
    ImageBuffer map;
};
PhotometricResult photometric(const ImageBuffer& ref, const ImageBuffer& raw,
                              const ImageBuffer& app, double lambda_rgb);

// mean over pixels of L_rgb·Ĉ - β·log Ĉ. Ĉ outside the blend clamp range is
// a caller defect and rejected.
double confidence_loss(const ImageBuffer& rgb_map, const ImageBuffer& conf_map, double beta);

// Σ_i w_i ‖c_i - I_px‖² over the retained contributions of one ray.
double color_variance_loss(const RaySample& sample, const Vec3& ref_px);

// Σ_i w_i ‖n_i - N‖² with N the blended normal. Valid for unsaturated rays;
// on saturated rays it collapses to 1 - ‖N‖².
double normal_variance_loss(const RaySample& sample);
double normal_variance_fast(const RaySample& sample);  // 1 - ‖N‖²

// Depth-normal consistency plus depth distortion (per-ray weighted depth
// variance). Border pixels and pixels with ‖N‖ < 1e-6 are excluded from the
// consistency mean.
struct GeometricLosses {
    double depth_normal = 0.0;
    double distortion = 0.0;
};
GeometricLosses geometric_losses(const RenderOutputs& outputs, const Camera& cam);

// Per-ray weighted depth variance (the distortion summand for one ray).
double depth_distortion_ray(const RaySample& sample);

// Full loss assembly for one training view. `ref` is the ground-truth image,
// `raw` the render, `app` the appearance-corrected render (pass `raw` when
// the appearance module is disabled). Requires retained samples for the
// variance and distortion terms.
LossReport total_loss(const RenderOutputs& outputs, const Camera& cam, const ImageBuffer& ref,
                      const ImageBuffer& app, const LossWeights& weights, int iteration);

// 32-bit fast path for the scalar photometric pair (L1 and classic SSIM feed
// it); used to validate the 64-bit reference within 1e-4 relative.
float l1_mean_f32(const ImageBuffer& ref, const ImageBuffer& img);
double l1_mean(const ImageBuffer& ref, const ImageBuffer& img);

}  // namespace csplat
