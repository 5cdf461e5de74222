#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "csplat/loss/losses.hpp"
#include "csplat/render/forward.hpp"
#include "csplat/scene/camera.hpp"
#include "csplat/scene/gaussian.hpp"

namespace csplat {

// Per-gaussian gradient slots mirroring the Gaussian fields. Rotation
// gradients are w.r.t. the raw quaternion (normalization chain included).
struct GradientBuffer {
    std::vector<Vec3> d_position;
    std::vector<Quat> d_rotation;
    std::vector<Vec3> d_log_scale;
    std::vector<double> d_opacity_logit;
    std::vector<std::array<double, kShCoeffCount * 3>> d_sh;
    std::vector<double> d_gamma;
    std::vector<uint8_t> touched;  // contributed to at least one ray

    void resize(std::size_t n);
    void accumulate(const GradientBuffer& other);
    // Throws with the offending primitive index on non-finite entries.
    void check_finite() const;
    std::size_t size() const { return d_position.size(); }
};

// Gradients of one ray's blended outputs w.r.t. its retained contributions.
struct BlendUpstream {
    Vec3 d_color;
    Vec3 d_normal;
    double d_depth = 0.0;
    double d_confidence = 0.0;  // w.r.t. the raw (pre-clamp) blended confidence
};

struct ContribGrad {
    Vec3 d_color;
    Vec3 d_normal;
    double d_t = 0.0;
    double d_confidence = 0.0;  // w.r.t. the activated per-primitive confidence
    double d_alpha = 0.0;
};

// Chain for any blended quantity Q = Σ w_i q_i:
//   dQ/dq_i = w_i,   dQ/dα_i = q_i·T_i − (Σ_{j>i} w_j q_j)/(1−α_i),
// with T_i the transmittance in front of primitive i. Suffix sums are peeled
// front-to-back from the forward totals.
std::vector<ContribGrad> backward_blend(const RaySample& sample, const BlendUpstream& up);

// Per-contribution gradients of Σ_i w_i ‖c_i − ref‖², scaled by `scale`.
// d_alpha uses the forward-accumulated suffix sums; d_color = 2 s w_i (c_i − ref).
void backward_color_var(const RaySample& sample, const Vec3& ref_px, double scale,
                        std::vector<ContribGrad>& grads);

enum class NormalVarMode {
    kBlendedDetached,  // treat the blended normal as constant (training default)
    kFull,             // exact gradient of the explicit sum
};

void backward_normal_var(const RaySample& sample, NormalVarMode mode, double scale,
                         std::vector<ContribGrad>& grads);

// Exact gradient of the per-ray weighted depth variance.
void backward_distortion(const RaySample& sample, double scale, std::vector<ContribGrad>& grads);

// Per-pixel dL/dĈ = (L_rgb − β/Ĉ) / pixel_count, zeroed where Ĉ sits at a
// clamp bound.
ImageBuffer backward_confidence_map(const ImageBuffer& rgb_map, const ImageBuffer& conf_map,
                                    double beta);

// Geometry chain: gradients of one primitive's alpha and depth w.r.t. its
// (position, rotation, log-scales, opacity logit) along one ray.
struct GeomGrads {
    Vec3 d_position;
    Quat d_rotation{0, 0, 0, 0};
    Vec3 d_log_scale;
    double d_opacity_logit = 0.0;
};
GeomGrads backward_alpha_geom(const Gaussian& g, const Ray& r, double d_alpha, double d_t = 0.0);

struct BackwardConfig {
    LossWeights weights;
    int iteration = 0;
    NormalVarMode normal_mode = NormalVarMode::kBlendedDetached;
};

// Image-level loss backward: everything above the per-ray blending chain.
// d_app is the gradient w.r.t. the appearance-corrected image and excludes
// the appearance module's own chain back to the raw render; the caller runs
// the appearance backward and folds its contribution into d_raw.
struct ImageGradients {
    ImageBuffer d_raw;     // 3ch, dL/dÎ via contrast+structure and variance-independent paths
    ImageBuffer d_app;     // 3ch, dL/dÎ_app via L1 and the luminance factor
    ImageBuffer d_conf;    // 1ch, dL/dĈ (clamp-aware)
    ImageBuffer d_normal;  // 3ch, dL/d blended normal (depth-normal consistency)
    ImageBuffer d_depth;   // 1ch, dL/d blended depth (depth-normal consistency)
    LossReport report;
};
ImageGradients loss_image_backward(const RenderOutputs& outputs, const Camera& cam,
                                   const ImageBuffer& ref, const ImageBuffer& app,
                                   const BackwardConfig& config);

// Per-ray chain: folds the image-level upstreams plus the variance and
// distortion terms through the blending and geometry chains into per-gaussian
// parameter gradients. Deterministic regardless of worker count.
GradientBuffer render_backward(const GaussianCloud& cloud, const Camera& cam,
                               const RenderOutputs& outputs, const ImageBuffer& ref,
                               const ImageBuffer& d_raw, const ImageBuffer& d_conf,
                               const ImageBuffer& d_normal, const ImageBuffer& d_depth,
                               const BackwardConfig& config);

}  // namespace csplat
