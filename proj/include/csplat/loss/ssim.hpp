#pragma once

#include "csplat/core/image.hpp"

namespace csplat {

// Wang-2004 constants for inputs in [0,1]; C3 = C2/2 makes l*c*s collapse to
// the classic SSIM formula.
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr double kSsimC3 = kSsimC2 / 2.0;

// 11x11 Gaussian window, sigma = 1.5, reflection padding at borders.
ImageBuffer blur11(const ImageBuffer& img);
// Adjoint of blur11 (scatter through the same reflected taps).
ImageBuffer blur11_adjoint(const ImageBuffer& coef);

// Windowed statistics of an image pair, all per pixel and channel.
struct SsimStats {
    ImageBuffer mu_x, mu_y;    // means
    ImageBuffer var_x, var_y;  // variances (clamped at 0)
    ImageBuffer cov;           // covariance
};
SsimStats ssim_stats(const ImageBuffer& x, const ImageBuffer& y);

// Per-pixel, per-channel luminance / contrast / structure maps.
struct SsimMaps {
    ImageBuffer l, c, s;
};
SsimMaps ssim_components(const ImageBuffer& ref, const ImageBuffer& img);
SsimMaps ssim_components_from_stats(const SsimStats& st);

// mean over pixels and channels of l*c*s.
double ssim_mean(const ImageBuffer& ref, const ImageBuffer& img);
// 32-bit fast path of the same reduction.
float ssim_mean_f32(const ImageBuffer& ref, const ImageBuffer& img);

// 1 - mean( l(ref, app) * c(ref, raw) * s(ref, raw) ): the luminance factor
// reads the appearance-corrected render, contrast and structure the raw one.
double dssim_decoupled(const ImageBuffer& ref, const ImageBuffer& raw, const ImageBuffer& app);

// Gradients of sum_{px,ch} weight * l(ref,app)*c(ref,raw)*s(ref,raw) w.r.t.
// the two rendered images (ref is constant). Pass the same image for raw and
// app to get the classic single-pair backward split across the two outputs.
struct DecoupledSsimGrads {
    ImageBuffer d_app;
    ImageBuffer d_raw;
};
DecoupledSsimGrads decoupled_ssim_backward(const ImageBuffer& ref, const ImageBuffer& raw,
                                           const ImageBuffer& app, const ImageBuffer& weight);

}  // namespace csplat
