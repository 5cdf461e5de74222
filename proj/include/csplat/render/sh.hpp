#pragma once

#include <array>
#include <span>

#include "csplat/core/vec.hpp"
#include "csplat/scene/gaussian.hpp"

namespace csplat {

// Real spherical harmonics basis values at unit direction d, graphics
// convention, band-major (1, deg-1 x3, deg-2 x5, deg-3 x7). Entries above
// (degree+1)^2 are zero.
std::array<double, kShCoeffCount> sh_basis(const Vec3& d, int degree);

inline int sh_coeffs_for_degree(int degree) { return (degree + 1) * (degree + 1); }

// View-dependent RGB: basis-weighted sum of the coefficients plus a 0.5
// offset, clamped at 0 from below.
Vec3 sh_eval(std::span<const double> coeffs /* kShCoeffCount*3, (k,c) interleaved */,
             const Vec3& d, int degree);

// Same but also reports which channels hit the clamp (bit c set => channel c
// clamped; its coefficient gradients are zero).
Vec3 sh_eval_with_clamp(std::span<const double> coeffs, const Vec3& d, int degree,
                        uint8_t* clamp_mask);

}  // namespace csplat
