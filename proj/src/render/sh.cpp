#include "csplat/render/sh.hpp"

namespace csplat {

namespace {

constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                           -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                           0.3731763325901154, -0.4570457994644658, 1.445305721320277,
                           -0.5900435899266435};

}  // namespace

std::array<double, kShCoeffCount> sh_basis(const Vec3& d, int degree) {
    std::array<double, kShCoeffCount> b{};
    b[0] = kC0;
    if (degree < 1) return b;
    const double x = d.x, y = d.y, z = d.z;
    b[1] = -kC1 * y;
    b[2] = kC1 * z;
    b[3] = -kC1 * x;
    if (degree < 2) return b;
    const double xx = x * x, yy = y * y, zz = z * z;
    const double xy = x * y, yz = y * z, xz = x * z;
    b[4] = kC2[0] * xy;
    b[5] = kC2[1] * yz;
    b[6] = kC2[2] * (2.0 * zz - xx - yy);
    b[7] = kC2[3] * xz;
    b[8] = kC2[4] * (xx - yy);
    if (degree < 3) return b;
    b[9] = kC3[0] * y * (3.0 * xx - yy);
    b[10] = kC3[1] * xy * z;
    b[11] = kC3[2] * y * (4.0 * zz - xx - yy);
    b[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    b[13] = kC3[4] * x * (4.0 * zz - xx - yy);
    b[14] = kC3[5] * z * (xx - yy);
    b[15] = kC3[6] * x * (xx - 3.0 * yy);
    return b;
}

Vec3 sh_eval_with_clamp(std::span<const double> coeffs, const Vec3& d, int degree,
                        uint8_t* clamp_mask) {
    const auto basis = sh_basis(d, degree);
    const int count = sh_coeffs_for_degree(degree);
    Vec3 rgb{0.5, 0.5, 0.5};
    for (int k = 0; k < count; ++k) {
        const double bk = basis[static_cast<std::size_t>(k)];
        rgb.x += bk * coeffs[static_cast<std::size_t>(k * 3 + 0)];
        rgb.y += bk * coeffs[static_cast<std::size_t>(k * 3 + 1)];
        rgb.z += bk * coeffs[static_cast<std::size_t>(k * 3 + 2)];
    }
    uint8_t mask = 0;
    for (int c = 0; c < 3; ++c) {
        if (rgb[c] < 0.0) {
            rgb[c] = 0.0;
            mask |= static_cast<uint8_t>(1u << c);
        }
    }
    if (clamp_mask) *clamp_mask = mask;
    return rgb;
}

Vec3 sh_eval(std::span<const double> coeffs, const Vec3& d, int degree) {
    return sh_eval_with_clamp(coeffs, d, degree, nullptr);
}

}  // namespace csplat
