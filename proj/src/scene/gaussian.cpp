#include "csplat/scene/gaussian.hpp"

namespace csplat {

Covariance covariance(const Gaussian& g) {
    const Mat3 r = quat_to_rotation(g.rotation.normalized());
    const Vec3 s = g.scales();
    Covariance out;
    out.sigma = Mat3::zero();
    out.sigma_inv = Mat3::zero();
    for (int k = 0; k < 3; ++k) {
        const Mat3 axis = outer(r.col(k), r.col(k));
        out.sigma += axis * (s[k] * s[k]);
        out.sigma_inv += axis * (1.0 / (s[k] * s[k]));
    }
    return out;
}

int normal_axis(const Gaussian& g) {
    const Vec3 s = g.log_scale;  // exp is monotone; compare logs directly
    int axis = 0;
    if (s.y < s[axis]) axis = 1;
    if (s.z < s[axis]) axis = 2;
    return axis;
}

Vec3 gaussian_normal(const Gaussian& g, const Vec3& view_dir) {
    const Mat3 r = quat_to_rotation(g.rotation.normalized());
    Vec3 n = r.col(normal_axis(g));
    if (dot(n, view_dir) > 0.0) n = -n;
    return n;
}

}  // namespace csplat
