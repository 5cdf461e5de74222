#include "csplat/scene/camera.hpp"

namespace csplat {

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up,
                       double fx, double fy, int width, int height) {
    const Vec3 forward = normalized(target - eye);
    const Vec3 right = normalized(cross(forward, up));
    const Vec3 down = cross(forward, right);
    Camera cam;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    cam.width = width;
    cam.height = height;
    for (int c = 0; c < 3; ++c) {
        cam.rotation(0, c) = right[c];
        cam.rotation(1, c) = down[c];
        cam.rotation(2, c) = forward[c];
    }
    cam.translation = -(cam.rotation * eye);
    return cam;
}

}  // namespace csplat
