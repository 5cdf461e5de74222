#pragma once

#include <string>

#include "csplat/core/vec.hpp"

namespace csplat {

struct Ray {
    Vec3 origin;
    Vec3 direction;  // unit norm
};

// Pinhole camera with a world-to-camera rigid transform (x_cam = R x_world + t).
struct Camera {
    double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
    int width = 0, height = 0;
    Mat3 rotation = Mat3::identity();
    Vec3 translation;
    int image_id = 0;
    std::string image_path;

    Vec3 center() const { return transpose(rotation) * (-translation); }

    // Ray through the center of pixel (px, py).
    Ray pixel_ray(double px, double py) const {
        const Vec3 dir_cam{(px + 0.5 - cx) / fx, (py + 0.5 - cy) / fy, 1.0};
        return Ray{center(), normalized(transpose(rotation) * dir_cam)};
    }

    // Camera looking from `eye` toward `target` with +y screen axis pointing
    // away from `up` (image rows grow downward).
    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up,
                          double fx, double fy, int width, int height);
};

}  // namespace csplat
