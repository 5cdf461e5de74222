#pragma once

#include <string>
#include <vector>

#include "csplat/scene/camera.hpp"
#include "csplat/scene/gaussian.hpp"

namespace csplat {

// Binary little-endian PLY. The property layout follows the common 3DGS
// export (x,y,z, rot_0..3, scale_0..2 as logs, opacity as a logit,
// f_dc_0..2, f_rest_0..44 in channel-major blocks of 15) plus one extra
// float property `gamma`. The reader maps properties by name, so reordered
// or additional float properties are tolerated; a missing `gamma` loads
// as 0.
void save_cloud_ply(const GaussianCloud& cloud, const std::string& path);
GaussianCloud load_cloud_ply(const std::string& path);

struct Scene {
    std::vector<Camera> cameras;
    std::string base_dir;  // directory of the scene file; image paths resolve against it

    std::string image_path(const Camera& cam) const;
};

// Scene description: one JSON document listing pinhole cameras and their
// image files. See README for the schema.
Scene load_scene(const std::string& path);
void save_scene(const Scene& scene, const std::string& path);

}  // namespace csplat
