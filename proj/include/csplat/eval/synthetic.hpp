#pragma once

#include <string>
#include <vector>

#include "csplat/core/image.hpp"
#include "csplat/mesh/marching.hpp"
#include "csplat/scene/scene_io.hpp"

namespace csplat {

enum class SyntheticKind { kPlane, kSphere, kPlaneSphere };

SyntheticKind synthetic_kind_from_string(const std::string& name);

struct SyntheticConfig {
    SyntheticKind kind = SyntheticKind::kPlaneSphere;
    int n_views = 16;
    int resolution = 64;
    uint64_t seed = 1;
    double exposure_jitter = 0.0;  // per-image factor exp(U(-j, j))
    std::size_t init_points = 1000;
    double init_noise = 0.015;     // stand-in for SfM noise, world units
};

struct SyntheticScene {
    Scene scene;                      // cameras (image paths unset until saved)
    std::vector<ImageBuffer> images;  // ray-cast ground truth, jitter applied
    std::vector<double> exposure_log; // per-image log factor actually used
    TriMesh gt_mesh;
    GaussianCloud init_cloud;         // noisy surface samples with sampled colors
};

// Ring of cameras looking at the scene center, analytic ray-cast ground truth
// with Lambertian checkerboard shading, a ground-truth mesh for F1
// evaluation, and a noisy init cloud standing in for SfM points. Fully
// deterministic for a fixed config.
SyntheticScene make_synthetic_scene(const SyntheticConfig& config);

// Writes scene.json, images/*.ppm, gt_mesh.ply and init.ply under `dir`.
void save_synthetic_scene(const SyntheticScene& scene, const std::string& dir);

// Depth of the analytic surface hit for one ray (infinity when missed);
// exposes the ray caster for tests.
double synthetic_hit_depth(SyntheticKind kind, const Ray& ray);

}  // namespace csplat
