#pragma once

#include <optional>
#include <string>
#include <vector>

#include "csplat/core/image.hpp"
#include "csplat/core/rng.hpp"
#include "csplat/mesh/marching.hpp"

namespace csplat {

// 10·log10(1/MSE) for images in [0,1]; identical images give +infinity.
double psnr(const ImageBuffer& ref, const ImageBuffer& img);

struct F1Result {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Distance-thresholded precision/recall over point sets (inclusive at tau).
// When `crop_to_gt_bounds` is set, predicted points outside the gt AABB
// inflated by tau are excluded from the precision pool.
F1Result f1_score(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt, double tau,
                  bool crop_to_gt_bounds = false);

// 0.5·(mean nearest distance pred→gt + gt→pred).
double chamfer(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt);

// Brute-force counterparts, retained as oracles and for small inputs.
F1Result f1_score_brute_force(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt,
                              double tau, bool crop_to_gt_bounds = false);
double chamfer_brute_force(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt);

// Area-proportional surface samples: per-triangle counts by largest
// remainder, uniform barycentric within each triangle, fixed seed.
std::vector<Vec3> sample_mesh_surface(const TriMesh& mesh, std::size_t count, uint64_t seed);

struct MetricsReport {
    std::optional<double> psnr;
    std::optional<double> ssim;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double chamfer = 0.0;
    double tau = 0.05;
    std::size_t n_samples = 100000;
    uint64_t seed = 0;
};

std::string metrics_to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const std::string& json);

}  // namespace csplat
