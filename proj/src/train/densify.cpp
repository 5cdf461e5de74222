#include "csplat/train/densify.hpp"

#include <algorithm>
#include <cmath>

namespace csplat {

double effective_threshold(double tau_grad, double confidence) {
    return tau_grad / std::min(confidence, 1.0);
}

DensifyResult densify_and_prune(GaussianCloud& cloud, OptimizerState& optimizer,
                                const DensifyConfig& config, Rng& rng) {
    DensifyResult result;
    const std::size_t n = cloud.size();
    std::vector<Gaussian> next;
    std::vector<int64_t> source_rows;
    next.reserve(n + n / 4);
    source_rows.reserve(n + n / 4);

    std::size_t budget = config.max_primitives > n ? config.max_primitives - n : 0;

    for (std::size_t i = 0; i < n; ++i) {
        const Gaussian& g = cloud[i];
        const Vec3 scales = g.scales();
        const double max_scale = std::max(scales.x, std::max(scales.y, scales.z));
        if (g.opacity() < config.prune_opacity ||
            (config.prune_scale_fraction > 0.0 &&
             max_scale > config.prune_scale_fraction * config.scene_extent)) {
            ++result.pruned;
            continue;
        }
        const uint32_t count = cloud.densify_stats.count[i];
        const double mean_grad =
            cloud.densify_stats.grad_norm_accum[i] / std::max<uint32_t>(count, 1);
        const double threshold = effective_threshold(config.tau_grad, g.confidence());
        const bool densify = mean_grad > threshold && budget > 0;

        const bool small = max_scale < config.split_scale_fraction * config.scene_extent;

        if (!densify) {
            next.push_back(g);
            source_rows.push_back(static_cast<int64_t>(i));
            continue;
        }
        const Mat3 rot = quat_to_rotation(g.rotation.normalized());
        if (small) {
            // clone: keep the original, add a jittered copy
            next.push_back(g);
            source_rows.push_back(static_cast<int64_t>(i));
            Gaussian copy = g;
            copy.position += rot * cwise_mul(scales * 0.1, rng.normal_vec3());
            next.push_back(copy);
            source_rows.push_back(-1);
            --budget;
            ++result.cloned;
        } else {
            // split: two children sampled from the primitive, scales / 1.6
            for (int child = 0; child < 2; ++child) {
                Gaussian c = g;
                c.position = g.position + rot * cwise_mul(scales, rng.normal_vec3());
                c.log_scale -= Vec3{std::log(1.6), std::log(1.6), std::log(1.6)};
                next.push_back(c);
                source_rows.push_back(-1);
            }
            --budget;
            ++result.split;
        }
    }

    cloud.gaussians = std::move(next);
    cloud.reset_stats();
    optimizer.remap_rows(source_rows);
    return result;
}

DensifyResult prune_cloud(GaussianCloud& cloud, OptimizerState& optimizer,
                          const DensifyConfig& config) {
    DensifyResult result;
    std::vector<Gaussian> next;
    std::vector<int64_t> source_rows;
    next.reserve(cloud.size());
    source_rows.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Gaussian& g = cloud[i];
        const Vec3 scales = g.scales();
        const double max_scale = std::max(scales.x, std::max(scales.y, scales.z));
        if (g.opacity() < config.prune_opacity ||
            (config.prune_scale_fraction > 0.0 &&
             max_scale > config.prune_scale_fraction * config.scene_extent)) {
            ++result.pruned;
            continue;
        }
        next.push_back(g);
        source_rows.push_back(static_cast<int64_t>(i));
    }
    if (result.pruned == 0) return result;
    cloud.gaussians = std::move(next);
    cloud.reset_stats();
    optimizer.remap_rows(source_rows);
    return result;
}

}  // namespace csplat
