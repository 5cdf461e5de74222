#pragma once

#include <cstdint>
#include <vector>

#include "csplat/core/rng.hpp"
#include "csplat/scene/gaussian.hpp"
#include "csplat/train/optimizer.hpp"

namespace csplat {

struct DensifyConfig {
    double tau_grad = 2e-4;          // base positional-gradient threshold
    int interval = 100;              // iterations between densification events
    int start_iteration = 500;
    double stop_fraction = 0.6;      // relative to total iterations
    double split_scale_fraction = 0.01;  // of scene extent: clone below, split above
    double prune_opacity = 0.005;
    // primitives larger than this fraction of the scene extent are removed at
    // densification events (0 disables); without it, oversized low-signal
    // primitives keep splitting their children far outside the scene
    double prune_scale_fraction = 0.1;
    int total_iterations = 7000;
    std::size_t max_primitives = 50000;  // reaching the cap halts densification, not training
    double scene_extent = 1.0;

    int stop_iteration() const {
        return static_cast<int>(stop_fraction * total_iterations);
    }
    bool due(int iteration) const {
        return iteration >= start_iteration && iteration <= stop_iteration() &&
               iteration % interval == 0;
    }
    // prune-only upkeep after densification ends, so primitives cannot grow
    // unbounded once the clone/split phase stops; inactive when the
    // densification window never opened
    bool maintenance_due(int iteration) const {
        return stop_iteration() >= start_iteration && iteration > stop_iteration() &&
               iteration % interval == 0;
    }
};

// Effective clone/split threshold for one primitive: low confidence raises the
// bar, the clamp keeps confident primitives at the base threshold.
double effective_threshold(double tau_grad, double confidence);

struct DensifyResult {
    std::size_t cloned = 0;
    std::size_t split = 0;
    std::size_t pruned = 0;
};

// Clone/split primitives whose mean accumulated positional gradient exceeds
// their confidence-adjusted threshold, prune low-opacity ones, keep the
// optimizer rows in lockstep, and reset the accumulation stats.
DensifyResult densify_and_prune(GaussianCloud& cloud, OptimizerState& optimizer,
                                const DensifyConfig& config, Rng& rng);

// Opacity/size pruning only (maintenance after the densification window).
DensifyResult prune_cloud(GaussianCloud& cloud, OptimizerState& optimizer,
                          const DensifyConfig& config);

}  // namespace csplat
