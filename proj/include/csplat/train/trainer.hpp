#pragma once

#include <string>
#include <vector>

#include "csplat/app/appearance.hpp"
#include "csplat/grad/backward.hpp"
#include "csplat/scene/scene_io.hpp"
#include "csplat/train/densify.hpp"
#include "csplat/train/optimizer.hpp"

namespace csplat {

struct TrainConfig {
    int iterations = 7000;
    uint64_t seed = 1;
    AppearanceVariant appearance = AppearanceVariant::kCnn;
    LossWeights weights;
    DensifyConfig densify;
    NormalVarMode normal_mode = NormalVarMode::kBlendedDetached;
    double appearance_lr = 1e-3;
    int sh_warmup_interval = 1000;
    std::string out_dir;            // empty: keep everything in memory only
    int checkpoint_interval = 1000;
    int render_interval = 0;        // 0: no periodic renders
    bool verbose = false;
};

struct TrainResult {
    GaussianCloud cloud;
    AppearanceModel appearance;
    std::vector<LossReport> log;  // one report per iteration (maps dropped)
};

// Gradients of the full training loss for one view. Shared by the training
// loop and the finite-difference harness. `frozen_ds32` pins the detached CNN
// input so finite differences see exactly the function whose gradient the
// backward pass computes.
struct FullGradients {
    GradientBuffer cloud;
    AppearanceGrads appearance;
    LossReport report;
    RenderOutputs outputs;
};
FullGradients compute_full_gradients(const GaussianCloud& cloud, const Camera& cam,
                                     const ImageBuffer& ref, const AppearanceModel* appearance,
                                     const BackwardConfig& config,
                                     const ImageBuffer* frozen_ds32 = nullptr);

// Loss only (same code path), for finite differencing.
double evaluate_loss(const GaussianCloud& cloud, const Camera& cam, const ImageBuffer& ref,
                     const AppearanceModel* appearance, const BackwardConfig& config,
                     const ImageBuffer* frozen_ds32 = nullptr);

// 1.1x the largest camera distance from the camera centroid (the usual 3DGS
// scene-extent proxy); falls back to 1 for degenerate rigs.
double scene_extent_from_cameras(const Scene& scene);

// Round-robin over views: render, loss, backward, Adam step, quaternion
// renormalization, periodic confidence-steered densification, checkpoints.
TrainResult train(const Scene& scene, const std::vector<ImageBuffer>& images,
                  GaussianCloud initial, const TrainConfig& config);

}  // namespace csplat
