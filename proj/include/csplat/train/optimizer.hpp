#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "csplat/grad/backward.hpp"
#include "csplat/scene/gaussian.hpp"

namespace csplat {

// Flat Adam moments for one parameter group.
struct AdamGroup {
    std::vector<double> m, v;
    int64_t step = 0;
    double lr = 1e-3;

    void resize(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
    }
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-15;

// One bias-corrected Adam update over a flat parameter span. The group's step
// counter must be incremented (once) by the caller per optimization step.
void adam_update(AdamGroup& group, std::span<double> params, std::span<const double> grads);

// Cloud optimizer: one Adam group per parameter family. The position rate
// decays exponentially from lr_position_init to lr_position_final over
// total_iterations; all other rates are constant.
struct OptimizerState {
    AdamGroup position, rotation, log_scale, opacity, sh_dc, sh_rest, gamma;

    double lr_position_init = 1.6e-4;
    double lr_position_final = 1.6e-6;
    double lr_rotation = 1e-3;
    double lr_log_scale = 5e-3;
    double lr_opacity = 5e-2;
    double lr_sh_dc = 2.5e-3;
    double lr_sh_rest = 1.25e-4;
    double lr_gamma = 2.5e-4;
    int total_iterations = 7000;

    void initialize(std::size_t gaussian_count);
    double position_lr(int iteration) const;

    // Applies one Adam step to every gaussian parameter.
    void step(GaussianCloud& cloud, const GradientBuffer& grads, int iteration);

    // Rebuilds moment rows after a cloud mutation: row i of the new state is
    // copied from old row source_rows[i], or zero-initialized when
    // source_rows[i] < 0 (fresh primitives).
    void remap_rows(const std::vector<int64_t>& source_rows);
};

}  // namespace csplat
