#include "csplat/train/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace csplat {

void adam_update(AdamGroup& group, std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size() || params.size() != group.m.size())
        throw std::invalid_argument("adam_update: size mismatch");
    const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(group.step));
    const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(group.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        group.m[i] = kAdamBeta1 * group.m[i] + (1.0 - kAdamBeta1) * g;
        group.v[i] = kAdamBeta2 * group.v[i] + (1.0 - kAdamBeta2) * g * g;
        const double mhat = group.m[i] / bc1;
        const double vhat = group.v[i] / bc2;
        params[i] -= group.lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
}

void OptimizerState::initialize(std::size_t n) {
    position.resize(n * 3);
    rotation.resize(n * 4);
    log_scale.resize(n * 3);
    opacity.resize(n);
    sh_dc.resize(n * 3);
    sh_rest.resize(n * (kShCoeffCount - 1) * 3);
    gamma.resize(n);
    position.lr = lr_position_init;
    rotation.lr = lr_rotation;
    log_scale.lr = lr_log_scale;
    opacity.lr = lr_opacity;
    sh_dc.lr = lr_sh_dc;
    sh_rest.lr = lr_sh_rest;
    gamma.lr = lr_gamma;
}

double OptimizerState::position_lr(int iteration) const {
    const double t = std::clamp(static_cast<double>(iteration) / total_iterations, 0.0, 1.0);
    return lr_position_init * std::pow(lr_position_final / lr_position_init, t);
}

void OptimizerState::step(GaussianCloud& cloud, const GradientBuffer& grads, int iteration) {
    const std::size_t n = cloud.size();
    if (grads.size() != n) throw std::invalid_argument("OptimizerState::step: size mismatch");
    position.lr = position_lr(iteration);

    std::vector<double> p_buf(n * 3), g_buf(n * 3);
    auto run = [&](AdamGroup& group, std::size_t dim, auto&& read_param, auto&& read_grad,
                   auto&& write_param) {
        p_buf.resize(n * dim);
        g_buf.resize(n * dim);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < dim; ++k) {
                p_buf[i * dim + k] = read_param(i, k);
                g_buf[i * dim + k] = read_grad(i, k);
            }
        ++group.step;
        adam_update(group, p_buf, g_buf);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < dim; ++k) write_param(i, k, p_buf[i * dim + k]);
    };

    run(position, 3,
        [&](std::size_t i, std::size_t k) { return cloud[i].position[static_cast<int>(k)]; },
        [&](std::size_t i, std::size_t k) { return grads.d_position[i][static_cast<int>(k)]; },
        [&](std::size_t i, std::size_t k, double v) { cloud[i].position[static_cast<int>(k)] = v; });
    run(rotation, 4,
        [&](std::size_t i, std::size_t k) { return cloud[i].rotation[static_cast<int>(k)]; },
        [&](std::size_t i, std::size_t k) { return grads.d_rotation[i][static_cast<int>(k)]; },
        [&](std::size_t i, std::size_t k, double v) { cloud[i].rotation[static_cast<int>(k)] = v; });
    run(log_scale, 3,
        [&](std::size_t i, std::size_t k) { return cloud[i].log_scale[static_cast<int>(k)]; },
        [&](std::size_t i, std::size_t k) { return grads.d_log_scale[i][static_cast<int>(k)]; },
        [&](std::size_t i, std::size_t k, double v) { cloud[i].log_scale[static_cast<int>(k)] = v; });
    run(opacity, 1, [&](std::size_t i, std::size_t) { return cloud[i].opacity_logit; },
        [&](std::size_t i, std::size_t) { return grads.d_opacity_logit[i]; },
        [&](std::size_t i, std::size_t, double v) { cloud[i].opacity_logit = v; });
    run(sh_dc, 3, [&](std::size_t i, std::size_t k) { return cloud[i].sh[k]; },
        [&](std::size_t i, std::size_t k) { return grads.d_sh[i][k]; },
        [&](std::size_t i, std::size_t k, double v) { cloud[i].sh[k] = v; });
    run(sh_rest, (kShCoeffCount - 1) * 3,
        [&](std::size_t i, std::size_t k) { return cloud[i].sh[3 + k]; },
        [&](std::size_t i, std::size_t k) { return grads.d_sh[i][3 + k]; },
        [&](std::size_t i, std::size_t k, double v) { cloud[i].sh[3 + k] = v; });
    run(gamma, 1, [&](std::size_t i, std::size_t) { return cloud[i].gamma; },
        [&](std::size_t i, std::size_t) { return grads.d_gamma[i]; },
        [&](std::size_t i, std::size_t, double v) { cloud[i].gamma = v; });

    // unit-rotation invariant is restored right after the step
    for (std::size_t i = 0; i < n; ++i) cloud[i].rotation = cloud[i].rotation.normalized();
}

void OptimizerState::remap_rows(const std::vector<int64_t>& source_rows) {
    auto remap = [&](AdamGroup& group, std::size_t dim) {
        std::vector<double> new_m(source_rows.size() * dim, 0.0);
        std::vector<double> new_v(source_rows.size() * dim, 0.0);
        for (std::size_t i = 0; i < source_rows.size(); ++i) {
            const int64_t src = source_rows[i];
            if (src < 0) continue;
            for (std::size_t k = 0; k < dim; ++k) {
                new_m[i * dim + k] = group.m[static_cast<std::size_t>(src) * dim + k];
                new_v[i * dim + k] = group.v[static_cast<std::size_t>(src) * dim + k];
            }
        }
        group.m = std::move(new_m);
        group.v = std::move(new_v);
    };
    remap(position, 3);
    remap(rotation, 4);
    remap(log_scale, 3);
    remap(opacity, 1);
    remap(sh_dc, 3);
    remap(sh_rest, (kShCoeffCount - 1) * 3);
    remap(gamma, 1);
}

}  // namespace csplat
