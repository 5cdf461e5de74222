#include "csplat/train/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "csplat/core/image_io.hpp"

namespace csplat {

FullGradients compute_full_gradients(const GaussianCloud& cloud, const Camera& cam,
                                     const ImageBuffer& ref, const AppearanceModel* appearance,
                                     const BackwardConfig& config,
                                     const ImageBuffer* frozen_ds32) {
    FullGradients out;
    out.outputs = render_image(cloud, cam, /*retain_samples=*/true);

    AppearanceForward app_fwd;
    const bool has_app = appearance && appearance->variant != AppearanceVariant::kNone;
    if (has_app) {
        app_fwd = apply_appearance(*appearance, cam.image_id, out.outputs.color, frozen_ds32);
    } else {
        app_fwd.corrected = out.outputs.color;
    }

    ImageGradients img = loss_image_backward(out.outputs, cam, ref, app_fwd.corrected, config);
    out.report = img.report;

    ImageBuffer d_raw = img.d_raw;
    if (has_app) {
        out.appearance = appearance_backward(*appearance, cam.image_id, out.outputs.color,
                                             app_fwd, img.d_app);
        for (std::size_t i = 0; i < d_raw.data.size(); ++i)
            d_raw.data[i] += out.appearance.d_raw.data[i];
    } else {
        for (std::size_t i = 0; i < d_raw.data.size(); ++i) d_raw.data[i] += img.d_app.data[i];
    }

    out.cloud = render_backward(cloud, cam, out.outputs, ref, d_raw, img.d_conf, img.d_normal,
                                img.d_depth, config);
    out.cloud.check_finite();
    return out;
}

double evaluate_loss(const GaussianCloud& cloud, const Camera& cam, const ImageBuffer& ref,
                     const AppearanceModel* appearance, const BackwardConfig& config,
                     const ImageBuffer* frozen_ds32) {
    const RenderOutputs outputs = render_image(cloud, cam, /*retain_samples=*/true);
    ImageBuffer app;
    if (appearance && appearance->variant != AppearanceVariant::kNone) {
        app = apply_appearance(*appearance, cam.image_id, outputs.color, frozen_ds32).corrected;
    } else {
        app = outputs.color;
    }
    return total_loss(outputs, cam, ref, app, config.weights, config.iteration).total;
}

double scene_extent_from_cameras(const Scene& scene) {
    if (scene.cameras.empty()) return 1.0;
    Vec3 centroid;
    for (const Camera& cam : scene.cameras) centroid += cam.center();
    centroid = centroid / static_cast<double>(scene.cameras.size());
    double radius = 0.0;
    for (const Camera& cam : scene.cameras)
        radius = std::max(radius, norm(cam.center() - centroid));
    return radius > 0.0 ? 1.1 * radius : 1.0;
}

namespace {

// Per-image Adam state for appearance parameters; stepped only on the
// iterations that touched the image.
struct AppearanceOptimizer {
    AdamGroup net;                    // all conv weights+biases, flattened
    std::vector<AdamGroup> per_image; // latent or affine parameters

    void initialize(AppearanceModel& model, double lr) {
        if (model.variant == AppearanceVariant::kCnn) {
            net.resize(model.net.parameter_count());
            net.lr = lr;
            per_image.resize(model.latents.size());
            for (auto& g : per_image) {
                g.resize(kLatentDim);
                g.lr = lr;
            }
        } else if (model.variant == AppearanceVariant::kPgsr) {
            per_image.resize(model.pgsr_a.size());
            for (auto& g : per_image) {
                g.resize(2);
                g.lr = lr;
            }
        } else if (model.variant == AppearanceVariant::kH3dgs) {
            per_image.resize(model.h3_a.size());
            for (auto& g : per_image) {
                g.resize(12);
                g.lr = lr;
            }
        }
    }

    void step(AppearanceModel& model, const AppearanceGrads& grads, int image_id) {
        const std::size_t id = static_cast<std::size_t>(image_id);
        if (model.variant == AppearanceVariant::kCnn) {
            std::vector<double> params, gbuf;
            params.reserve(net.m.size());
            gbuf.reserve(net.m.size());
            Conv3x3* convs[4] = {&model.net.conv0, &model.net.conv1, &model.net.conv2,
                                 &model.net.conv_out};
            for (int c = 0; c < 4; ++c) {
                params.insert(params.end(), convs[c]->weight.begin(), convs[c]->weight.end());
                params.insert(params.end(), convs[c]->bias.begin(), convs[c]->bias.end());
                gbuf.insert(gbuf.end(), grads.d_conv_w[c].begin(), grads.d_conv_w[c].end());
                gbuf.insert(gbuf.end(), grads.d_conv_b[c].begin(), grads.d_conv_b[c].end());
            }
            ++net.step;
            adam_update(net, params, gbuf);
            std::size_t off = 0;
            for (int c = 0; c < 4; ++c) {
                std::copy_n(params.begin() + static_cast<long>(off), convs[c]->weight.size(),
                            convs[c]->weight.begin());
                off += convs[c]->weight.size();
                std::copy_n(params.begin() + static_cast<long>(off), convs[c]->bias.size(),
                            convs[c]->bias.begin());
                off += convs[c]->bias.size();
            }
            AdamGroup& lat = per_image[id];
            ++lat.step;
            std::array<double, kLatentDim> lat_params = model.latents[id];
            adam_update(lat, std::span<double>(lat_params.data(), kLatentDim),
                        std::span<const double>(grads.d_latent.data(), kLatentDim));
            model.latents[id] = lat_params;
        } else if (model.variant == AppearanceVariant::kPgsr) {
            AdamGroup& g = per_image[id];
            ++g.step;
            double params[2] = {model.pgsr_a[id], model.pgsr_b[id]};
            const double gr[2] = {grads.d_pgsr_a, grads.d_pgsr_b};
            adam_update(g, params, gr);
            model.pgsr_a[id] = params[0];
            model.pgsr_b[id] = params[1];
        } else if (model.variant == AppearanceVariant::kH3dgs) {
            AdamGroup& g = per_image[id];
            ++g.step;
            double params[12], gr[12];
            for (int i = 0; i < 9; ++i) {
                params[i] = model.h3_a[id].m[static_cast<std::size_t>(i)];
                gr[i] = grads.d_h3_a.m[static_cast<std::size_t>(i)];
            }
            for (int i = 0; i < 3; ++i) {
                params[9 + i] = model.h3_b[id][i];
                gr[9 + i] = grads.d_h3_b[i];
            }
            adam_update(g, params, gr);
            for (int i = 0; i < 9; ++i) model.h3_a[id].m[static_cast<std::size_t>(i)] = params[i];
            model.h3_b[id] = {params[9], params[10], params[11]};
        }
    }
};

void write_log_header(std::ofstream& out) {
    out << "iteration,l1,dssim,conf,color_var,normal_var,depth_normal,distortion,total\n";
}

void write_log_row(std::ofstream& out, int iteration, const LossReport& r) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  iteration, r.l1, r.dssim, r.conf, r.color_var, r.normal_var, r.depth_normal,
                  r.distortion, r.total);
    out << buf;
}

std::string checkpoint_name(const std::string& dir, int iteration, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "ckpt_%06d.%s", iteration, ext);
    return dir + "/" + buf;
}

}  // namespace

TrainResult train(const Scene& scene, const std::vector<ImageBuffer>& images,
                  GaussianCloud initial, const TrainConfig& config) {
    if (scene.cameras.empty()) throw std::invalid_argument("train: no cameras");
    if (images.size() != scene.cameras.size())
        throw std::invalid_argument("train: image count must match camera count");

    TrainResult result;
    result.cloud = std::move(initial);
    result.cloud.reset_stats();

    int max_image_id = 0;
    for (const Camera& cam : scene.cameras) max_image_id = std::max(max_image_id, cam.image_id);
    result.appearance =
        AppearanceModel::create(config.appearance, max_image_id + 1, config.seed ^ 0x9e3779b97f4a7c15ull);

    OptimizerState optimizer;
    optimizer.total_iterations = config.iterations;
    optimizer.initialize(result.cloud.size());
    AppearanceOptimizer app_optimizer;
    app_optimizer.initialize(result.appearance, config.appearance_lr);

    DensifyConfig densify = config.densify;
    densify.total_iterations = config.iterations;
    if (densify.scene_extent <= 0.0) densify.scene_extent = scene_extent_from_cameras(scene);

    LossWeights weights = config.weights;
    if (weights.distortion_start_iteration == 0)
        weights.distortion_start_iteration = config.iterations / 10;
    if (weights.depth_normal_start_iteration == 0)
        weights.depth_normal_start_iteration = config.iterations / 5;

    Rng densify_rng(config.seed ^ 0xda3e39cb94b95bdbull);

    std::ofstream log_file;
    if (!config.out_dir.empty()) {
        std::filesystem::create_directories(config.out_dir);
        log_file.open(config.out_dir + "/train_log.csv");
        write_log_header(log_file);
    }

    auto checkpoint = [&](int iteration) {
        if (config.out_dir.empty()) return;
        save_cloud_ply(result.cloud, checkpoint_name(config.out_dir, iteration, "ply"));
        save_appearance(result.appearance, checkpoint_name(config.out_dir, iteration, "appw"));
    };

    for (int iteration = 1; iteration <= config.iterations; ++iteration) {
        const std::size_t cam_idx =
            static_cast<std::size_t>((iteration - 1) % static_cast<int>(scene.cameras.size()));
        const Camera& cam = scene.cameras[cam_idx];
        const ImageBuffer& ref = images[cam_idx];

        result.cloud.active_sh_degree =
            std::min(kMaxShDegree, (iteration - 1) / config.sh_warmup_interval);

        BackwardConfig bc;
        bc.weights = weights;
        bc.iteration = iteration;
        bc.normal_mode = config.normal_mode;

        FullGradients grads = compute_full_gradients(result.cloud, cam, ref,
                                                     &result.appearance, bc);
        if (!std::isfinite(grads.report.total)) {
            checkpoint(iteration);
            throw std::runtime_error("train: non-finite loss at iteration " +
                                     std::to_string(iteration));
        }

        optimizer.step(result.cloud, grads.cloud, iteration);
        if (result.appearance.variant != AppearanceVariant::kNone)
            app_optimizer.step(result.appearance, grads.appearance, cam.image_id);

        for (std::size_t i = 0; i < result.cloud.size(); ++i) {
            if (!grads.cloud.touched[i]) continue;
            result.cloud.densify_stats.grad_norm_accum[i] += norm(grads.cloud.d_position[i]);
            result.cloud.densify_stats.count[i] += 1;
        }

        if (densify.due(iteration)) {
            densify_and_prune(result.cloud, optimizer, densify, densify_rng);
        } else if (densify.maintenance_due(iteration)) {
            prune_cloud(result.cloud, optimizer, densify);
        }

        grads.report.rgb_map = ImageBuffer();
        result.log.push_back(grads.report);
        if (log_file.is_open()) write_log_row(log_file, iteration, grads.report);
        if (config.render_interval > 0 && iteration % config.render_interval == 0 &&
            !config.out_dir.empty()) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "render_%06d.ppm", iteration);
            ImageBuffer img = grads.outputs.color;
            save_ppm(img.clamp01(), config.out_dir + "/" + buf);
        }
        if (config.checkpoint_interval > 0 && iteration % config.checkpoint_interval == 0)
            checkpoint(iteration);
        if (config.verbose && iteration % 100 == 0)
            std::fprintf(stderr, "iter %6d  loss %.6f  primitives %zu\n", iteration,
                         grads.report.total, result.cloud.size());
    }
    checkpoint(config.iterations);
    return result;
}

}  // namespace csplat
