#include "csplat/grad/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "csplat/train/trainer.hpp"

namespace csplat {

namespace {

BackwardConfig fd_backward_config(FdLossTerm term) {
    BackwardConfig config;
    config.iteration = 600;
    config.weights.conf_start_iteration = 500;
    // the exact-sum gradient is the one finite differences can see
    config.normal_mode = NormalVarMode::kFull;
    config.weights.confidence_enabled = false;
    config.weights.variance_enabled = false;
    config.weights.lambda_depth_normal = 0.0;
    config.weights.lambda_distortion = 0.0;
    config.weights.depth_normal_start_iteration = 0;
    config.weights.distortion_start_iteration = 0;
    switch (term) {
        case FdLossTerm::kPhotometric:
            break;
        case FdLossTerm::kConfidence:
            config.weights.confidence_enabled = true;
            break;
        case FdLossTerm::kVariance:
            config.weights.variance_enabled = true;
            break;
        case FdLossTerm::kFull: {
            const LossWeights defaults;
            config.weights = defaults;
            config.weights.depth_normal_start_iteration = 0;
            config.weights.distortion_start_iteration = 0;
            break;
        }
    }
    return config;
}

uint64_t hash_mix(uint64_t h, uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h;
}

// Structure signature: any change here means the loss crossed a
// non-differentiable boundary between the two probe points.
uint64_t structure_signature(const GaussianCloud& cloud, const Camera& cam,
                             const RenderOutputs& outputs, const ImageBuffer& ref,
                             const ImageBuffer& app) {
    uint64_t h = 1469598103934665603ull;
    for (const RaySample& s : outputs.samples) {
        h = hash_mix(h, s.contribs.size());
        for (const Contrib& c : s.contribs) {
            h = hash_mix(h, c.index);
            h = hash_mix(h, c.color_clamp_mask);
            h = hash_mix(h, c.alpha >= kAlphaMax ? 1u : 0u);
        }
    }
    for (std::size_t p = 0; p < outputs.confidence.data.size(); ++p) {
        const double c = outputs.confidence.data[p];
        h = hash_mix(h, c <= kConfidenceMin ? 1u : (c >= kConfidenceMax ? 2u : 0u));
    }
    for (std::size_t i = 0; i < app.data.size(); ++i) {
        const double d = app.data[i] - ref.data[i];
        h = hash_mix(h, d > 0.0 ? 1u : (d < 0.0 ? 2u : 0u));
    }
    for (std::size_t i = 0; i < cloud.size(); ++i)
        h = hash_mix(h, static_cast<uint64_t>(normal_axis(cloud[i])));
    // depth-normal inclusion mask
    for (int y = 1; y + 1 < outputs.height; ++y)
        for (int x = 1; x + 1 < outputs.width; ++x) {
            const Vec3 n{outputs.normal.at(x, y, 0), outputs.normal.at(x, y, 1),
                         outputs.normal.at(x, y, 2)};
            h = hash_mix(h, norm(n) < 1e-6 ? 0u : 1u);
        }
    (void)cam;
    return h;
}

struct Probe {
    double loss = 0.0;
    uint64_t signature = 0;
};

Probe evaluate_probe(const FdScene& scene, const BackwardConfig& config) {
    const RenderOutputs outputs = render_image(scene.cloud, scene.camera, true);
    ImageBuffer app;
    if (scene.appearance.variant != AppearanceVariant::kNone) {
        app = apply_appearance(scene.appearance, scene.camera.image_id, outputs.color,
                               &scene.frozen_ds32)
                  .corrected;
    } else {
        app = outputs.color;
    }
    Probe probe;
    probe.loss =
        total_loss(outputs, scene.camera, scene.reference, app, config.weights, config.iteration)
            .total;
    probe.signature =
        structure_signature(scene.cloud, scene.camera, outputs, scene.reference, app);
    return probe;
}

struct ParamRef {
    std::string cls;
    std::function<double&()> value;
    double analytic = 0.0;
};

struct ClassStats {
    double max_rel = 0.0, max_abs = 0.0;
    std::size_t checked = 0, skipped = 0;
    bool pass = true;
};

}  // namespace

FdScene make_fd_scene(uint64_t seed, int gaussians, int image_size, bool with_appearance) {
    Rng rng(seed);
    FdScene scene;

    scene.camera.fx = scene.camera.fy = image_size;
    scene.camera.cx = scene.camera.cy = image_size / 2.0;
    scene.camera.width = scene.camera.height = image_size;
    scene.camera.rotation = Mat3::identity();
    scene.camera.translation = Vec3{0, 0, 0};
    scene.camera.image_id = 0;

    scene.cloud.gaussians.resize(static_cast<std::size_t>(gaussians));
    for (auto& g : scene.cloud.gaussians) {
        g.position = {rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9), rng.uniform(2.0, 4.0)};
        g.rotation = rng.unit_quat();
        // distinct scales keep the normal axis stable under perturbation
        const double base = rng.uniform(-2.3, -1.2);
        g.log_scale = {base + rng.uniform(0.15, 0.5), base + rng.uniform(0.7, 1.1), base};
        g.opacity_logit = rng.uniform(-1.5, 2.0);
        for (int c = 0; c < 3; ++c) g.sh[c] = rng.uniform(-0.6, 0.6);
        for (int k = 3; k < kShCoeffCount * 3; ++k)
            g.sh[static_cast<std::size_t>(k)] = rng.uniform(-0.15, 0.15);
        g.gamma = rng.uniform(-0.8, 0.8);
    }
    scene.cloud.reset_stats();
    scene.cloud.active_sh_degree = kMaxShDegree;

    scene.reference = ImageBuffer(image_size, image_size, 3);
    for (double& v : scene.reference.data) v = rng.uniform(0.05, 0.95);

    if (with_appearance) {
        scene.appearance = AppearanceModel::create(AppearanceVariant::kCnn, 1, seed ^ 0xabcdef12u);
        // randomize the final conv too, so gradients reach every layer
        Rng wrng(seed ^ 0x5eed5eedu);
        for (double& w : scene.appearance.net.conv_out.weight) w = 0.05 * wrng.normal();
        for (double& b : scene.appearance.net.conv_out.bias) b = 0.02 * wrng.normal();
        for (auto& latent : scene.appearance.latents)
            for (double& v : latent) v = 0.5 * wrng.normal();
    } else {
        scene.appearance = AppearanceModel::create(AppearanceVariant::kNone, 1, 0);
    }
    // pin the detached CNN input at the base point
    const RenderOutputs base = render_image(scene.cloud, scene.camera, false);
    scene.frozen_ds32 = downsample32_reflect(base.color);
    return scene;
}

const char* to_string(FdLossTerm term) {
    switch (term) {
        case FdLossTerm::kPhotometric: return "photometric";
        case FdLossTerm::kConfidence: return "confidence";
        case FdLossTerm::kVariance: return "variance";
        case FdLossTerm::kFull: return "full";
    }
    return "?";
}

GradCheckResult run_gradcheck(const GradCheckConfig& config) {
    GradCheckResult result;
    std::map<std::pair<std::string, std::string>, ClassStats> stats;
    const int per_term =
        std::max(1, config.scenes / static_cast<int>(config.terms.size()));

    for (std::size_t term_idx = 0; term_idx < config.terms.size(); ++term_idx) {
    const FdLossTerm term = config.terms[term_idx];
    const BackwardConfig bc = fd_backward_config(term);
    for (int scene_idx = 0; scene_idx < per_term; ++scene_idx) {
        FdScene scene = make_fd_scene(config.seed +
                                          static_cast<uint64_t>(scene_idx + 1000 * term_idx) *
                                              7919u,
                                      config.gaussians, config.image_size,
                                      config.with_appearance);

        const FullGradients grads = compute_full_gradients(
            scene.cloud, scene.camera, scene.reference,
            scene.appearance.variant == AppearanceVariant::kNone ? nullptr : &scene.appearance,
            bc, scene.appearance.variant == AppearanceVariant::kNone ? nullptr
                                                                     : &scene.frozen_ds32);

        std::vector<ParamRef> params;
        for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
            Gaussian& g = scene.cloud.gaussians[i];
            for (int k = 0; k < 3; ++k)
                params.push_back({"position", [&g, k]() -> double& { return g.position[k]; },
                                  grads.cloud.d_position[i][k]});
            for (int k = 0; k < 4; ++k)
                params.push_back({"rotation", [&g, k]() -> double& { return g.rotation[k]; },
                                  grads.cloud.d_rotation[i][k]});
            for (int k = 0; k < 3; ++k)
                params.push_back({"log_scale", [&g, k]() -> double& { return g.log_scale[k]; },
                                  grads.cloud.d_log_scale[i][k]});
            params.push_back({"opacity", [&g]() -> double& { return g.opacity_logit; },
                              grads.cloud.d_opacity_logit[i]});
            for (int k = 0; k < kShCoeffCount * 3; ++k)
                params.push_back(
                    {"sh", [&g, k]() -> double& { return g.sh[static_cast<std::size_t>(k)]; },
                     grads.cloud.d_sh[i][static_cast<std::size_t>(k)]});
            params.push_back({"confidence", [&g]() -> double& { return g.gamma; },
                              grads.cloud.d_gamma[i]});
        }
        if (config.with_appearance) {
            auto& latent = scene.appearance.latents[0];
            for (int k = 0; k < kLatentDim; ++k)
                params.push_back({"app_latent",
                                  [&latent, k]() -> double& {
                                      return latent[static_cast<std::size_t>(k)];
                                  },
                                  grads.appearance.d_latent[static_cast<std::size_t>(k)]});
            Conv3x3* convs[4] = {&scene.appearance.net.conv0, &scene.appearance.net.conv1,
                                 &scene.appearance.net.conv2, &scene.appearance.net.conv_out};
            const char* names[4] = {"app_conv0", "app_conv1", "app_conv2", "app_conv_out"};
            Rng pick(config.seed ^ (0xc0ffee00u + static_cast<uint64_t>(scene_idx)));
            for (int layer = 0; layer < 4; ++layer) {
                Conv3x3* conv = convs[layer];
                const int samples = std::min<int>(config.net_weight_samples,
                                                  static_cast<int>(conv->weight.size()));
                for (int s = 0; s < samples; ++s) {
                    const std::size_t k = static_cast<std::size_t>(
                        pick.uniform_int(0, static_cast<int>(conv->weight.size()) - 1));
                    params.push_back({names[layer],
                                      [conv, k]() -> double& { return conv->weight[k]; },
                                      grads.appearance.d_conv_w[layer][k]});
                }
                for (std::size_t k = 0; k < conv->bias.size(); ++k)
                    params.push_back({std::string(names[layer]) + "_b",
                                      [conv, k]() -> double& { return conv->bias[k]; },
                                      grads.appearance.d_conv_b[layer][k]});
            }
        }

        for (ParamRef& p : params) {
            ClassStats& cs = stats[{p.cls, to_string(term)}];
            double h = config.step;
            bool measured = false;
            double fd = 0.0;
            for (int attempt = 0; attempt < 2 && !measured; ++attempt, h /= 8.0) {
                double& slot = p.value();
                const double saved = slot;
                slot = saved + h;
                const Probe plus = evaluate_probe(scene, bc);
                slot = saved - h;
                const Probe minus = evaluate_probe(scene, bc);
                slot = saved;
                if (plus.signature != minus.signature) continue;
                fd = (plus.loss - minus.loss) / (2.0 * h);
                measured = true;
            }
            if (!measured) {
                ++cs.skipped;
                continue;
            }
            ++cs.checked;
            const double abs_err = std::abs(p.analytic - fd);
            const double rel = abs_err / std::max(std::abs(fd), 1e-6);
            cs.max_rel = std::max(cs.max_rel, rel);
            cs.max_abs = std::max(cs.max_abs, abs_err);
            if (abs_err > config.abs_tol + config.rel_tol * std::max(std::abs(fd),
                                                                     std::abs(p.analytic)))
                cs.pass = false;
        }
    }
    }

    for (const auto& [key, cs] : stats) {
        FdRow row;
        row.parameter_class = key.first;
        row.loss_term = key.second;
        row.max_rel_error = cs.max_rel;
        row.max_abs_error = cs.max_abs;
        row.checked = cs.checked;
        row.skipped = cs.skipped;
        row.pass = cs.pass && cs.checked > 0;
        result.rows.push_back(row);
        result.pass = result.pass && row.pass;
    }
    return result;
}

std::string format_gradcheck_table(const GradCheckResult& result) {
    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-14s %-12s %12s %12s %8s %8s %6s\n", "parameter",
                  "loss_term", "max_rel", "max_abs", "checked", "skipped", "pass");
    out << buf;
    for (const FdRow& row : result.rows) {
        std::snprintf(buf, sizeof(buf), "%-14s %-12s %12.3e %12.3e %8zu %8zu %6s\n",
                      row.parameter_class.c_str(), row.loss_term.c_str(), row.max_rel_error,
                      row.max_abs_error, row.checked, row.skipped, row.pass ? "ok" : "FAIL");
        out << buf;
    }
    out << (result.pass ? "gradcheck: PASS\n" : "gradcheck: FAIL\n");
    return out.str();
}

}  // namespace csplat
