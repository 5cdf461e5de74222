#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "csplat/core/image_io.hpp"
#include "csplat/core/parallel.hpp"
#include "csplat/eval/metrics.hpp"
#include "csplat/eval/synthetic.hpp"
#include "csplat/grad/gradcheck.hpp"
#include "csplat/mesh/mesh_io.hpp"
#include "csplat/train/trainer.hpp"

namespace {

using namespace csplat;

int cmd_synth(const std::string& kind, int views, int res, uint64_t seed, double jitter,
              std::size_t init_points, const std::string& out_dir) {
    SyntheticConfig config;
    config.kind = synthetic_kind_from_string(kind);
    config.n_views = views;
    config.resolution = res;
    config.seed = seed;
    config.exposure_jitter = jitter;
    config.init_points = init_points;
    const SyntheticScene scene = make_synthetic_scene(config);
    save_synthetic_scene(scene, out_dir);
    std::printf("wrote %s: %d views at %dx%d, %zu init points\n", out_dir.c_str(), views, res,
                res, scene.init_cloud.size());
    return 0;
}

int cmd_train(const std::string& scene_path, const std::string& out_dir, int iters, double beta,
              bool no_confidence, bool no_var_losses, const std::string& appearance,
              uint64_t seed, const std::string& init_ply, std::size_t cap, int render_every) {
    const Scene scene = load_scene(scene_path);
    std::vector<ImageBuffer> images;
    images.reserve(scene.cameras.size());
    for (const Camera& cam : scene.cameras) {
        ImageBuffer img = load_image(scene.image_path(cam));
        images.push_back(img.clamp01());
    }

    GaussianCloud init;
    if (!init_ply.empty()) {
        init = load_cloud_ply(init_ply);
        init.active_sh_degree = 0;
    } else {
        const std::string guess =
            std::filesystem::path(scene_path).parent_path() / "init.ply";
        if (std::filesystem::exists(guess)) {
            init = load_cloud_ply(guess);
            init.active_sh_degree = 0;
        } else {
            throw std::runtime_error("no --init cloud given and no init.ply next to the scene");
        }
    }

    TrainConfig config;
    config.iterations = iters;
    config.seed = seed;
    config.appearance = appearance_variant_from_string(appearance);
    config.weights.beta = beta;
    config.weights.confidence_enabled = !no_confidence;
    config.weights.variance_enabled = !no_var_losses;
    config.densify.max_primitives = cap;
    config.out_dir = out_dir;
    config.render_interval = render_every;
    config.verbose = true;
    const TrainResult result = train(scene, images, std::move(init), config);
    std::printf("trained %d iterations, %zu primitives, final loss %.6f\n", iters,
                result.cloud.size(), result.log.empty() ? 0.0 : result.log.back().total);
    return 0;
}

int cmd_render(const std::string& cloud_path, const std::string& scene_path, int camera_index,
               const std::string& out_dir) {
    const GaussianCloud cloud = load_cloud_ply(cloud_path);
    const Scene scene = load_scene(scene_path);
    if (camera_index < 0 || static_cast<std::size_t>(camera_index) >= scene.cameras.size())
        throw std::runtime_error("camera index out of range");
    std::filesystem::create_directories(out_dir);
    const RenderOutputs outputs =
        render_image(cloud, scene.cameras[static_cast<std::size_t>(camera_index)], false);
    ImageBuffer color = outputs.color;
    save_ppm(color.clamp01(), out_dir + "/color.ppm");
    save_pfm(outputs.depth, out_dir + "/depth.pfm");
    save_pfm(outputs.confidence, out_dir + "/confidence.pfm");
    save_pfm(outputs.transmittance, out_dir + "/transmittance.pfm");
    std::printf("wrote %s/{color.ppm,depth.pfm,confidence.pfm,transmittance.pfm}\n",
                out_dir.c_str());
    return 0;
}

int cmd_mesh(const std::string& cloud_path, const std::string& out_path, int res, double iso,
             int refine, const std::string& format) {
    const GaussianCloud cloud = load_cloud_ply(cloud_path);
    const TriMesh mesh = extract_mesh(cloud, res, iso, refine);
    save_mesh(mesh, out_path, mesh_format_from_string(format));
    std::printf("wrote %s: %zu vertices, %zu triangles\n", out_path.c_str(),
                mesh.vertices.size(), mesh.triangles.size());
    return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, double tau,
             std::size_t samples, uint64_t seed, bool no_crop, const std::string& pred_images,
             const std::string& gt_images) {
    const TriMesh pred = load_mesh(pred_path);
    const TriMesh gt = load_mesh(gt_path);
    const std::vector<Vec3> pred_pts = sample_mesh_surface(pred, samples, seed);
    const std::vector<Vec3> gt_pts = sample_mesh_surface(gt, samples, seed + 1);
    MetricsReport report;
    report.tau = tau;
    report.n_samples = samples;
    report.seed = seed;
    const F1Result f1 = f1_score(pred_pts, gt_pts, tau, !no_crop);
    report.precision = f1.precision;
    report.recall = f1.recall;
    report.f1 = f1.f1;
    report.chamfer = chamfer(pred_pts, gt_pts);
    if (!pred_images.empty() && !gt_images.empty()) {
        double psnr_acc = 0.0, ssim_acc = 0.0;
        int count = 0;
        for (const auto& entry : std::filesystem::directory_iterator(pred_images)) {
            const std::string name = entry.path().filename().string();
            const std::string other = gt_images + "/" + name;
            if (!std::filesystem::exists(other)) continue;
            ImageBuffer a = load_image(entry.path().string());
            ImageBuffer b = load_image(other);
            psnr_acc += psnr(b, a);
            ssim_acc += ssim_mean(b, a);
            ++count;
        }
        if (count > 0) {
            report.psnr = psnr_acc / count;
            report.ssim = ssim_acc / count;
        }
    }
    std::cout << metrics_to_json(report) << "\n";
    return 0;
}

int cmd_gradcheck(uint64_t seed, int scenes, int gaussians, int image_size) {
    GradCheckConfig config;
    config.seed = seed;
    config.scenes = scenes;
    config.gaussians = gaussians;
    config.image_size = image_size;
    const GradCheckResult result = run_gradcheck(config);
    std::cout << format_gradcheck_table(result);
    return result.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CPU differentiable 3D gaussian splatting with confidence-weighted "
                 "optimization and iso-surface meshing"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (0 = hardware)");

    auto* synth = app.add_subcommand("synth", "generate a synthetic scene");
    std::string synth_kind = "plane+sphere", synth_out = "scene";
    int synth_views = 16, synth_res = 64;
    uint64_t synth_seed = 1;
    double synth_jitter = 0.0;
    std::size_t synth_init = 1000;
    synth->add_option("--kind", synth_kind, "plane | sphere | plane+sphere");
    synth->add_option("--views", synth_views);
    synth->add_option("--res", synth_res);
    synth->add_option("--seed", synth_seed);
    synth->add_option("--exposure-jitter", synth_jitter, "log-exposure range");
    synth->add_option("--init-points", synth_init);
    synth->add_option("--out", synth_out)->required();

    auto* train = app.add_subcommand("train", "optimize a gaussian cloud");
    std::string train_scene, train_out = "run", train_appearance = "cnn", train_init;
    int train_iters = 7000, train_render_every = 0;
    double train_beta = 0.075;
    bool train_no_conf = false, train_no_var = false;
    uint64_t train_seed = 1;
    std::size_t train_cap = 50000;
    train->add_option("--scene", train_scene)->required();
    train->add_option("--out", train_out)->required();
    train->add_option("--iters", train_iters);
    train->add_option("--beta", train_beta);
    train->add_flag("--no-confidence", train_no_conf);
    train->add_flag("--no-var-losses", train_no_var);
    train->add_option("--appearance", train_appearance, "cnn | pgsr | h3dgs | none");
    train->add_option("--seed", train_seed);
    train->add_option("--init", train_init, "initial cloud PLY");
    train->add_option("--cap", train_cap, "primitive hard cap");
    train->add_option("--render-every", train_render_every);

    auto* render = app.add_subcommand("render", "render one view of a cloud");
    std::string render_cloud, render_scene, render_out = "render";
    int render_camera = 0;
    render->add_option("--cloud", render_cloud)->required();
    render->add_option("--scene", render_scene)->required();
    render->add_option("--camera", render_camera);
    render->add_option("--out", render_out);

    auto* mesh = app.add_subcommand("mesh", "extract an iso-surface mesh");
    std::string mesh_cloud, mesh_out = "mesh.obj", mesh_fmt = "obj";
    int mesh_res = 128, mesh_refine = 10;
    double mesh_iso = 0.5;
    mesh->add_option("--cloud", mesh_cloud)->required();
    mesh->add_option("--out", mesh_out)->required();
    mesh->add_option("--res", mesh_res);
    mesh->add_option("--iso", mesh_iso);
    mesh->add_option("--refine", mesh_refine);
    mesh->add_option("--format", mesh_fmt, "obj | ply");

    auto* eval = app.add_subcommand("eval", "mesh (and optional image) metrics as JSON");
    std::string eval_pred, eval_gt, eval_pred_images, eval_gt_images;
    double eval_tau = 0.05;
    std::size_t eval_samples = 100000;
    uint64_t eval_seed = 0;
    bool eval_no_crop = false;
    eval->add_option("--pred", eval_pred)->required();
    eval->add_option("--gt", eval_gt)->required();
    eval->add_option("--tau", eval_tau);
    eval->add_option("--samples", eval_samples);
    eval->add_option("--seed", eval_seed);
    eval->add_flag("--no-crop", eval_no_crop, "disable the gt-bounds crop");
    eval->add_option("--pred-images", eval_pred_images);
    eval->add_option("--gt-images", eval_gt_images);

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    uint64_t gc_seed = 7;
    int gc_scenes = 20, gc_gaussians = 12, gc_size = 8;
    gradcheck->add_option("--seed", gc_seed);
    gradcheck->add_option("--scenes", gc_scenes);
    gradcheck->add_option("--gaussians", gc_gaussians);
    gradcheck->add_option("--size", gc_size);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    csplat::set_worker_count(threads);

    try {
        if (synth->parsed())
            return cmd_synth(synth_kind, synth_views, synth_res, synth_seed, synth_jitter,
                             synth_init, synth_out);
        if (train->parsed())
            return cmd_train(train_scene, train_out, train_iters, train_beta, train_no_conf,
                             train_no_var, train_appearance, train_seed, train_init, train_cap,
                             train_render_every);
        if (render->parsed()) return cmd_render(render_cloud, render_scene, render_camera, render_out);
        if (mesh->parsed()) return cmd_mesh(mesh_cloud, mesh_out, mesh_res, mesh_iso, mesh_refine, mesh_fmt);
        if (eval->parsed())
            return cmd_eval(eval_pred, eval_gt, eval_tau, eval_samples, eval_seed, eval_no_crop,
                            eval_pred_images, eval_gt_images);
        if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, gc_scenes, gc_gaussians, gc_size);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
