#include "csplat/eval/synthetic.hpp"

#include <cmath>
#include <filesystem>
#include <limits>
#include <stdexcept>

#include "csplat/core/image_io.hpp"
#include "csplat/core/parallel.hpp"
#include "csplat/eval/metrics.hpp"
#include "csplat/mesh/mesh_io.hpp"
#include "csplat/render/sh.hpp"

namespace csplat {

namespace {

constexpr double kPlaneHalf = 0.5;
constexpr double kSphereRadius = 0.25;
const Vec3 kSphereCenterOnPlane{0.0, 0.0, kSphereRadius};
const Vec3 kSphereCenterAlone{0.0, 0.0, 0.0};
constexpr double kSphereRadiusAlone = 0.35;
constexpr double kAmbient = 0.35;

Vec3 light_direction() { return normalized(Vec3{0.35, 0.25, 0.9}); }

bool has_plane(SyntheticKind kind) { return kind != SyntheticKind::kSphere; }
bool has_sphere(SyntheticKind kind) { return kind != SyntheticKind::kPlane; }

Vec3 sphere_center(SyntheticKind kind) {
    return kind == SyntheticKind::kSphere ? kSphereCenterAlone : kSphereCenterOnPlane;
}
double sphere_radius(SyntheticKind kind) {
    return kind == SyntheticKind::kSphere ? kSphereRadiusAlone : kSphereRadius;
}

Vec3 plane_albedo(double x, double y) {
    const int checker = static_cast<int>(std::floor((x + kPlaneHalf) / 0.125)) +
                        static_cast<int>(std::floor((y + kPlaneHalf) / 0.125));
    return (checker & 1) ? Vec3{0.16, 0.30, 0.58} : Vec3{0.62, 0.26, 0.18};
}

Vec3 sphere_albedo(const Vec3& p, const Vec3& center, double radius) {
    const Vec3 d = (p - center) / radius;
    const double theta = std::acos(std::clamp(d.z, -1.0, 1.0));
    const double phi = std::atan2(d.y, d.x);
    const int checker = static_cast<int>(std::floor((phi + M_PI) / (M_PI / 4.0))) +
                        static_cast<int>(std::floor(theta / (M_PI / 4.0)));
    return (checker & 1) ? Vec3{0.22, 0.48, 0.30} : Vec3{0.58, 0.50, 0.14};
}

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    Vec3 point;
    Vec3 normal;
    Vec3 albedo;
    bool valid = false;
};

Hit cast(SyntheticKind kind, const Ray& ray) {
    Hit best;
    if (has_plane(kind) && std::abs(ray.direction.z) > 1e-12) {
        const double t = -ray.origin.z / ray.direction.z;
        if (t > 1e-9) {
            const Vec3 p = ray.origin + ray.direction * t;
            if (std::abs(p.x) <= kPlaneHalf && std::abs(p.y) <= kPlaneHalf && t < best.t) {
                best.t = t;
                best.point = p;
                best.normal = Vec3{0, 0, 1};
                best.albedo = plane_albedo(p.x, p.y);
                best.valid = true;
            }
        }
    }
    if (has_sphere(kind)) {
        const Vec3 center = sphere_center(kind);
        const double radius = sphere_radius(kind);
        const Vec3 oc = ray.origin - center;
        const double b = dot(oc, ray.direction);
        const double c = norm2(oc) - radius * radius;
        const double disc = b * b - c;
        if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            double t = -b - sq;
            if (t <= 1e-9) t = -b + sq;
            if (t > 1e-9 && t < best.t) {
                const Vec3 p = ray.origin + ray.direction * t;
                best.t = t;
                best.point = p;
                best.normal = (p - center) / radius;
                best.albedo = sphere_albedo(p, center, radius);
                best.valid = true;
            }
        }
    }
    return best;
}

Vec3 shade(const Hit& hit) {
    const double lambert = std::max(0.0, dot(hit.normal, light_direction()));
    return hit.albedo * (kAmbient + (1.0 - kAmbient) * lambert);
}

TriMesh make_gt_mesh(SyntheticKind kind) {
    TriMesh mesh;
    if (has_plane(kind)) {
        mesh.vertices.push_back({-kPlaneHalf, -kPlaneHalf, 0});
        mesh.vertices.push_back({kPlaneHalf, -kPlaneHalf, 0});
        mesh.vertices.push_back({kPlaneHalf, kPlaneHalf, 0});
        mesh.vertices.push_back({-kPlaneHalf, kPlaneHalf, 0});
        mesh.triangles.push_back({0, 1, 2});
        mesh.triangles.push_back({0, 2, 3});
    }
    if (has_sphere(kind)) {
        const Vec3 center = sphere_center(kind);
        const double radius = sphere_radius(kind);
        const int stacks = 32, sectors = 64;
        const uint32_t base = static_cast<uint32_t>(mesh.vertices.size());
        for (int i = 0; i <= stacks; ++i) {
            const double theta = M_PI * i / stacks;
            for (int j = 0; j < sectors; ++j) {
                const double phi = 2.0 * M_PI * j / sectors;
                mesh.vertices.push_back(center + Vec3{std::sin(theta) * std::cos(phi),
                                                      std::sin(theta) * std::sin(phi),
                                                      std::cos(theta)} *
                                                     radius);
            }
        }
        auto vid = [&](int i, int j) {
            return base + static_cast<uint32_t>(i * sectors + (j % sectors));
        };
        for (int i = 0; i < stacks; ++i)
            for (int j = 0; j < sectors; ++j) {
                if (i > 0) mesh.triangles.push_back({vid(i, j), vid(i + 1, j), vid(i, j + 1)});
                if (i + 1 < stacks)
                    mesh.triangles.push_back({vid(i, j + 1), vid(i + 1, j), vid(i + 1, j + 1)});
            }
    }
    return mesh;
}

}  // namespace

SyntheticKind synthetic_kind_from_string(const std::string& name) {
    if (name == "plane") return SyntheticKind::kPlane;
    if (name == "sphere") return SyntheticKind::kSphere;
    if (name == "plane+sphere") return SyntheticKind::kPlaneSphere;
    throw std::invalid_argument("unknown synthetic scene kind: " + name);
}

double synthetic_hit_depth(SyntheticKind kind, const Ray& ray) { return cast(kind, ray).t; }

SyntheticScene make_synthetic_scene(const SyntheticConfig& config) {
    if (config.n_views < 2) throw std::invalid_argument("make_synthetic_scene: n_views >= 2");
    SyntheticScene out;

    const Vec3 focus = has_sphere(config.kind) ? Vec3{0, 0, 0.15} : Vec3{0, 0, 0};
    const double ring_radius = 1.7;
    const double fov = 50.0 * M_PI / 180.0;
    const double focal = (config.resolution / 2.0) / std::tan(fov / 2.0);

    for (int i = 0; i < config.n_views; ++i) {
        const double elevation = (i % 2 == 0 ? 28.0 : 52.0) * M_PI / 180.0;
        const double azimuth = 2.0 * M_PI * i / config.n_views;
        const Vec3 eye = focus + Vec3{std::cos(azimuth) * std::cos(elevation),
                                      std::sin(azimuth) * std::cos(elevation),
                                      std::sin(elevation)} *
                                     ring_radius;
        Camera cam = Camera::look_at(eye, focus, Vec3{0, 0, 1}, focal, focal,
                                     config.resolution, config.resolution);
        cam.image_id = i;
        out.scene.cameras.push_back(cam);
    }

    Rng jitter_rng(config.seed);
    out.exposure_log.resize(static_cast<std::size_t>(config.n_views), 0.0);
    for (int i = 0; i < config.n_views; ++i)
        if (config.exposure_jitter > 0.0)
            out.exposure_log[static_cast<std::size_t>(i)] =
                jitter_rng.uniform(-config.exposure_jitter, config.exposure_jitter);

    out.images.resize(static_cast<std::size_t>(config.n_views));
    for (int v = 0; v < config.n_views; ++v) {
        const Camera& cam = out.scene.cameras[static_cast<std::size_t>(v)];
        ImageBuffer img(cam.width, cam.height, 3);
        const double exposure = std::exp(out.exposure_log[static_cast<std::size_t>(v)]);
        parallel_for(static_cast<std::size_t>(cam.width) * cam.height,
                     [&](std::size_t begin, std::size_t end) {
                         for (std::size_t p = begin; p < end; ++p) {
                             const int x = static_cast<int>(p % static_cast<std::size_t>(cam.width));
                             const int y = static_cast<int>(p / static_cast<std::size_t>(cam.width));
                             const Hit hit = cast(config.kind, cam.pixel_ray(x, y));
                             const Vec3 color = hit.valid ? shade(hit) * exposure : Vec3{0, 0, 0};
                             for (int c = 0; c < 3; ++c) img.at(x, y, c) = color[c];
                         }
                     });
        img.clamp01();
        out.images[static_cast<std::size_t>(v)] = std::move(img);
    }

    out.gt_mesh = make_gt_mesh(config.kind);

    // init cloud: noisy surface samples with Lambertian colors (SfM stand-in)
    const std::vector<Vec3> surface =
        sample_mesh_surface(out.gt_mesh, config.init_points, config.seed ^ 0x5851f42d4c957f2dull);
    Rng noise_rng(config.seed ^ 0x14057b7ef767814full);
    std::vector<Vec3> positions(surface.size());
    std::vector<Vec3> colors(surface.size());
    for (std::size_t i = 0; i < surface.size(); ++i) {
        positions[i] = surface[i] + noise_rng.normal_vec3() * config.init_noise;
        Hit fake;
        fake.point = surface[i];
        if (has_sphere(config.kind) &&
            norm(surface[i] - sphere_center(config.kind)) <
                sphere_radius(config.kind) * 1.001 &&
            (!has_plane(config.kind) || surface[i].z > 1e-6)) {
            fake.normal = normalized(surface[i] - sphere_center(config.kind));
            fake.albedo = sphere_albedo(surface[i], sphere_center(config.kind),
                                        sphere_radius(config.kind));
        } else {
            fake.normal = Vec3{0, 0, 1};
            fake.albedo = plane_albedo(surface[i].x, surface[i].y);
        }
        colors[i] = shade(fake);
    }

    out.init_cloud.gaussians.resize(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        // isotropic scale from the mean distance to the 3 nearest neighbors
        std::array<double, 3> best{1e300, 1e300, 1e300};
        for (std::size_t j = 0; j < positions.size(); ++j) {
            if (j == i) continue;
            const double d2 = norm2(positions[i] - positions[j]);
            if (d2 < best[2]) {
                best[2] = d2;
                if (best[2] < best[1]) std::swap(best[1], best[2]);
                if (best[1] < best[0]) std::swap(best[0], best[1]);
            }
        }
        const double mean_dist =
            (std::sqrt(best[0]) + std::sqrt(best[1]) + std::sqrt(best[2])) / 3.0;
        Gaussian& g = out.init_cloud.gaussians[i];
        g.position = positions[i];
        g.rotation = Quat{1, 0, 0, 0};
        const double s = std::log(std::max(mean_dist, 1e-7));
        g.log_scale = {s, s, s};
        g.opacity_logit = logit(0.1);
        for (int c = 0; c < 3; ++c) g.sh[c] = (colors[i][c] - 0.5) / 0.28209479177387814;
        g.gamma = 0.0;
    }
    out.init_cloud.reset_stats();
    out.init_cloud.active_sh_degree = 0;
    return out;
}

void save_synthetic_scene(const SyntheticScene& scene, const std::string& dir) {
    std::filesystem::create_directories(dir + "/images");
    Scene to_save = scene.scene;
    for (std::size_t i = 0; i < to_save.cameras.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "images/view_%03zu.ppm", i);
        to_save.cameras[i].image_path = buf;
        save_ppm(scene.images[i], dir + "/" + buf);
    }
    save_scene(to_save, dir + "/scene.json");
    save_mesh(scene.gt_mesh, dir + "/gt_mesh.ply", MeshFormat::kPly);
    save_cloud_ply(scene.init_cloud, dir + "/init.ply");
}

}  // namespace csplat
