#include "csplat/render/forward.hpp"

#include <algorithm>
#include <cmath>

#include "csplat/core/parallel.hpp"

namespace csplat {

namespace {

// Euclidean line distance bound: alpha < 1/255 is guaranteed once the squared
// distance from the center to the ray exceeds 2*ln(255) * s_max^2. A small
// margin keeps the reject strictly conservative.
constexpr double kCullFactor = 11.3;  // > 2*ln(255) = 11.0835

struct Candidate {
    double t;
    uint32_t index;
    double alpha;
    Vec3 point;
};

}  // namespace

MaxContribution max_contribution_point(const Gaussian& g, const Ray& r) {
    const Mat3 a = covariance(g).sigma_inv;
    const Vec3 m = g.position - r.origin;
    const Vec3 ad = a * r.direction;
    const double denom = dot(r.direction, ad);
    const double t = dot(ad, m) / denom;
    return {r.origin + r.direction * t, t, t > 0.0};
}

double alpha_3d(const Gaussian& g, const Ray& r) {
    const Mat3 a = covariance(g).sigma_inv;
    const Vec3 m = g.position - r.origin;
    const Vec3 ad = a * r.direction;
    const double denom = dot(r.direction, ad);
    const double t = dot(ad, m) / denom;
    if (t <= 0.0) return 0.0;
    const Vec3 delta = r.direction * t - m;
    const double maha = dot(delta, a * delta);
    return std::min(g.opacity() * std::exp(-0.5 * maha), kAlphaMax);
}

RenderCache RenderCache::build(const GaussianCloud& cloud) {
    RenderCache cache;
    cache.sh_degree = cloud.active_sh_degree;
    cache.entries.resize(cloud.size());
    parallel_for(cloud.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const Gaussian& g = cloud[i];
            Entry& e = cache.entries[i];
            e.position = g.position;
            e.sigma_inv = covariance(g).sigma_inv;
            e.opacity = g.opacity();
            e.confidence = g.confidence();
            const Vec3 s = g.scales();
            const double smax = std::max(s.x, std::max(s.y, s.z));
            e.cull_radius2 = kCullFactor * smax * smax;
            e.normal_axis = quat_to_rotation(g.rotation.normalized()).col(normal_axis(g));
        }
    });
    return cache;
}

namespace {

// center-relative per-image data: the ray origin is shared by every pixel of
// a pinhole camera, so m = position - origin hoists out of the pixel loop
struct RelEntry {
    Vec3 m;
    double m2;
};

void gather_candidates(const RenderCache& cache, const std::vector<RelEntry>& rel, const Ray& r,
                       std::vector<Candidate>& candidates) {
    candidates.clear();
    const std::size_t n = cache.entries.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& e = cache.entries[i];
        const Vec3& m = rel[i].m;
        // conservative reject: squared distance from the center to the ray
        // line is |m|^2 - (d.m)^2 for unit d
        const double dm = dot(r.direction, m);
        if (rel[i].m2 - dm * dm > e.cull_radius2) continue;
        const Vec3 ad = e.sigma_inv * r.direction;
        const double denom = dot(r.direction, ad);
        const double t = dot(ad, m) / denom;
        if (t <= 0.0) continue;
        const Vec3 delta = r.direction * t - m;
        const double maha = dot(delta, e.sigma_inv * delta);
        const double alpha = std::min(e.opacity * std::exp(-0.5 * maha), kAlphaMax);
        if (alpha < kAlphaCutoff) continue;
        candidates.push_back({t, static_cast<uint32_t>(i), alpha, r.origin + r.direction * t});
    }
}

std::vector<RelEntry> relative_entries(const RenderCache& cache, const Vec3& origin) {
    std::vector<RelEntry> rel(cache.entries.size());
    for (std::size_t i = 0; i < cache.entries.size(); ++i) {
        rel[i].m = cache.entries[i].position - origin;
        rel[i].m2 = norm2(rel[i].m);
    }
    return rel;
}

RaySample blend_candidates(const GaussianCloud& cloud, const RenderCache& cache, const Ray& r,
                           std::vector<Candidate>& candidates, bool keep_contribs) {
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        return a.t != b.t ? a.t < b.t : a.index < b.index;
    });

    RaySample out;
    out.confidence = 0.0;  // raw blend; clamped to the valid range at the end
    double transmittance = 1.0;
    for (const Candidate& c : candidates) {
        const auto& e = cache.entries[c.index];
        const double w = c.alpha * transmittance;
        Contrib contrib;
        contrib.index = c.index;
        contrib.alpha = c.alpha;
        contrib.weight = w;
        contrib.t = c.t;
        contrib.color = sh_eval_with_clamp(cloud[c.index].sh, r.direction, cache.sh_degree,
                                           &contrib.color_clamp_mask);
        contrib.normal = dot(e.normal_axis, r.direction) > 0.0 ? -e.normal_axis : e.normal_axis;
        contrib.confidence = e.confidence;

        out.color += contrib.color * w;
        out.normal += contrib.normal * w;
        out.depth += c.t * w;
        out.confidence += e.confidence * w;  // raw sum; clamped below
        transmittance *= 1.0 - c.alpha;
        if (keep_contribs) out.contribs.push_back(contrib);
        if (transmittance < kTransmittanceMin) break;
    }
    out.transmittance = transmittance;
    out.confidence = std::clamp(out.confidence, kConfidenceMin, kConfidenceMax);
    return out;
}

}  // namespace

RaySample render_ray_cached(const GaussianCloud& cloud, const RenderCache& cache, const Ray& r,
                            bool keep_contribs) {
    std::vector<Candidate> candidates;
    gather_candidates(cache, relative_entries(cache, r.origin), r, candidates);
    return blend_candidates(cloud, cache, r, candidates, keep_contribs);
}

RaySample render_ray(const GaussianCloud& cloud, const Ray& r) {
    return render_ray_cached(cloud, RenderCache::build(cloud), r);
}

RenderOutputs render_image(const GaussianCloud& cloud, const Camera& cam, bool retain_samples) {
    const RenderCache cache = RenderCache::build(cloud);
    RenderOutputs out;
    out.width = cam.width;
    out.height = cam.height;
    out.color = ImageBuffer(cam.width, cam.height, 3);
    out.normal = ImageBuffer(cam.width, cam.height, 3);
    out.depth = ImageBuffer(cam.width, cam.height, 1);
    out.confidence = ImageBuffer(cam.width, cam.height, 1);
    out.transmittance = ImageBuffer(cam.width, cam.height, 1);
    if (retain_samples) out.samples.resize(static_cast<std::size_t>(cam.width) * cam.height);

    const std::vector<RelEntry> rel = relative_entries(cache, cam.center());
    parallel_for(static_cast<std::size_t>(cam.width) * cam.height,
                 [&](std::size_t begin, std::size_t end) {
                     std::vector<Candidate> scratch;
                     scratch.reserve(64);
                     for (std::size_t p = begin; p < end; ++p) {
                         const int x = static_cast<int>(p % static_cast<std::size_t>(cam.width));
                         const int y = static_cast<int>(p / static_cast<std::size_t>(cam.width));
                         const Ray ray = cam.pixel_ray(x, y);
                         gather_candidates(cache, rel, ray, scratch);
                         RaySample s = blend_candidates(cloud, cache, ray, scratch,
                                                        retain_samples);
                         for (int c = 0; c < 3; ++c) {
                             out.color.at(x, y, c) = s.color[c];
                             out.normal.at(x, y, c) = s.normal[c];
                         }
                         out.depth.at(x, y) = s.depth;
                         out.confidence.at(x, y) = s.confidence;
                         out.transmittance.at(x, y) = s.transmittance;
                         if (retain_samples) out.samples[p] = std::move(s);
                     }
                 });
    return out;
}

}  // namespace csplat
