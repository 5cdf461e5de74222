#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "csplat/core/parallel.hpp"
#include "csplat/core/rng.hpp"
#include "csplat/render/forward.hpp"

using namespace csplat;

namespace {

Gaussian make_gaussian(const Vec3& pos, double opacity, const Vec3& dc_color,
                       double gamma = 0.0) {
    Gaussian g;
    g.position = pos;
    g.rotation = {1, 0, 0, 0};
    g.log_scale = {0, 0, 0};
    g.opacity_logit = logit(std::clamp(opacity, 1e-6, 1.0 - 1e-9));
    for (int c = 0; c < 3; ++c) g.sh[static_cast<std::size_t>(c)] = (dc_color[c] - 0.5) / 0.28209479177387814;
    g.gamma = gamma;
    return g;
}

GaussianCloud random_cloud(Rng& rng, int n) {
    GaussianCloud cloud;
    for (int i = 0; i < n; ++i) {
        Gaussian g;
        g.position = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(1.5, 5.0)};
        g.rotation = rng.unit_quat();
        g.log_scale = {rng.uniform(-1.5, -0.3), rng.uniform(-1.5, -0.3), rng.uniform(-2.5, -0.3)};
        g.opacity_logit = rng.uniform(-1.0, 3.0);
        for (int k = 0; k < kShCoeffCount * 3; ++k)
            g.sh[static_cast<std::size_t>(k)] = rng.uniform(-0.4, 0.4);
        g.gamma = rng.uniform(-1.0, 1.0);
        cloud.gaussians.push_back(g);
    }
    cloud.reset_stats();
    cloud.active_sh_degree = 2;
    return cloud;
}

// O(N^2) blending oracle: every weight recomputed from an explicit product.
RaySample brute_force_blend(const GaussianCloud& cloud, const Ray& ray) {
    struct Item {
        double t, alpha;
        std::size_t index;
    };
    std::vector<Item> items;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const MaxContribution mc = max_contribution_point(cloud[i], ray);
        if (!mc.in_front) continue;
        const double alpha = alpha_3d(cloud[i], ray);
        if (alpha < kAlphaCutoff) continue;
        items.push_back({mc.t, alpha, i});
    }
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
        return a.t != b.t ? a.t < b.t : a.index < b.index;
    });
    RaySample out;
    std::size_t count = items.size();
    // honor early termination exactly like the forward pass
    {
        double trans = 1.0;
        for (std::size_t i = 0; i < items.size(); ++i) {
            trans *= 1.0 - items[i].alpha;
            if (trans < kTransmittanceMin) {
                count = i + 1;
                break;
            }
        }
    }
    double conf_raw = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        double w = items[i].alpha;
        for (std::size_t j = 0; j < i; ++j) w *= 1.0 - items[j].alpha;
        const Gaussian& g = cloud[items[i].index];
        const Vec3 color = sh_eval(g.sh, ray.direction, cloud.active_sh_degree);
        out.color += color * w;
        out.normal += gaussian_normal(g, ray.direction) * w;
        out.depth += items[i].t * w;
        conf_raw += g.confidence() * w;
    }
    double trans = 1.0;
    for (std::size_t i = 0; i < count; ++i) trans *= 1.0 - items[i].alpha;
    out.transmittance = trans;
    out.confidence = std::clamp(conf_raw, kConfidenceMin, kConfidenceMax);
    return out;
}

}  // namespace

TEST_CASE("max_contribution_point isotropic cases") {
    Gaussian g = make_gaussian({1, 0, 5}, 0.5, {1, 1, 1});
    const Ray ray{{0, 0, 0}, {0, 0, 1}};
    const MaxContribution mc = max_contribution_point(g, ray);
    CHECK(mc.t == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(norm(mc.point - Vec3{0, 0, 5}) < 1e-12);
    CHECK(mc.in_front);

    Gaussian on_ray = make_gaussian({0, 0, 3}, 0.5, {1, 1, 1});
    const MaxContribution mc2 = max_contribution_point(on_ray, ray);
    CHECK(mc2.t == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(norm(mc2.point - on_ray.position) < 1e-12);
}

TEST_CASE("max_contribution_point behind the origin is flagged") {
    Gaussian g = make_gaussian({0, 0, -2}, 0.5, {1, 1, 1});
    const Ray ray{{0, 0, 0}, {0, 0, 1}};
    CHECK_FALSE(max_contribution_point(g, ray).in_front);
    CHECK(alpha_3d(g, ray) == 0.0);
}

TEST_CASE("max_contribution_point matches a golden-section oracle") {
    // anisotropic case: minimize the Mahalanobis distance along t numerically
    Gaussian g;
    g.position = {1, 1, 5};
    g.rotation = {1, 0, 0, 0};
    g.log_scale = {std::log(2.0), 0, 0};
    g.opacity_logit = 0.0;
    const Ray ray{{0, 0, 0}, {0, 0, 1}};
    const Mat3 a = covariance(g).sigma_inv;
    auto maha = [&](double t) {
        const Vec3 p = ray.origin + ray.direction * t - g.position;
        return dot(p, a * p);
    };
    double lo = 0.0, hi = 20.0;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
    for (int it = 0; it < 200; ++it) {
        if (maha(c) < maha(d)) {
            hi = d;
        } else {
            lo = c;
        }
        c = hi - gr * (hi - lo);
        d = lo + gr * (hi - lo);
    }
    const double t_oracle = (lo + hi) / 2.0;
    const MaxContribution mc = max_contribution_point(g, ray);
    CHECK(mc.t == doctest::Approx(t_oracle).epsilon(1e-8));

    // random anisotropic instances
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        Gaussian rg;
        rg.position = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(2, 6)};
        rg.rotation = rng.unit_quat();
        rg.log_scale = {rng.uniform(-1, 0.5), rng.uniform(-1, 0.5), rng.uniform(-1, 0.5)};
        const Mat3 ai = covariance(rg).sigma_inv;
        auto maha_r = [&](double t) {
            const Vec3 p = ray.origin + ray.direction * t - rg.position;
            return dot(p, ai * p);
        };
        double rlo = 0.0, rhi = 30.0;
        double rc = rhi - gr * (rhi - rlo), rd = rlo + gr * (rhi - rlo);
        for (int it = 0; it < 220; ++it) {
            if (maha_r(rc) < maha_r(rd)) {
                rhi = rd;
            } else {
                rlo = rc;
            }
            rc = rhi - gr * (rhi - rlo);
            rd = rlo + gr * (rhi - rlo);
        }
        CHECK(max_contribution_point(rg, ray).t ==
              doctest::Approx((rlo + rhi) / 2.0).epsilon(1e-8));
    }
}

TEST_CASE("alpha_3d values") {
    const Ray ray{{0, 0, 0}, {0, 0, 1}};
    // ray through the center
    CHECK(alpha_3d(make_gaussian({0, 0, 4}, 0.8, {1, 1, 1}), ray) ==
          doctest::Approx(0.8).epsilon(1e-9));
    // opacity saturating the clamp
    CHECK(alpha_3d(make_gaussian({0, 0, 4}, 1.0 - 1e-12, {1, 1, 1}), ray) ==
          doctest::Approx(kAlphaMax));
    // closest approach distance 1 with unit covariance
    const double a = alpha_3d(make_gaussian({1, 0, 4}, 0.8, {1, 1, 1}), ray);
    CHECK(a == doctest::Approx(0.8 * std::exp(-0.5)).epsilon(1e-6));
    CHECK(a == doctest::Approx(0.485225).epsilon(1e-4));
}

TEST_CASE("render_ray single and two-primitive blends") {
    GaussianCloud cloud;
    cloud.gaussians.push_back(make_gaussian({0, 0, 2}, 0.8, {1, 0, 0}));
    cloud.reset_stats();
    const Ray ray{{0, 0, 0}, {0, 0, 1}};
    RaySample s = render_ray(cloud, ray);
    CHECK(s.color.x == doctest::Approx(0.8).epsilon(1e-9));
    CHECK(s.color.y == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(s.transmittance == doctest::Approx(0.2).epsilon(1e-9));
    REQUIRE(s.contribs.size() == 1);
    CHECK(s.contribs[0].weight == doctest::Approx(0.8));

    cloud.gaussians.push_back(make_gaussian({0, 0, 4}, 0.5, {0, 1, 0}, std::log(0.5)));
    cloud.gaussians[0] = make_gaussian({0, 0, 2}, 0.5, {1, 0, 0}, std::log(2.0));
    cloud.reset_stats();
    s = render_ray(cloud, ray);
    CHECK(s.color.x == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(s.color.y == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(s.confidence == doctest::Approx(0.5 * 2.0 + 0.25 * 0.5).epsilon(1e-9));
    CHECK(s.transmittance == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("render_ray empty cloud") {
    GaussianCloud cloud;
    cloud.reset_stats();
    const RaySample s = render_ray(cloud, {{0, 0, 0}, {0, 0, 1}});
    CHECK(s.color.x == 0.0);
    CHECK(s.depth == 0.0);
    CHECK(s.confidence == doctest::Approx(kConfidenceMin));
    CHECK(s.transmittance == 1.0);
}

TEST_CASE("render_ray matches the brute-force transmittance oracle") {
    Rng rng(32);
    for (int trial = 0; trial < 40; ++trial) {
        GaussianCloud cloud = random_cloud(rng, 10);
        const Vec3 dir = normalized(Vec3{rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 1.0});
        const Ray ray{{0, 0, 0}, dir};
        const RaySample fast = render_ray(cloud, ray);
        const RaySample slow = brute_force_blend(cloud, ray);
        CHECK(norm(fast.color - slow.color) < 1e-10);
        CHECK(norm(fast.normal - slow.normal) < 1e-10);
        CHECK(fast.depth == doctest::Approx(slow.depth).epsilon(1e-10));
        CHECK(fast.confidence == doctest::Approx(slow.confidence).epsilon(1e-10));
        CHECK(fast.transmittance == doctest::Approx(slow.transmittance).epsilon(1e-10));
    }
}

TEST_CASE("weights and remaining transmittance sum to one") {
    Rng rng(33);
    for (int trial = 0; trial < 50; ++trial) {
        GaussianCloud cloud = random_cloud(rng, 12);
        const Vec3 dir = normalized(Vec3{rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), 1.0});
        const RaySample s = render_ray(cloud, {{0, 0, 0}, dir});
        double wsum = 0.0;
        double prev_t = -1.0;
        for (const Contrib& c : s.contribs) {
            wsum += c.weight;
            CHECK(c.alpha >= kAlphaCutoff);
            CHECK(c.alpha <= kAlphaMax);
            CHECK(c.weight > 0.0);
            CHECK(c.t >= prev_t);
            prev_t = c.t;
        }
        CHECK(wsum + s.transmittance == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(norm(s.normal) <= wsum + 1e-9);
        CHECK(s.confidence >= kConfidenceMin);
        CHECK(s.confidence <= kConfidenceMax);
    }
}

TEST_CASE("blending is invariant under input permutation") {
    Rng rng(34);
    GaussianCloud cloud = random_cloud(rng, 10);
    const Ray ray{{0, 0, 0}, normalized(Vec3{0.1, -0.05, 1.0})};
    const RaySample base = render_ray(cloud, ray);
    for (int perm = 0; perm < 5; ++perm) {
        GaussianCloud shuffled = cloud;
        for (std::size_t i = shuffled.size(); i > 1; --i)
            std::swap(shuffled.gaussians[i - 1],
                      shuffled.gaussians[static_cast<std::size_t>(
                          rng.uniform_int(0, static_cast<int>(i) - 1))]);
        const RaySample s = render_ray(shuffled, ray);
        CHECK(norm(s.color - base.color) < 1e-12);
        CHECK(s.depth == doctest::Approx(base.depth).epsilon(1e-12));
    }
}

TEST_CASE("confidence blend is monotone in the raw confidences") {
    Rng rng(35);
    GaussianCloud cloud = random_cloud(rng, 6);
    const Ray ray{{0, 0, 0}, {0, 0, 1}};
    RaySample s = render_ray(cloud, ray);
    if (!s.contribs.empty() && s.confidence > kConfidenceMin && s.confidence < kConfidenceMax) {
        const std::size_t target = s.contribs[0].index;
        const double before = s.confidence;
        cloud.gaussians[target].gamma += 0.05;  // raises the activated confidence
        const RaySample after = render_ray(cloud, ray);
        CHECK(after.confidence > before);
    }
}

TEST_CASE("render_image equals the sequential reference for any worker count") {
    Rng rng(36);
    GaussianCloud cloud = random_cloud(rng, 16);
    Camera cam;
    cam.fx = cam.fy = 8;
    cam.cx = cam.cy = 4;
    cam.width = cam.height = 8;

    set_worker_count(1);
    const RenderOutputs seq = render_image(cloud, cam, true);
    for (const int workers : {2, 3, 8}) {
        set_worker_count(workers);
        const RenderOutputs par = render_image(cloud, cam, true);
        for (std::size_t i = 0; i < seq.color.data.size(); ++i)
            CHECK(par.color.data[i] == seq.color.data[i]);
        for (std::size_t i = 0; i < seq.depth.data.size(); ++i) {
            CHECK(par.depth.data[i] == seq.depth.data[i]);
            CHECK(par.confidence.data[i] == seq.confidence.data[i]);
            CHECK(par.transmittance.data[i] == seq.transmittance.data[i]);
        }
    }
    set_worker_count(0);

    // one-pixel camera reduces to render_ray
    Camera tiny;
    tiny.fx = tiny.fy = 1;
    tiny.cx = tiny.cy = 0.5;
    tiny.width = tiny.height = 1;
    const RenderOutputs one = render_image(cloud, tiny, false);
    const RaySample direct = render_ray(cloud, tiny.pixel_ray(0, 0));
    CHECK(one.color.at(0, 0, 0) == direct.color.x);
    CHECK(one.depth.at(0, 0) == direct.depth);
}

TEST_CASE("depth stays within the contributing t-range on saturated rays") {
    Rng rng(37);
    for (int trial = 0; trial < 20; ++trial) {
        GaussianCloud cloud = random_cloud(rng, 8);
        for (auto& g : cloud.gaussians) g.opacity_logit = logit(0.97);  // force saturation
        const RaySample s = render_ray(cloud, {{0, 0, 0}, {0, 0, 1}});
        if (s.transmittance > kTransmittanceMin || s.contribs.empty()) continue;
        double tmin = 1e300, tmax = -1e300;
        for (const Contrib& c : s.contribs) {
            tmin = std::min(tmin, c.t);
            tmax = std::max(tmax, c.t);
        }
        CHECK(s.depth >= tmin - 1e-3);  // sum of weights is 1 - T, T <= 1e-4
        CHECK(s.depth <= tmax + 1e-9);
    }
}

TEST_CASE("contributions below the alpha cutoff are excluded") {
    GaussianCloud cloud;
    cloud.gaussians.push_back(make_gaussian({0, 0, 2}, 1.0 / 255.0 * 0.9, {1, 0, 0}));
    cloud.reset_stats();
    const RaySample s = render_ray(cloud, {{0, 0, 0}, {0, 0, 1}});
    CHECK(s.contribs.empty());
    CHECK(s.transmittance == 1.0);
}

TEST_CASE("render_image empty cloud gives black image and floor confidence") {
    GaussianCloud cloud;
    cloud.reset_stats();
    Camera cam;
    cam.fx = cam.fy = 4;
    cam.cx = cam.cy = 2;
    cam.width = cam.height = 4;
    const RenderOutputs out = render_image(cloud, cam, false);
    for (const double v : out.color.data) CHECK(v == 0.0);
    for (const double v : out.confidence.data) CHECK(v == doctest::Approx(kConfidenceMin));
    for (const double v : out.transmittance.data) CHECK(v == 1.0);
}
