#include "csplat/loss/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "csplat/core/parallel.hpp"

namespace csplat {

namespace {

void require_same_shape(const ImageBuffer& a, const ImageBuffer& b, const char* what) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

}  // namespace

double l1_mean(const ImageBuffer& ref, const ImageBuffer& img) {
    require_same_shape(ref, img, "l1_mean");
    std::vector<double> diffs(ref.data.size());
    for (std::size_t i = 0; i < diffs.size(); ++i)
        diffs[i] = std::abs(ref.data[i] - img.data[i]);
    return pairwise_sum(diffs) / static_cast<double>(diffs.size());
}

float l1_mean_f32(const ImageBuffer& ref, const ImageBuffer& img) {
    require_same_shape(ref, img, "l1_mean_f32");
    double acc = 0.0;
    for (std::size_t i = 0; i < ref.data.size(); ++i)
        acc += std::fabs(static_cast<float>(ref.data[i]) - static_cast<float>(img.data[i]));
    return static_cast<float>(acc / static_cast<double>(ref.data.size()));
}

PhotometricResult photometric(const ImageBuffer& ref, const ImageBuffer& raw,
                              const ImageBuffer& app, double lambda_rgb) {
    require_same_shape(ref, raw, "photometric");
    require_same_shape(ref, app, "photometric");

    const SsimMaps lum = ssim_components(ref, app);
    const SsimMaps cs = ssim_components(ref, raw);

    PhotometricResult out;
    out.map = ImageBuffer(ref.width, ref.height, 1);
    const int ch = ref.channels;
    std::vector<double> l1_terms(out.map.data.size());
    std::vector<double> dssim_terms(out.map.data.size());
    for (std::size_t p = 0; p < out.map.data.size(); ++p) {
        double l1_px = 0.0, lcs_px = 0.0;
        for (int c = 0; c < ch; ++c) {
            const std::size_t i = p * static_cast<std::size_t>(ch) + static_cast<std::size_t>(c);
            l1_px += std::abs(ref.data[i] - app.data[i]);
            lcs_px += lum.l.data[i] * cs.c.data[i] * cs.s.data[i];
        }
        l1_px /= ch;
        const double dssim_px = 1.0 - lcs_px / ch;
        l1_terms[p] = l1_px;
        dssim_terms[p] = dssim_px;
        out.map.data[p] = (1.0 - lambda_rgb) * l1_px + lambda_rgb * dssim_px;
    }
    out.l1 = pairwise_sum(l1_terms) / static_cast<double>(l1_terms.size());
    out.dssim = pairwise_sum(dssim_terms) / static_cast<double>(dssim_terms.size());
    out.scalar = (1.0 - lambda_rgb) * out.l1 + lambda_rgb * out.dssim;
    return out;
}

double confidence_loss(const ImageBuffer& rgb_map, const ImageBuffer& conf_map, double beta) {
    require_same_shape(rgb_map, conf_map, "confidence_loss");
    std::vector<double> terms(rgb_map.data.size());
    for (std::size_t i = 0; i < terms.size(); ++i) {
        const double c = conf_map.data[i];
        if (c < kConfidenceMin - 1e-12 || c > kConfidenceMax + 1e-12)
            throw std::invalid_argument("confidence_loss: value outside blend clamp range");
        terms[i] = rgb_map.data[i] * c - beta * std::log(c);
    }
    return pairwise_sum(terms) / static_cast<double>(terms.size());
}

double color_variance_loss(const RaySample& sample, const Vec3& ref_px) {
    double acc = 0.0;
    for (const Contrib& c : sample.contribs) acc += c.weight * norm2(c.color - ref_px);
    return acc;
}

double normal_variance_loss(const RaySample& sample) {
    double acc = 0.0;
    for (const Contrib& c : sample.contribs) acc += c.weight * norm2(c.normal - sample.normal);
    return acc;
}

double normal_variance_fast(const RaySample& sample) { return 1.0 - norm2(sample.normal); }

double depth_distortion_ray(const RaySample& sample) {
    double wsum = 0.0, tsum = 0.0;
    for (const Contrib& c : sample.contribs) {
        wsum += c.weight;
        tsum += c.weight * c.t;
    }
    if (wsum <= 0.0) return 0.0;
    const double mean_t = tsum / wsum;
    double acc = 0.0;
    for (const Contrib& c : sample.contribs) {
        const double d = c.t - mean_t;
        acc += c.weight * d * d;
    }
    return acc;
}

GeometricLosses geometric_losses(const RenderOutputs& outputs, const Camera& cam) {
    GeometricLosses out;
    const int w = outputs.width, h = outputs.height;

    // depth-normal consistency over interior pixels with a usable normal
    const Vec3 origin = cam.center();
    std::vector<double> dn_terms;
    dn_terms.reserve(static_cast<std::size_t>(w) * h);
    for (int y = 1; y + 1 < h; ++y)
        for (int x = 1; x + 1 < w; ++x) {
            const Vec3 blended{outputs.normal.at(x, y, 0), outputs.normal.at(x, y, 1),
                               outputs.normal.at(x, y, 2)};
            const double nlen = norm(blended);
            if (nlen < 1e-6) continue;
            auto backproject = [&](int px, int py) {
                return origin + cam.pixel_ray(px, py).direction * outputs.depth.at(px, py);
            };
            const Vec3 du = (backproject(x + 1, y) - backproject(x - 1, y)) * 0.5;
            const Vec3 dv = (backproject(x, y + 1) - backproject(x, y - 1)) * 0.5;
            const Vec3 cr = cross(du, dv);
            const double crlen = norm(cr);
            if (crlen < 1e-12) continue;
            Vec3 n_depth = cr / crlen;
            if (dot(n_depth, cam.pixel_ray(x, y).direction) > 0.0) n_depth = -n_depth;
            dn_terms.push_back(1.0 - dot(blended / nlen, n_depth));
        }
    out.depth_normal =
        dn_terms.empty() ? 0.0 : pairwise_sum(dn_terms) / static_cast<double>(dn_terms.size());

    if (outputs.samples.empty())
        throw std::invalid_argument("geometric_losses: retained samples required for distortion");
    std::vector<double> dist_terms(outputs.samples.size());
    for (std::size_t p = 0; p < outputs.samples.size(); ++p)
        dist_terms[p] = depth_distortion_ray(outputs.samples[p]);
    out.distortion = pairwise_sum(dist_terms) / static_cast<double>(dist_terms.size());
    return out;
}

LossReport total_loss(const RenderOutputs& outputs, const Camera& cam, const ImageBuffer& ref,
                      const ImageBuffer& app, const LossWeights& weights, int iteration) {
    LossReport report;
    const PhotometricResult photo = photometric(ref, outputs.color, app, weights.lambda_rgb);
    report.l1 = photo.l1;
    report.dssim = photo.dssim;
    report.rgb_map = photo.map;

    if (weights.confidence_active(iteration)) {
        report.conf = confidence_loss(photo.map, outputs.confidence, weights.beta);
    } else {
        report.conf = photo.scalar;
    }

    if (outputs.samples.empty())
        throw std::invalid_argument("total_loss: retained samples required");

    if (weights.variance_enabled) {
        std::vector<double> cv(outputs.samples.size()), nv(outputs.samples.size());
        parallel_for(outputs.samples.size(), [&](std::size_t begin, std::size_t end) {
            for (std::size_t p = begin; p < end; ++p) {
                const int x = static_cast<int>(p % static_cast<std::size_t>(outputs.width));
                const int y = static_cast<int>(p / static_cast<std::size_t>(outputs.width));
                const Vec3 ref_px{ref.at(x, y, 0), ref.at(x, y, 1), ref.at(x, y, 2)};
                cv[p] = color_variance_loss(outputs.samples[p], ref_px);
                nv[p] = normal_variance_loss(outputs.samples[p]);
            }
        });
        report.color_var = pairwise_sum(cv) / static_cast<double>(cv.size());
        report.normal_var = pairwise_sum(nv) / static_cast<double>(nv.size());
    }

    const bool dn_active = weights.depth_normal_active(iteration);
    const bool dist_active = weights.distortion_active(iteration);
    if (dn_active || dist_active) {
        const GeometricLosses geo = geometric_losses(outputs, cam);
        report.depth_normal = dn_active ? geo.depth_normal : 0.0;
        report.distortion = dist_active ? geo.distortion : 0.0;
    }

    report.total = report.conf + weights.lambda_depth_normal * report.depth_normal +
                   weights.lambda_distortion * report.distortion +
                   weights.lambda_color_var * report.color_var +
                   weights.lambda_normal_var * report.normal_var;
    return report;
}

}  // namespace csplat
