#include "csplat/grad/backward.hpp"

#include <cmath>
#include <stdexcept>

#include "csplat/core/parallel.hpp"

namespace csplat {

void GradientBuffer::resize(std::size_t n) {
    d_position.assign(n, Vec3{});
    d_rotation.assign(n, Quat{0, 0, 0, 0});
    d_log_scale.assign(n, Vec3{});
    d_opacity_logit.assign(n, 0.0);
    d_sh.assign(n, std::array<double, kShCoeffCount * 3>{});
    d_gamma.assign(n, 0.0);
    touched.assign(n, 0);
}

void GradientBuffer::accumulate(const GradientBuffer& other) {
    for (std::size_t i = 0; i < size(); ++i) {
        d_position[i] += other.d_position[i];
        for (int j = 0; j < 4; ++j) d_rotation[i][j] += other.d_rotation[i][j];
        d_log_scale[i] += other.d_log_scale[i];
        d_opacity_logit[i] += other.d_opacity_logit[i];
        for (std::size_t k = 0; k < d_sh[i].size(); ++k) d_sh[i][k] += other.d_sh[i][k];
        d_gamma[i] += other.d_gamma[i];
        touched[i] |= other.touched[i];
    }
}

void GradientBuffer::check_finite() const {
    for (std::size_t i = 0; i < size(); ++i) {
        bool ok = std::isfinite(d_position[i].x) && std::isfinite(d_position[i].y) &&
                  std::isfinite(d_position[i].z) && std::isfinite(d_opacity_logit[i]) &&
                  std::isfinite(d_gamma[i]);
        for (int j = 0; j < 4 && ok; ++j) ok = std::isfinite(d_rotation[i][j]);
        for (int j = 0; j < 3 && ok; ++j) ok = std::isfinite(d_log_scale[i][j]);
        for (std::size_t k = 0; k < d_sh[i].size() && ok; ++k) ok = std::isfinite(d_sh[i][k]);
        if (!ok)
            throw std::runtime_error("non-finite gradient for primitive " + std::to_string(i));
    }
}

std::vector<ContribGrad> backward_blend(const RaySample& sample, const BlendUpstream& up) {
    const std::size_t n = sample.contribs.size();
    std::vector<ContribGrad> grads(n);
    if (n == 0) return grads;

    // forward totals, recomputed in forward order
    Vec3 total_color, total_normal;
    double total_depth = 0.0, total_conf = 0.0;
    for (const Contrib& c : sample.contribs) {
        total_color += c.color * c.weight;
        total_normal += c.normal * c.weight;
        total_depth += c.t * c.weight;
        total_conf += c.confidence * c.weight;
    }

    Vec3 seen_color, seen_normal;
    double seen_depth = 0.0, seen_conf = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Contrib& c = sample.contribs[i];
        const double trans = c.weight / c.alpha;  // transmittance in front of i
        seen_color += c.color * c.weight;
        seen_normal += c.normal * c.weight;
        seen_depth += c.t * c.weight;
        seen_conf += c.confidence * c.weight;
        const Vec3 suff_color = total_color - seen_color;
        const Vec3 suff_normal = total_normal - seen_normal;
        const double suff_depth = total_depth - seen_depth;
        const double suff_conf = total_conf - seen_conf;
        const double inv1ma = 1.0 / (1.0 - c.alpha);

        ContribGrad& g = grads[i];
        g.d_color = up.d_color * c.weight;
        g.d_normal = up.d_normal * c.weight;
        g.d_t = up.d_depth * c.weight;
        g.d_confidence = up.d_confidence * c.weight;
        g.d_alpha = dot(up.d_color, c.color * trans - suff_color * inv1ma) +
                    dot(up.d_normal, c.normal * trans - suff_normal * inv1ma) +
                    up.d_depth * (c.t * trans - suff_depth * inv1ma) +
                    up.d_confidence * (c.confidence * trans - suff_conf * inv1ma);
    }
    return grads;
}

void backward_color_var(const RaySample& sample, const Vec3& ref_px, double scale,
                        std::vector<ContribGrad>& grads) {
    const std::size_t n = sample.contribs.size();
    double total = 0.0;
    for (const Contrib& c : sample.contribs) total += c.weight * norm2(c.color - ref_px);
    double seen = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Contrib& c = sample.contribs[i];
        const double v = norm2(c.color - ref_px);
        const double trans = c.weight / c.alpha;
        seen += c.weight * v;
        grads[i].d_color += (c.color - ref_px) * (2.0 * scale * c.weight);
        grads[i].d_alpha += scale * (v * trans - (total - seen) / (1.0 - c.alpha));
    }
}

void backward_normal_var(const RaySample& sample, NormalVarMode mode, double scale,
                         std::vector<ContribGrad>& grads) {
    const std::size_t n = sample.contribs.size();
    if (n == 0) return;
    Vec3 blended;
    double wsum = 0.0;
    for (const Contrib& c : sample.contribs) {
        blended += c.normal * c.weight;
        wsum += c.weight;
    }
    double total = 0.0;
    for (const Contrib& c : sample.contribs) total += c.weight * norm2(c.normal - blended);

    Vec3 seen_n;
    double seen = 0.0;
    const double residual = 1.0 - wsum;  // 0 on saturated rays
    Vec3 seen_wn;
    Vec3 total_wn = blended;
    for (std::size_t i = 0; i < n; ++i) {
        const Contrib& c = sample.contribs[i];
        const double v = norm2(c.normal - blended);
        const double trans = c.weight / c.alpha;
        seen += c.weight * v;
        seen_wn += c.normal * c.weight;
        grads[i].d_normal += (c.normal - blended) * (2.0 * scale * c.weight);
        grads[i].d_alpha += scale * (v * trans - (total - seen) / (1.0 - c.alpha));
        if (mode == NormalVarMode::kFull) {
            // dependence of the blended normal on n_i and alpha_i
            grads[i].d_normal -= blended * (2.0 * scale * c.weight * residual);
            const Vec3 dblend_dalpha =
                c.normal * trans - (total_wn - seen_wn) * (1.0 / (1.0 - c.alpha));
            grads[i].d_alpha -= 2.0 * scale * residual * dot(blended, dblend_dalpha);
        }
    }
    (void)seen_n;
}

void backward_distortion(const RaySample& sample, double scale, std::vector<ContribGrad>& grads) {
    const std::size_t n = sample.contribs.size();
    if (n == 0) return;
    double wsum = 0.0, tsum = 0.0;
    for (const Contrib& c : sample.contribs) {
        wsum += c.weight;
        tsum += c.weight * c.t;
    }
    if (wsum <= 0.0) return;
    const double mean_t = tsum / wsum;
    double total = 0.0;
    for (const Contrib& c : sample.contribs) {
        const double d = c.t - mean_t;
        total += c.weight * d * d;
    }
    // Σ w_i (t_i − t̄) = 0, so the t̄ chains cancel and only the direct terms
    // survive for both d_t and d_alpha.
    double seen = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Contrib& c = sample.contribs[i];
        const double d = c.t - mean_t;
        const double v = d * d;
        const double trans = c.weight / c.alpha;
        seen += c.weight * v;
        grads[i].d_t += scale * 2.0 * c.weight * d;
        grads[i].d_alpha += scale * (v * trans - (total - seen) / (1.0 - c.alpha));
    }
}

ImageBuffer backward_confidence_map(const ImageBuffer& rgb_map, const ImageBuffer& conf_map,
                                    double beta) {
    if (!rgb_map.same_shape(conf_map))
        throw std::invalid_argument("backward_confidence_map: shape mismatch");
    ImageBuffer out(rgb_map.width, rgb_map.height, 1);
    const double inv_n = 1.0 / static_cast<double>(rgb_map.data.size());
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double c = conf_map.data[i];
        if (c <= kConfidenceMin || c >= kConfidenceMax) {
            out.data[i] = 0.0;  // clamped: subgradient 0 at the bounds
        } else {
            out.data[i] = (rgb_map.data[i] - beta / c) * inv_n;
        }
    }
    return out;
}

namespace {

// Recomputes the forward geometry intermediates of one (gaussian, ray) pair
// and exposes the alpha / depth parameter chains.
struct GeomChain {
    Mat3 a;  // Σ^{-1}
    Mat3 rot;
    std::array<Mat3, 4> d_rot;
    Vec3 inv_s2;
    Vec3 m;   // μ − origin
    Vec3 ad;  // A d
    Vec3 d;
    double denom = 0.0;
    double tstar = 0.0;
    Vec3 delta;  // x* − μ
    double g_exp = 0.0;
    double opacity = 0.0;
    bool alpha_clamped = false;

    static GeomChain build(const Gaussian& g, const Ray& r) {
        GeomChain ch;
        const RotationJacobian rj = rotation_with_jacobian(g.rotation);
        ch.rot = rj.rotation;
        ch.d_rot = rj.d_rotation;
        const Vec3 s = g.scales();
        ch.inv_s2 = {1.0 / (s.x * s.x), 1.0 / (s.y * s.y), 1.0 / (s.z * s.z)};
        ch.a = Mat3::zero();
        for (int k = 0; k < 3; ++k) ch.a += outer(ch.rot.col(k), ch.rot.col(k)) * ch.inv_s2[k];
        ch.d = r.direction;
        ch.m = g.position - r.origin;
        ch.ad = ch.a * ch.d;
        ch.denom = dot(ch.d, ch.ad);
        ch.tstar = dot(ch.ad, ch.m) / ch.denom;
        ch.delta = ch.d * ch.tstar - ch.m;
        const double maha = dot(ch.delta, ch.a * ch.delta);
        ch.g_exp = std::exp(-0.5 * maha);
        ch.opacity = g.opacity();
        ch.alpha_clamped = ch.opacity * ch.g_exp > kAlphaMax;
        return ch;
    }

    void apply(double d_alpha, double d_t, GeomGrads& out) const {
        if (d_alpha != 0.0 && !alpha_clamped) {
            const double alpha = opacity * g_exp;
            out.d_opacity_logit += d_alpha * g_exp * opacity * (1.0 - opacity);
            // dα/dμ = α A δ  (envelope: the Mahalanobis form is stationary at t*)
            const Vec3 adelta = a * delta;
            out.d_position += adelta * (d_alpha * alpha);
            const double common = -0.5 * alpha * d_alpha;  // dα/dF factor
            const Vec3 rt_delta{dot(rot.col(0), delta), dot(rot.col(1), delta),
                                dot(rot.col(2), delta)};
            for (int k = 0; k < 3; ++k) {
                // ∂A/∂s_k = −2 exp(−2 s_k) r_k r_kᵀ
                const double df = -2.0 * inv_s2[k] * rt_delta[k] * rt_delta[k];
                out.d_log_scale[k] += common * df;
            }
            const Vec3 dw = cwise_mul(inv_s2, rt_delta);
            for (int j = 0; j < 4; ++j) {
                const Vec3 drt_delta = transpose(d_rot[j]) * delta;
                out.d_rotation[j] += common * 2.0 * dot(drt_delta, dw);
            }
        }
        if (d_t != 0.0) {
            out.d_position += ad * (d_t / denom);
            const Vec3 rt_d{dot(rot.col(0), d), dot(rot.col(1), d), dot(rot.col(2), d)};
            const Vec3 rt_m{dot(rot.col(0), m), dot(rot.col(1), m), dot(rot.col(2), m)};
            for (int k = 0; k < 3; ++k) {
                const double dvm = -2.0 * inv_s2[k] * rt_d[k] * rt_m[k];
                const double dvd = -2.0 * inv_s2[k] * rt_d[k] * rt_d[k];
                out.d_log_scale[k] += d_t * (dvm - tstar * dvd) / denom;
            }
            const Vec3 dw_m = cwise_mul(inv_s2, rt_m);
            const Vec3 dw_d = cwise_mul(inv_s2, rt_d);
            for (int j = 0; j < 4; ++j) {
                const Vec3 drt_d = transpose(d_rot[j]) * d;
                const Vec3 drt_m = transpose(d_rot[j]) * m;
                const double dvm = dot(drt_d, dw_m) + dot(drt_m, dw_d);
                const double dvd = 2.0 * dot(drt_d, dw_d);
                out.d_rotation[j] += d_t * (dvm - tstar * dvd) / denom;
            }
        }
    }

    // Chains a gradient w.r.t. the (signed) primitive normal into rotation.
    void apply_normal(const Vec3& d_normal, int axis, double sign, GeomGrads& out) const {
        for (int j = 0; j < 4; ++j)
            out.d_rotation[j] += sign * dot(d_normal, d_rot[j].col(axis));
    }
};

}  // namespace

GeomGrads backward_alpha_geom(const Gaussian& g, const Ray& r, double d_alpha, double d_t) {
    GeomGrads out;
    GeomChain::build(g, r).apply(d_alpha, d_t, out);
    return out;
}

ImageGradients loss_image_backward(const RenderOutputs& outputs, const Camera& cam,
                                   const ImageBuffer& ref, const ImageBuffer& app,
                                   const BackwardConfig& config) {
    const LossWeights& w = config.weights;
    ImageGradients out;
    out.report = total_loss(outputs, cam, ref, app, w, config.iteration);

    const int width = ref.width, height = ref.height, ch = ref.channels;
    const std::size_t npx = static_cast<std::size_t>(width) * height;
    const double inv_npx = 1.0 / static_cast<double>(npx);
    const bool conf_active = w.confidence_active(config.iteration);

    // photometric weight per pixel: Ĉ/N once the confidence loss is active
    ImageBuffer u(width, height, 1);
    for (std::size_t p = 0; p < npx; ++p)
        u.data[p] = conf_active ? outputs.confidence.data[p] * inv_npx : inv_npx;

    // L1 part (flows into the appearance-corrected image)
    out.d_app = ImageBuffer(width, height, ch);
    ImageBuffer ssim_weight(width, height, ch);
    const double l1_scale = (1.0 - w.lambda_rgb) / ch;
    const double lcs_scale = -w.lambda_rgb / ch;  // map holds λ(1 − lcs)
    for (std::size_t p = 0; p < npx; ++p)
        for (int c = 0; c < ch; ++c) {
            const std::size_t i = p * static_cast<std::size_t>(ch) + static_cast<std::size_t>(c);
            const double diff = app.data[i] - ref.data[i];
            const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
            out.d_app.data[i] = u.data[p] * l1_scale * sgn;
            ssim_weight.data[i] = u.data[p] * lcs_scale;
        }

    const DecoupledSsimGrads sg = decoupled_ssim_backward(ref, outputs.color, app, ssim_weight);
    out.d_raw = sg.d_raw;
    for (std::size_t i = 0; i < out.d_app.data.size(); ++i) out.d_app.data[i] += sg.d_app.data[i];

    out.d_conf = conf_active
                     ? backward_confidence_map(out.report.rgb_map, outputs.confidence, w.beta)
                     : ImageBuffer(width, height, 1);

    out.d_normal = ImageBuffer(width, height, 3);
    out.d_depth = ImageBuffer(width, height, 1);
    if (w.depth_normal_active(config.iteration) && w.lambda_depth_normal > 0.0) {
        const Vec3 origin = cam.center();
        // first pass counts the included pixels (must match the forward mean)
        std::size_t included = 0;
        auto usable = [&](int x, int y, Vec3* blended, Vec3* n_depth, Vec3* du, Vec3* dv,
                          double* crlen) {
            *blended = Vec3{outputs.normal.at(x, y, 0), outputs.normal.at(x, y, 1),
                            outputs.normal.at(x, y, 2)};
            if (norm(*blended) < 1e-6) return false;
            auto backproject = [&](int px, int py) {
                return origin + cam.pixel_ray(px, py).direction * outputs.depth.at(px, py);
            };
            *du = (backproject(x + 1, y) - backproject(x - 1, y)) * 0.5;
            *dv = (backproject(x, y + 1) - backproject(x, y - 1)) * 0.5;
            const Vec3 cr = cross(*du, *dv);
            *crlen = norm(cr);
            if (*crlen < 1e-12) return false;
            *n_depth = cr / *crlen;
            if (dot(*n_depth, cam.pixel_ray(x, y).direction) > 0.0) *n_depth = -*n_depth;
            return true;
        };
        Vec3 blended, n_depth, du, dv;
        double crlen;
        for (int y = 1; y + 1 < height; ++y)
            for (int x = 1; x + 1 < width; ++x)
                if (usable(x, y, &blended, &n_depth, &du, &dv, &crlen)) ++included;
        if (included > 0) {
            const double scale = w.lambda_depth_normal / static_cast<double>(included);
            for (int y = 1; y + 1 < height; ++y)
                for (int x = 1; x + 1 < width; ++x) {
                    if (!usable(x, y, &blended, &n_depth, &du, &dv, &crlen)) continue;
                    const double nlen = norm(blended);
                    const Vec3 nhat = blended / nlen;
                    // d(1 − n̂·m)/dN = −(m − n̂(n̂·m))/‖N‖
                    const Vec3 dN = (n_depth - nhat * dot(nhat, n_depth)) * (-scale / nlen);
                    for (int c = 0; c < 3; ++c) out.d_normal.at(x, y, c) += dN[c];
                    // d/dm = −n̂; m = ±cr/‖cr‖ with the sign fixed by the view test
                    const double sign = dot(cross(du, dv), n_depth) > 0.0 ? 1.0 : -1.0;
                    const Vec3 grad_m = nhat * (-scale);
                    const Vec3 grad_cr =
                        (grad_m - n_depth * dot(n_depth, grad_m)) * (sign / crlen);
                    const Vec3 grad_du = cross(dv, grad_cr);
                    const Vec3 grad_dv = cross(grad_cr, du);
                    out.d_depth.at(x + 1, y) +=
                        0.5 * dot(grad_du, cam.pixel_ray(x + 1, y).direction);
                    out.d_depth.at(x - 1, y) -=
                        0.5 * dot(grad_du, cam.pixel_ray(x - 1, y).direction);
                    out.d_depth.at(x, y + 1) +=
                        0.5 * dot(grad_dv, cam.pixel_ray(x, y + 1).direction);
                    out.d_depth.at(x, y - 1) -=
                        0.5 * dot(grad_dv, cam.pixel_ray(x, y - 1).direction);
                }
        }
    }
    return out;
}

namespace {

struct ContribRecord {
    uint32_t index;
    Vec3 d_position;
    Quat d_rotation{0, 0, 0, 0};
    Vec3 d_log_scale;
    double d_opacity_logit = 0.0;
    double d_gamma = 0.0;
    Vec3 d_color;  // expanded to SH coefficients at accumulation time
};

struct PixelRecords {
    std::vector<ContribRecord> contribs;
    std::array<double, kShCoeffCount> basis{};
};

}  // namespace

GradientBuffer render_backward(const GaussianCloud& cloud, const Camera& cam,
                               const RenderOutputs& outputs, const ImageBuffer& ref,
                               const ImageBuffer& d_raw, const ImageBuffer& d_conf,
                               const ImageBuffer& d_normal, const ImageBuffer& d_depth,
                               const BackwardConfig& config) {
    if (outputs.samples.empty())
        throw std::invalid_argument("render_backward: retained samples required");
    const LossWeights& w = config.weights;
    const int width = outputs.width, height = outputs.height;
    const std::size_t npx = static_cast<std::size_t>(width) * height;
    const double inv_npx = 1.0 / static_cast<double>(npx);

    const double cv_scale = w.variance_enabled ? w.lambda_color_var * inv_npx : 0.0;
    const double nv_scale = w.variance_enabled ? w.lambda_normal_var * inv_npx : 0.0;
    const double dist_scale = (w.distortion_active(config.iteration) && w.lambda_distortion > 0.0)
                                  ? w.lambda_distortion * inv_npx
                                  : 0.0;

    std::vector<PixelRecords> records(npx);
    parallel_for(npx, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            const RaySample& sample = outputs.samples[p];
            if (sample.contribs.empty()) continue;
            const int x = static_cast<int>(p % static_cast<std::size_t>(width));
            const int y = static_cast<int>(p / static_cast<std::size_t>(width));
            const Ray ray = cam.pixel_ray(x, y);

            BlendUpstream up;
            up.d_color = {d_raw.at(x, y, 0), d_raw.at(x, y, 1), d_raw.at(x, y, 2)};
            up.d_normal = {d_normal.at(x, y, 0), d_normal.at(x, y, 1), d_normal.at(x, y, 2)};
            up.d_depth = d_depth.at(x, y);
            up.d_confidence = d_conf.at(x, y);

            std::vector<ContribGrad> grads = backward_blend(sample, up);
            const Vec3 ref_px{ref.at(x, y, 0), ref.at(x, y, 1), ref.at(x, y, 2)};
            if (cv_scale != 0.0) backward_color_var(sample, ref_px, cv_scale, grads);
            if (nv_scale != 0.0)
                backward_normal_var(sample, config.normal_mode, nv_scale, grads);
            if (dist_scale != 0.0) backward_distortion(sample, dist_scale, grads);

            PixelRecords& rec = records[p];
            rec.basis = sh_basis(ray.direction, cloud.active_sh_degree);
            rec.contribs.resize(sample.contribs.size());
            for (std::size_t i = 0; i < sample.contribs.size(); ++i) {
                const Contrib& c = sample.contribs[i];
                ContribRecord& r = rec.contribs[i];
                r.index = c.index;
                for (int channel = 0; channel < 3; ++channel)
                    r.d_color[channel] =
                        (c.color_clamp_mask & (1u << channel)) ? 0.0 : grads[i].d_color[channel];
                r.d_gamma = c.confidence * grads[i].d_confidence;

                const Gaussian& g = cloud[c.index];
                const GeomChain chain = GeomChain::build(g, ray);
                GeomGrads geom;
                chain.apply(grads[i].d_alpha, grads[i].d_t, geom);
                const int axis = normal_axis(g);
                const Vec3 axis_col = chain.rot.col(axis);
                const double sign = dot(c.normal, axis_col) > 0.0 ? 1.0 : -1.0;
                chain.apply_normal(grads[i].d_normal, axis, sign, geom);
                r.d_position = geom.d_position;
                r.d_rotation = geom.d_rotation;
                r.d_log_scale = geom.d_log_scale;
                r.d_opacity_logit = geom.d_opacity_logit;
            }
        }
    });

    // fixed-order accumulation: results do not depend on the worker count
    GradientBuffer buffer;
    buffer.resize(cloud.size());
    const int sh_count = sh_coeffs_for_degree(cloud.active_sh_degree);
    for (std::size_t p = 0; p < npx; ++p) {
        const PixelRecords& rec = records[p];
        for (const ContribRecord& r : rec.contribs) {
            const std::size_t i = r.index;
            buffer.d_position[i] += r.d_position;
            for (int j = 0; j < 4; ++j) buffer.d_rotation[i][j] += r.d_rotation[j];
            buffer.d_log_scale[i] += r.d_log_scale;
            buffer.d_opacity_logit[i] += r.d_opacity_logit;
            buffer.d_gamma[i] += r.d_gamma;
            for (int k = 0; k < sh_count; ++k)
                for (int c = 0; c < 3; ++c)
                    buffer.d_sh[i][static_cast<std::size_t>(k * 3 + c)] +=
                        rec.basis[static_cast<std::size_t>(k)] * r.d_color[c];
            buffer.touched[i] = 1;
        }
    }
    return buffer;
}

}  // namespace csplat
