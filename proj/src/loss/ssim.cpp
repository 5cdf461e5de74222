#include "csplat/loss/ssim.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "csplat/core/parallel.hpp"

namespace csplat {

namespace {

constexpr int kWin = 11;
constexpr int kHalf = kWin / 2;
constexpr double kSigma = 1.5;

const std::array<double, kWin>& window() {
    static const std::array<double, kWin> w = [] {
        std::array<double, kWin> out{};
        double sum = 0.0;
        for (int i = 0; i < kWin; ++i) {
            const double d = i - kHalf;
            out[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
            sum += out[static_cast<std::size_t>(i)];
        }
        for (auto& v : out) v /= sum;
        return out;
    }();
    return w;
}

void require_same_shape(const ImageBuffer& a, const ImageBuffer& b, const char* what) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

// Horizontal then vertical pass; reflection handled per axis by index folding.
ImageBuffer blur_rows(const ImageBuffer& img) {
    const auto& w = window();
    ImageBuffer out(img.width, img.height, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double s = 0.0;
                for (int k = -kHalf; k <= kHalf; ++k)
                    s += w[static_cast<std::size_t>(k + kHalf)] *
                         img.at(reflect_index(x + k, img.width), y, c);
                out.at(x, y, c) = s;
            }
    return out;
}

ImageBuffer blur_cols(const ImageBuffer& img) {
    const auto& w = window();
    ImageBuffer out(img.width, img.height, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double s = 0.0;
                for (int k = -kHalf; k <= kHalf; ++k)
                    s += w[static_cast<std::size_t>(k + kHalf)] *
                         img.at(x, reflect_index(y + k, img.height), c);
                out.at(x, y, c) = s;
            }
    return out;
}

ImageBuffer blur_rows_adjoint(const ImageBuffer& coef) {
    const auto& w = window();
    ImageBuffer out(coef.width, coef.height, coef.channels);
    for (int y = 0; y < coef.height; ++y)
        for (int x = 0; x < coef.width; ++x)
            for (int c = 0; c < coef.channels; ++c) {
                const double v = coef.at(x, y, c);
                for (int k = -kHalf; k <= kHalf; ++k)
                    out.at(reflect_index(x + k, coef.width), y, c) +=
                        w[static_cast<std::size_t>(k + kHalf)] * v;
            }
    return out;
}

ImageBuffer blur_cols_adjoint(const ImageBuffer& coef) {
    const auto& w = window();
    ImageBuffer out(coef.width, coef.height, coef.channels);
    for (int y = 0; y < coef.height; ++y)
        for (int x = 0; x < coef.width; ++x)
            for (int c = 0; c < coef.channels; ++c) {
                const double v = coef.at(x, y, c);
                for (int k = -kHalf; k <= kHalf; ++k)
                    out.at(x, reflect_index(y + k, coef.height), c) +=
                        w[static_cast<std::size_t>(k + kHalf)] * v;
            }
    return out;
}

}  // namespace

ImageBuffer blur11(const ImageBuffer& img) { return blur_cols(blur_rows(img)); }

ImageBuffer blur11_adjoint(const ImageBuffer& coef) {
    return blur_rows_adjoint(blur_cols_adjoint(coef));
}

SsimStats ssim_stats(const ImageBuffer& x, const ImageBuffer& y) {
    require_same_shape(x, y, "ssim_stats");
    SsimStats st;
    st.mu_x = blur11(x);
    st.mu_y = blur11(y);
    ImageBuffer xx = x, yy = y, xy = x;
    for (std::size_t i = 0; i < xx.data.size(); ++i) {
        xx.data[i] = x.data[i] * x.data[i];
        yy.data[i] = y.data[i] * y.data[i];
        xy.data[i] = x.data[i] * y.data[i];
    }
    st.var_x = blur11(xx);
    st.var_y = blur11(yy);
    st.cov = blur11(xy);
    for (std::size_t i = 0; i < st.var_x.data.size(); ++i) {
        st.var_x.data[i] = std::max(0.0, st.var_x.data[i] - st.mu_x.data[i] * st.mu_x.data[i]);
        st.var_y.data[i] = std::max(0.0, st.var_y.data[i] - st.mu_y.data[i] * st.mu_y.data[i]);
        st.cov.data[i] -= st.mu_x.data[i] * st.mu_y.data[i];
    }
    return st;
}

SsimMaps ssim_components_from_stats(const SsimStats& st) {
    SsimMaps maps;
    maps.l = ImageBuffer(st.mu_x.width, st.mu_x.height, st.mu_x.channels);
    maps.c = maps.l;
    maps.s = maps.l;
    for (std::size_t i = 0; i < maps.l.data.size(); ++i) {
        const double mx = st.mu_x.data[i], my = st.mu_y.data[i];
        const double vx = st.var_x.data[i], vy = st.var_y.data[i];
        const double sx = std::sqrt(vx), sy = std::sqrt(vy);
        maps.l.data[i] = (2.0 * mx * my + kSsimC1) / (mx * mx + my * my + kSsimC1);
        maps.c.data[i] = (2.0 * sx * sy + kSsimC2) / (vx + vy + kSsimC2);
        maps.s.data[i] = (st.cov.data[i] + kSsimC3) / (sx * sy + kSsimC3);
    }
    return maps;
}

SsimMaps ssim_components(const ImageBuffer& ref, const ImageBuffer& img) {
    return ssim_components_from_stats(ssim_stats(ref, img));
}

double ssim_mean(const ImageBuffer& ref, const ImageBuffer& img) {
    const SsimMaps maps = ssim_components(ref, img);
    std::vector<double> prods(maps.l.data.size());
    for (std::size_t i = 0; i < prods.size(); ++i)
        prods[i] = maps.l.data[i] * maps.c.data[i] * maps.s.data[i];
    return pairwise_sum(prods) / static_cast<double>(prods.size());
}

float ssim_mean_f32(const ImageBuffer& ref, const ImageBuffer& img) {
    require_same_shape(ref, img, "ssim_mean_f32");
    const auto& w = window();
    std::array<float, kWin> wf{};
    for (int i = 0; i < kWin; ++i) wf[static_cast<std::size_t>(i)] = static_cast<float>(w[static_cast<std::size_t>(i)]);
    const int width = ref.width, height = ref.height, channels = ref.channels;
    auto blur = [&](const std::vector<float>& in) {
        std::vector<float> mid(in.size()), out(in.size());
        auto at = [&](const std::vector<float>& v, int x, int y, int c) {
            return v[(static_cast<std::size_t>(y) * width + x) * channels + c];
        };
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                for (int c = 0; c < channels; ++c) {
                    float s = 0.f;
                    for (int k = -kHalf; k <= kHalf; ++k)
                        s += wf[static_cast<std::size_t>(k + kHalf)] * at(in, reflect_index(x + k, width), y, c);
                    mid[(static_cast<std::size_t>(y) * width + x) * channels + c] = s;
                }
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                for (int c = 0; c < channels; ++c) {
                    float s = 0.f;
                    for (int k = -kHalf; k <= kHalf; ++k)
                        s += wf[static_cast<std::size_t>(k + kHalf)] * at(mid, x, reflect_index(y + k, height), c);
                    out[(static_cast<std::size_t>(y) * width + x) * channels + c] = s;
                }
        return out;
    };
    const std::size_t n = ref.data.size();
    std::vector<float> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = static_cast<float>(ref.data[i]);
        y[i] = static_cast<float>(img.data[i]);
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto mx = blur(x), my = blur(y), mxx = blur(xx), myy = blur(yy), mxy = blur(xy);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const float vx = std::max(0.f, mxx[i] - mx[i] * mx[i]);
        const float vy = std::max(0.f, myy[i] - my[i] * my[i]);
        const float cv = mxy[i] - mx[i] * my[i];
        const float sx = std::sqrt(vx), sy = std::sqrt(vy);
        const float c1 = static_cast<float>(kSsimC1), c2 = static_cast<float>(kSsimC2),
                    c3 = static_cast<float>(kSsimC3);
        const float l = (2.f * mx[i] * my[i] + c1) / (mx[i] * mx[i] + my[i] * my[i] + c1);
        const float c = (2.f * sx * sy + c2) / (vx + vy + c2);
        const float s = (cv + c3) / (sx * sy + c3);
        acc += static_cast<double>(l * c * s);
    }
    return static_cast<float>(acc / static_cast<double>(n));
}

double dssim_decoupled(const ImageBuffer& ref, const ImageBuffer& raw, const ImageBuffer& app) {
    require_same_shape(ref, raw, "dssim_decoupled");
    require_same_shape(ref, app, "dssim_decoupled");
    const SsimMaps lum = ssim_components(ref, app);
    const SsimMaps cs = ssim_components(ref, raw);
    std::vector<double> prods(lum.l.data.size());
    for (std::size_t i = 0; i < prods.size(); ++i)
        prods[i] = lum.l.data[i] * cs.c.data[i] * cs.s.data[i];
    return 1.0 - pairwise_sum(prods) / static_cast<double>(prods.size());
}

DecoupledSsimGrads decoupled_ssim_backward(const ImageBuffer& ref, const ImageBuffer& raw,
                                           const ImageBuffer& app, const ImageBuffer& weight) {
    require_same_shape(ref, raw, "decoupled_ssim_backward");
    require_same_shape(ref, app, "decoupled_ssim_backward");
    require_same_shape(ref, weight, "decoupled_ssim_backward");

    const SsimStats st_app = ssim_stats(ref, app);
    const SsimStats st_raw = ssim_stats(ref, raw);
    const SsimMaps lum = ssim_components_from_stats(st_app);
    const SsimMaps cs = ssim_components_from_stats(st_raw);

    const int w = ref.width, h = ref.height, ch = ref.channels;
    // Coefficient maps w.r.t. the windowed moments of each pair.
    ImageBuffer app_mu(w, h, ch), raw_mu(w, h, ch), raw_m2(w, h, ch), raw_mxy(w, h, ch);
    constexpr double kSigmaFloor = 1e-12;

    for (std::size_t i = 0; i < weight.data.size(); ++i) {
        const double u = weight.data[i];
        const double lv = lum.l.data[i], cv = cs.c.data[i], sv = cs.s.data[i];

        // luminance factor, appearance pair: depends on mu_y only
        {
            const double mx = st_app.mu_x.data[i], my = st_app.mu_y.data[i];
            const double denom = mx * mx + my * my + kSsimC1;
            const double dl_dmy = (2.0 * mx * denom - (2.0 * mx * my + kSsimC1) * 2.0 * my) /
                                  (denom * denom);
            app_mu.data[i] = u * cv * sv * dl_dmy;
        }

        // contrast and structure, raw pair: depend on var_y and cov
        {
            const double sx = std::sqrt(st_raw.var_x.data[i]);
            const double sy = std::sqrt(st_raw.var_y.data[i]);
            const double sy_safe = std::max(sy, kSigmaFloor);
            const double dc_num = 2.0 * sx * sy + kSsimC2;
            const double dc_den = st_raw.var_x.data[i] + st_raw.var_y.data[i] + kSsimC2;
            // c = dc_num/dc_den with sy = sqrt(var_y)
            const double dc_dvar = ((sx / sy_safe) * dc_den - dc_num) / (dc_den * dc_den);
            const double ds_den = sx * sy + kSsimC3;
            const double ds_dcov = 1.0 / ds_den;
            const double ds_dvar = -sv * sx / (2.0 * sy_safe * ds_den);

            const double gv = u * lv * (sv * dc_dvar + cv * ds_dvar);
            const double gc = u * lv * cv * ds_dcov;
            // var_y = m2 - mu_y^2, cov = mxy - mu_x mu_y
            raw_m2.data[i] = gv;
            raw_mxy.data[i] = gc;
            raw_mu.data[i] = -2.0 * st_raw.mu_y.data[i] * gv - st_raw.mu_x.data[i] * gc;
        }
    }

    DecoupledSsimGrads out;
    out.d_app = blur11_adjoint(app_mu);

    const ImageBuffer adj_mu = blur11_adjoint(raw_mu);
    const ImageBuffer adj_m2 = blur11_adjoint(raw_m2);
    const ImageBuffer adj_mxy = blur11_adjoint(raw_mxy);
    out.d_raw = ImageBuffer(w, h, ch);
    for (std::size_t i = 0; i < out.d_raw.data.size(); ++i)
        out.d_raw.data[i] = adj_mu.data[i] + 2.0 * raw.data[i] * adj_m2.data[i] +
                            ref.data[i] * adj_mxy.data[i];
    return out;
}

}  // namespace csplat
