#include <doctest.h>

#include <cmath>
#include <vector>

#include "csplat/core/rng.hpp"
#include "csplat/loss/ssim.hpp"

using namespace csplat;

namespace {

ImageBuffer random_image(Rng& rng, int w, int h, int ch, double lo = 0.05, double hi = 0.95) {
    ImageBuffer img(w, h, ch);
    for (double& v : img.data) v = rng.uniform(lo, hi);
    return img;
}

// Independent reference: classic single-formula SSIM with a directly-computed
// (non-separable) windowed mean under the same reflection padding.
double reference_ssim(const ImageBuffer& x, const ImageBuffer& y) {
    const double c1 = 1e-4, c2 = 9e-4;
    const double sigma = 1.5;
    double kernel[11][11];
    double ksum = 0.0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            const double di = i - 5, dj = j - 5;
            kernel[i][j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
            ksum += kernel[i][j];
        }
    for (auto& row : kernel)
        for (double& k : row) k /= ksum;

    double acc = 0.0;
    for (int yy = 0; yy < x.height; ++yy)
        for (int xx = 0; xx < x.width; ++xx)
            for (int c = 0; c < x.channels; ++c) {
                double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        const int sx = reflect_index(xx + j - 5, x.width);
                        const int sy = reflect_index(yy + i - 5, x.height);
                        const double a = x.at(sx, sy, c), b = y.at(sx, sy, c);
                        mx += kernel[i][j] * a;
                        my += kernel[i][j] * b;
                        mxx += kernel[i][j] * a * a;
                        myy += kernel[i][j] * b * b;
                        mxy += kernel[i][j] * a * b;
                    }
                const double vx = mxx - mx * mx, vy = myy - my * my, cv = mxy - mx * my;
                acc += (2 * mx * my + c1) * (2 * cv + c2) /
                       ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
    return acc / static_cast<double>(x.data.size());
}

}  // namespace

TEST_CASE("ssim components identity") {
    Rng rng(41);
    const ImageBuffer img = random_image(rng, 16, 12, 3);
    const SsimMaps maps = ssim_components(img, img);
    for (std::size_t i = 0; i < maps.l.data.size(); ++i) {
        CHECK(maps.l.data[i] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(maps.c.data[i] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(maps.s.data[i] == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("constant shift preserves structure, reduces luminance") {
    Rng rng(42);
    const ImageBuffer img = random_image(rng, 16, 16, 1, 0.1, 0.7);
    ImageBuffer shifted = img;
    for (double& v : shifted.data) v += 0.1;
    const SsimMaps maps = ssim_components(img, shifted);
    for (std::size_t i = 0; i < maps.s.data.size(); ++i) {
        CHECK(maps.s.data[i] == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(maps.c.data[i] == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(maps.l.data[i] < 1.0);
    }
}

TEST_CASE("l*c*s equals the reference SSIM") {
    Rng rng(43);
    for (int trial = 0; trial < 4; ++trial) {
        const ImageBuffer a = random_image(rng, 20, 14, 3);
        const ImageBuffer b = random_image(rng, 20, 14, 3);
        CHECK(ssim_mean(a, b) == doctest::Approx(reference_ssim(a, b)).epsilon(1e-8));
    }
}

TEST_CASE("component ranges hold for inputs in [0,1]") {
    Rng rng(44);
    const ImageBuffer a = random_image(rng, 12, 12, 3, 0.0, 1.0);
    const ImageBuffer b = random_image(rng, 12, 12, 3, 0.0, 1.0);
    const SsimMaps maps = ssim_components(a, b);
    for (std::size_t i = 0; i < maps.l.data.size(); ++i) {
        CHECK(maps.l.data[i] > 0.0);
        CHECK(maps.l.data[i] <= 1.0 + 1e-12);
        CHECK(maps.c.data[i] > 0.0);
        CHECK(maps.c.data[i] <= 1.0 + 1e-12);
        CHECK(maps.s.data[i] >= -1.0 - 1e-12);
        CHECK(maps.s.data[i] <= 1.0 + 1e-12);
    }
}

TEST_CASE("dssim_decoupled identity and luminance-only perturbation") {
    Rng rng(45);
    const ImageBuffer img = random_image(rng, 16, 16, 3);
    CHECK(dssim_decoupled(img, img, img) == doctest::Approx(0.0).epsilon(1e-12));

    ImageBuffer doubled = img;
    for (double& v : doubled.data) v *= 2.0;
    const double d = dssim_decoupled(img, img, doubled);
    CHECK(d > 0.0);
    // contrast and structure stay at 1 by construction
    const SsimMaps maps = ssim_components(img, img);
    for (std::size_t i = 0; i < maps.c.data.size(); ++i)
        CHECK(maps.c.data[i] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("dssim_decoupled composes from the two component calls") {
    Rng rng(46);
    const ImageBuffer ref = random_image(rng, 14, 10, 3);
    const ImageBuffer raw = random_image(rng, 14, 10, 3);
    const ImageBuffer app = random_image(rng, 14, 10, 3);
    const SsimMaps lum = ssim_components(ref, app);
    const SsimMaps cs = ssim_components(ref, raw);
    double acc = 0.0;
    for (std::size_t i = 0; i < lum.l.data.size(); ++i)
        acc += lum.l.data[i] * cs.c.data[i] * cs.s.data[i];
    const double expected = 1.0 - acc / static_cast<double>(lum.l.data.size());
    CHECK(dssim_decoupled(ref, raw, app) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("decoupling is the identity when app == raw") {
    Rng rng(47);
    const ImageBuffer ref = random_image(rng, 16, 12, 3);
    const ImageBuffer raw = random_image(rng, 16, 12, 3);
    CHECK(dssim_decoupled(ref, raw, raw) ==
          doctest::Approx(1.0 - ssim_mean(ref, raw)).epsilon(1e-8));
}

TEST_CASE("float fast path tracks the double reference") {
    Rng rng(48);
    for (int trial = 0; trial < 3; ++trial) {
        const ImageBuffer a = random_image(rng, 24, 18, 3);
        const ImageBuffer b = random_image(rng, 24, 18, 3);
        const double ref = ssim_mean(a, b);
        CHECK(std::abs(ssim_mean_f32(a, b) - ref) <= 1e-4 * std::abs(ref));
    }
}

TEST_CASE("blur adjoint satisfies the inner-product identity") {
    Rng rng(49);
    const ImageBuffer x = random_image(rng, 13, 9, 1, -1.0, 1.0);
    const ImageBuffer y = random_image(rng, 13, 9, 1, -1.0, 1.0);
    const ImageBuffer bx = blur11(x);
    const ImageBuffer aty = blur11_adjoint(y);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        lhs += bx.data[i] * y.data[i];
        rhs += x.data[i] * aty.data[i];
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("decoupled ssim backward matches finite differences") {
    Rng rng(50);
    const int w = 9, h = 7;
    const ImageBuffer ref = random_image(rng, w, h, 3);
    ImageBuffer raw = random_image(rng, w, h, 3);
    ImageBuffer app = random_image(rng, w, h, 3);
    const ImageBuffer weight = random_image(rng, w, h, 3, -1.0, 1.0);

    auto objective = [&]() {
        const SsimMaps lum = ssim_components(ref, app);
        const SsimMaps cs = ssim_components(ref, raw);
        double acc = 0.0;
        for (std::size_t i = 0; i < weight.data.size(); ++i)
            acc += weight.data[i] * lum.l.data[i] * cs.c.data[i] * cs.s.data[i];
        return acc;
    };

    const DecoupledSsimGrads grads = decoupled_ssim_backward(ref, raw, app, weight);
    const double step = 1e-6;
    Rng pick(51);
    for (int probe = 0; probe < 40; ++probe) {
        const std::size_t i =
            static_cast<std::size_t>(pick.uniform_int(0, static_cast<int>(raw.data.size()) - 1));
        double& slot = (probe % 2 == 0) ? raw.data[i] : app.data[i];
        const double saved = slot;
        slot = saved + step;
        const double plus = objective();
        slot = saved - step;
        const double minus = objective();
        slot = saved;
        const double fd = (plus - minus) / (2 * step);
        const double analytic = (probe % 2 == 0) ? grads.d_raw.data[i] : grads.d_app.data[i];
        CHECK(analytic == doctest::Approx(fd).epsilon(2e-5));
    }
}
