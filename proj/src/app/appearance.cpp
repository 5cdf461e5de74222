#include "csplat/app/appearance.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace csplat {

namespace {

Tensor3 leaky_relu(const Tensor3& in) {
    Tensor3 out = in;
    for (double& v : out.data) v = v > 0.0 ? v : 0.01 * v;
    return out;
}

Tensor3 leaky_relu_backward(const Tensor3& preact, const Tensor3& d_out) {
    Tensor3 d_in = d_out;
    for (std::size_t i = 0; i < d_in.data.size(); ++i)
        if (preact.data[i] <= 0.0) d_in.data[i] *= 0.01;
    return d_in;
}

Tensor3 upsample2(const Tensor3& in) {
    Tensor3 out(in.channels, in.height * 2, in.width * 2);
    for (int c = 0; c < in.channels; ++c)
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) out.at(c, y, x) = in.at(c, y / 2, x / 2);
    return out;
}

Tensor3 upsample2_backward(const Tensor3& d_out) {
    Tensor3 d_in(d_out.channels, d_out.height / 2, d_out.width / 2);
    for (int c = 0; c < d_in.channels; ++c)
        for (int y = 0; y < d_in.height; ++y)
            for (int x = 0; x < d_in.width; ++x) {
                double s = 0.0;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) s += d_out.at(c, y * 2 + dy, x * 2 + dx);
                d_in.at(c, y, x) = s;
            }
    return d_in;
}

// dL/d(input) plus weight/bias gradients for a 3x3 zero-padded convolution.
Tensor3 conv_backward(const Conv3x3& conv, const Tensor3& in, const Tensor3& d_out,
                      std::vector<double>& d_w, std::vector<double>& d_b) {
    d_w.assign(conv.weight.size(), 0.0);
    d_b.assign(conv.bias.size(), 0.0);
    Tensor3 d_in(in.channels, in.height, in.width);
    for (int o = 0; o < conv.out_c; ++o) {
        for (int y = 0; y < d_out.height; ++y)
            for (int x = 0; x < d_out.width; ++x) {
                const double g = d_out.at(o, y, x);
                if (g == 0.0) continue;
                d_b[static_cast<std::size_t>(o)] += g;
                for (int i = 0; i < conv.in_c; ++i)
                    for (int ky = 0; ky < 3; ++ky) {
                        const int sy = y + ky - 1;
                        if (sy < 0 || sy >= in.height) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int sx = x + kx - 1;
                            if (sx < 0 || sx >= in.width) continue;
                            const std::size_t wi =
                                ((static_cast<std::size_t>(o) * conv.in_c + i) * 3 + ky) * 3 + kx;
                            d_w[wi] += g * in.at(i, sy, sx);
                            d_in.at(i, sy, sx) += g * conv.weight[wi];
                        }
                    }
            }
    }
    return d_in;
}

}  // namespace

void Conv3x3::init(int in, int out, Rng* rng) {
    in_c = in;
    out_c = out;
    weight.assign(static_cast<std::size_t>(out) * in * 9, 0.0);
    bias.assign(static_cast<std::size_t>(out), 0.0);
    if (rng) {
        const double stddev = std::sqrt(2.0 / (in * 9.0));
        for (double& w : weight) w = stddev * rng->normal();
    }
}

Tensor3 Conv3x3::forward(const Tensor3& in) const {
    Tensor3 out(out_c, in.height, in.width);
    for (int o = 0; o < out_c; ++o)
        for (int y = 0; y < in.height; ++y)
            for (int x = 0; x < in.width; ++x) {
                double acc = bias[static_cast<std::size_t>(o)];
                for (int i = 0; i < in_c; ++i)
                    for (int ky = 0; ky < 3; ++ky) {
                        const int sy = y + ky - 1;
                        if (sy < 0 || sy >= in.height) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int sx = x + kx - 1;
                            if (sx < 0 || sx >= in.width) continue;
                            acc += weight[((static_cast<std::size_t>(o) * in_c + i) * 3 + ky) * 3 +
                                          kx] *
                                   in.at(i, sy, sx);
                        }
                    }
                out.at(o, y, x) = acc;
            }
    return out;
}

void AppearanceNet::init(uint64_t seed) {
    Rng rng(seed);
    conv0.init(kAppearanceInputChannels, 64, &rng);
    conv1.init(64, 32, &rng);
    conv2.init(32, 16, &rng);
    conv_out.init(16, 3, nullptr);  // zero: the correction starts as identity
}

std::size_t AppearanceNet::parameter_count() const {
    std::size_t n = 0;
    for (const Conv3x3* c : {&conv0, &conv1, &conv2, &conv_out})
        n += c->weight.size() + c->bias.size();
    return n;
}

std::vector<double*> AppearanceNet::parameter_spans() {
    std::vector<double*> out;
    for (Conv3x3* c : {&conv0, &conv1, &conv2, &conv_out}) {
        out.push_back(c->weight.data());
        out.push_back(c->bias.data());
    }
    return out;
}

AppearanceVariant appearance_variant_from_string(const std::string& name) {
    if (name == "none") return AppearanceVariant::kNone;
    if (name == "cnn") return AppearanceVariant::kCnn;
    if (name == "pgsr") return AppearanceVariant::kPgsr;
    if (name == "h3dgs") return AppearanceVariant::kH3dgs;
    throw std::invalid_argument("unknown appearance variant: " + name);
}

std::string to_string(AppearanceVariant v) {
    switch (v) {
        case AppearanceVariant::kNone: return "none";
        case AppearanceVariant::kCnn: return "cnn";
        case AppearanceVariant::kPgsr: return "pgsr";
        case AppearanceVariant::kH3dgs: return "h3dgs";
    }
    return "none";
}

AppearanceModel AppearanceModel::create(AppearanceVariant variant, int n_images, uint64_t seed) {
    AppearanceModel m;
    m.variant = variant;
    m.n_images = n_images;
    switch (variant) {
        case AppearanceVariant::kNone:
            break;
        case AppearanceVariant::kCnn:
            m.net.init(seed);
            m.latents.assign(static_cast<std::size_t>(n_images), {});
            break;
        case AppearanceVariant::kPgsr:
            m.pgsr_a.assign(static_cast<std::size_t>(n_images), 0.0);
            m.pgsr_b.assign(static_cast<std::size_t>(n_images), 0.0);
            break;
        case AppearanceVariant::kH3dgs:
            m.h3_a.assign(static_cast<std::size_t>(n_images), Mat3::identity());
            m.h3_b.assign(static_cast<std::size_t>(n_images), Vec3{});
            break;
    }
    return m;
}

ImageBuffer downsample32_reflect(const ImageBuffer& img) {
    if (img.width <= 0 || img.height <= 0)
        throw std::invalid_argument("downsample32_reflect: empty image");
    const int out_w = (img.width + 31) / 32;
    const int out_h = (img.height + 31) / 32;
    ImageBuffer out(out_w, out_h, img.channels);
    for (int oy = 0; oy < out_h; ++oy)
        for (int ox = 0; ox < out_w; ++ox)
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int dy = 0; dy < 32; ++dy)
                    for (int dx = 0; dx < 32; ++dx)
                        acc += img.at(reflect_index(ox * 32 + dx, img.width),
                                      reflect_index(oy * 32 + dy, img.height), c);
                out.at(ox, oy, c) = acc / (32.0 * 32.0);
            }
    return out;
}

ImageBuffer positional_encoding(int width, int height) {
    ImageBuffer out(width, height, 3);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double u = width > 1 ? -1.0 + 2.0 * x / (width - 1.0) : 0.0;
            const double v = height > 1 ? -1.0 + 2.0 * y / (height - 1.0) : 0.0;
            out.at(x, y, 0) = u;
            out.at(x, y, 1) = v;
            out.at(x, y, 2) = std::sqrt(u * u + v * v);
        }
    return out;
}

ImageBuffer apply_affine(const ImageBuffer& raw, const AppearanceModel& model, int image_id) {
    ImageBuffer out = raw;
    const std::size_t id = static_cast<std::size_t>(image_id);
    if (model.variant == AppearanceVariant::kPgsr) {
        const double scale = std::exp(model.pgsr_a[id]);
        const double offset = model.pgsr_b[id];
        for (double& v : out.data) v = scale * v + offset;
    } else if (model.variant == AppearanceVariant::kH3dgs) {
        const Mat3& a = model.h3_a[id];
        const Vec3& b = model.h3_b[id];
        for (std::size_t p = 0; p < out.pixel_count(); ++p) {
            const Vec3 px{raw.data[p * 3], raw.data[p * 3 + 1], raw.data[p * 3 + 2]};
            const Vec3 mapped = a * px + b;
            for (int c = 0; c < 3; ++c) out.data[p * 3 + static_cast<std::size_t>(c)] = mapped[c];
        }
    } else {
        throw std::invalid_argument("apply_affine: affine variant required");
    }
    return out;
}

AppearanceForward apply_appearance(const AppearanceModel& model, int image_id,
                                   const ImageBuffer& raw, const ImageBuffer* frozen_ds32) {
    AppearanceForward fwd;
    if (model.variant == AppearanceVariant::kNone) {
        fwd.corrected = raw;
        fwd.log_map = ImageBuffer(raw.width, raw.height, 3);
        return fwd;
    }
    if (model.variant == AppearanceVariant::kPgsr || model.variant == AppearanceVariant::kH3dgs) {
        fwd.corrected = apply_affine(raw, model, image_id);
        return fwd;
    }

    if (raw.channels != 3) throw std::invalid_argument("apply_appearance: 3 channels required");
    const ImageBuffer ds = frozen_ds32 ? *frozen_ds32 : downsample32_reflect(raw);
    const int lw = ds.width, lh = ds.height;
    const ImageBuffer pos = positional_encoding(lw, lh);
    const auto& latent = model.latents[static_cast<std::size_t>(image_id)];

    Tensor3 input(kAppearanceInputChannels, lh, lw);
    for (int y = 0; y < lh; ++y)
        for (int x = 0; x < lw; ++x) {
            for (int c = 0; c < 3; ++c) input.at(c, y, x) = ds.at(x, y, c);
            for (int k = 0; k < kLatentDim; ++k)
                input.at(3 + k, y, x) = latent[static_cast<std::size_t>(k)];
            for (int c = 0; c < 3; ++c) input.at(67 + c, y, x) = pos.at(x, y, c);
        }
    fwd.input = input;

    Tensor3 cur = input;
    const Conv3x3* hidden[3] = {&model.net.conv0, &model.net.conv1, &model.net.conv2};
    for (int stage = 0; stage < 3; ++stage) {
        fwd.conv_inputs.push_back(cur);
        Tensor3 pre = hidden[stage]->forward(cur);
        fwd.preacts.push_back(pre);
        cur = upsample2(leaky_relu(pre));
    }
    cur = upsample2(upsample2(cur));
    fwd.conv_inputs.push_back(cur);
    const Tensor3 m_full = model.net.conv_out.forward(cur);
    fwd.pad_h = m_full.height;
    fwd.pad_w = m_full.width;

    fwd.log_map = ImageBuffer(raw.width, raw.height, 3);
    fwd.corrected = ImageBuffer(raw.width, raw.height, 3);
    for (int y = 0; y < raw.height; ++y)
        for (int x = 0; x < raw.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const double m = m_full.at(c, y, x);
                fwd.log_map.at(x, y, c) = m;
                fwd.corrected.at(x, y, c) = raw.at(x, y, c) * std::exp(m);
            }
    return fwd;
}

AppearanceGrads appearance_backward(const AppearanceModel& model, int image_id,
                                    const ImageBuffer& raw, const AppearanceForward& fwd,
                                    const ImageBuffer& d_app) {
    AppearanceGrads out;
    out.d_raw = ImageBuffer(raw.width, raw.height, raw.channels);
    const std::size_t id = static_cast<std::size_t>(image_id);

    if (model.variant == AppearanceVariant::kNone) {
        out.d_raw = d_app;
        return out;
    }
    if (model.variant == AppearanceVariant::kPgsr) {
        const double scale = std::exp(model.pgsr_a[id]);
        for (std::size_t i = 0; i < d_app.data.size(); ++i) {
            out.d_pgsr_a += d_app.data[i] * scale * raw.data[i];
            out.d_pgsr_b += d_app.data[i];
            out.d_raw.data[i] = scale * d_app.data[i];
        }
        return out;
    }
    if (model.variant == AppearanceVariant::kH3dgs) {
        const Mat3& a = model.h3_a[id];
        const Mat3 at = transpose(a);
        for (std::size_t p = 0; p < d_app.pixel_count(); ++p) {
            const Vec3 g{d_app.data[p * 3], d_app.data[p * 3 + 1], d_app.data[p * 3 + 2]};
            const Vec3 px{raw.data[p * 3], raw.data[p * 3 + 1], raw.data[p * 3 + 2]};
            out.d_h3_a += outer(g, px);
            out.d_h3_b += g;
            const Vec3 dr = at * g;
            for (int c = 0; c < 3; ++c) out.d_raw.data[p * 3 + static_cast<std::size_t>(c)] = dr[c];
        }
        return out;
    }

    // CNN: corrected = raw ⊙ exp(M). The ds32 input is detached, so the raw
    // gradient is the elementwise-product path only.
    Tensor3 d_m(3, fwd.pad_h, fwd.pad_w);
    for (int y = 0; y < raw.height; ++y)
        for (int x = 0; x < raw.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const double expm = std::exp(fwd.log_map.at(x, y, c));
                const double g = d_app.at(x, y, c);
                out.d_raw.at(x, y, c) = g * expm;
                d_m.at(c, y, x) = g * raw.at(x, y, c) * expm;
            }

    Tensor3 d_cur = conv_backward(model.net.conv_out, fwd.conv_inputs[3], d_m, out.d_conv_w[3],
                                  out.d_conv_b[3]);
    d_cur = upsample2_backward(upsample2_backward(d_cur));
    const Conv3x3* hidden[3] = {&model.net.conv0, &model.net.conv1, &model.net.conv2};
    for (int stage = 2; stage >= 0; --stage) {
        d_cur = upsample2_backward(d_cur);
        d_cur = leaky_relu_backward(fwd.preacts[static_cast<std::size_t>(stage)], d_cur);
        d_cur = conv_backward(*hidden[stage], fwd.conv_inputs[static_cast<std::size_t>(stage)],
                              d_cur, out.d_conv_w[stage], out.d_conv_b[stage]);
    }
    // channels 0..2 (detached ds32) and 67..69 (constant encoding) are dropped
    for (int k = 0; k < kLatentDim; ++k) {
        double acc = 0.0;
        for (int y = 0; y < d_cur.height; ++y)
            for (int x = 0; x < d_cur.width; ++x) acc += d_cur.at(3 + k, y, x);
        out.d_latent[static_cast<std::size_t>(k)] = acc;
    }
    return out;
}

namespace {

void write_u32(std::ofstream& out, uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}
uint32_t read_u32(std::ifstream& in) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
void write_f32s(std::ofstream& out, const double* values, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const float f = static_cast<float>(values[i]);
        out.write(reinterpret_cast<const char*>(&f), 4);
    }
}
void read_f32s(std::ifstream& in, double* values, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        float f = 0;
        in.read(reinterpret_cast<char*>(&f), 4);
        values[i] = f;
    }
}

constexpr uint32_t kAppearanceMagic = 0x57415343;  // "CSAW" little-endian
constexpr uint32_t kAppearanceVersion = 1;

}  // namespace

void save_appearance(const AppearanceModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for write");
    write_u32(out, kAppearanceMagic);
    write_u32(out, kAppearanceVersion);
    write_u32(out, static_cast<uint32_t>(model.variant));
    write_u32(out, static_cast<uint32_t>(model.n_images));
    write_u32(out, kLatentDim);
    if (model.variant == AppearanceVariant::kCnn) {
        for (const Conv3x3* c : {&model.net.conv0, &model.net.conv1, &model.net.conv2,
                                 &model.net.conv_out}) {
            write_u32(out, static_cast<uint32_t>(c->in_c));
            write_u32(out, static_cast<uint32_t>(c->out_c));
            write_f32s(out, c->weight.data(), c->weight.size());
            write_f32s(out, c->bias.data(), c->bias.size());
        }
        for (const auto& latent : model.latents) write_f32s(out, latent.data(), latent.size());
    } else if (model.variant == AppearanceVariant::kPgsr) {
        for (int i = 0; i < model.n_images; ++i) {
            write_f32s(out, &model.pgsr_a[static_cast<std::size_t>(i)], 1);
            write_f32s(out, &model.pgsr_b[static_cast<std::size_t>(i)], 1);
        }
    } else if (model.variant == AppearanceVariant::kH3dgs) {
        for (int i = 0; i < model.n_images; ++i) {
            write_f32s(out, model.h3_a[static_cast<std::size_t>(i)].m.data(), 9);
            const Vec3& b = model.h3_b[static_cast<std::size_t>(i)];
            const double vals[3] = {b.x, b.y, b.z};
            write_f32s(out, vals, 3);
        }
    }
    if (!out) throw std::runtime_error(path + ": write failed");
}

AppearanceModel load_appearance(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open");
    if (read_u32(in) != kAppearanceMagic) throw std::runtime_error(path + ": bad magic");
    if (read_u32(in) != kAppearanceVersion) throw std::runtime_error(path + ": bad version");
    const auto variant = static_cast<AppearanceVariant>(read_u32(in));
    const int n_images = static_cast<int>(read_u32(in));
    if (read_u32(in) != kLatentDim) throw std::runtime_error(path + ": latent dim mismatch");
    AppearanceModel model = AppearanceModel::create(variant, n_images, /*seed=*/0);
    if (variant == AppearanceVariant::kCnn) {
        for (Conv3x3* c : {&model.net.conv0, &model.net.conv1, &model.net.conv2,
                           &model.net.conv_out}) {
            const int in_c = static_cast<int>(read_u32(in));
            const int out_c = static_cast<int>(read_u32(in));
            if (in_c != c->in_c || out_c != c->out_c)
                throw std::runtime_error(path + ": conv shape mismatch");
            read_f32s(in, c->weight.data(), c->weight.size());
            read_f32s(in, c->bias.data(), c->bias.size());
        }
        for (auto& latent : model.latents) read_f32s(in, latent.data(), latent.size());
    } else if (variant == AppearanceVariant::kPgsr) {
        for (int i = 0; i < n_images; ++i) {
            read_f32s(in, &model.pgsr_a[static_cast<std::size_t>(i)], 1);
            read_f32s(in, &model.pgsr_b[static_cast<std::size_t>(i)], 1);
        }
    } else if (variant == AppearanceVariant::kH3dgs) {
        for (int i = 0; i < n_images; ++i) {
            read_f32s(in, model.h3_a[static_cast<std::size_t>(i)].m.data(), 9);
            double vals[3];
            read_f32s(in, vals, 3);
            model.h3_b[static_cast<std::size_t>(i)] = {vals[0], vals[1], vals[2]};
        }
    }
    if (!in) throw std::runtime_error(path + ": truncated");
    return model;
}

}  // namespace csplat
