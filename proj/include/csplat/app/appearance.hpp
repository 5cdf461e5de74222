#pragma once

#include <array>
#include <string>
#include <vector>

#include "csplat/core/image.hpp"
#include "csplat/core/rng.hpp"
#include "csplat/core/vec.hpp"

namespace csplat {

inline constexpr int kLatentDim = 64;
inline constexpr int kAppearanceInputChannels = 70;  // 3 ds32 + 64 latent + u,v,r

// Channel-major tensor used inside the appearance net.
struct Tensor3 {
    int channels = 0, height = 0, width = 0;
    std::vector<double> data;

    Tensor3() = default;
    Tensor3(int c, int h, int w)
        : channels(c), height(h), width(w),
          data(static_cast<std::size_t>(c) * h * w, 0.0) {}
    double& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
};

struct Conv3x3 {
    int in_c = 0, out_c = 0;
    std::vector<double> weight;  // [out][in][3][3]
    std::vector<double> bias;    // [out]

    void init(int in, int out, Rng* rng);  // He normal; zero when rng == nullptr
    Tensor3 forward(const Tensor3& in) const;
};

// Corrective network: three hidden 3x3 convs (70→64→32→16, leaky-ReLU 0.01)
// interleaved with five x2 nearest-neighbor upsamplings, and a zero-initialized
// final 3x3 conv to 3 channels. Total upsampling x32 back to full resolution.
struct AppearanceNet {
    Conv3x3 conv0, conv1, conv2, conv_out;

    void init(uint64_t seed);
    std::size_t parameter_count() const;
    std::vector<double*> parameter_spans();  // contiguous blocks: weights+bias per conv
};

enum class AppearanceVariant { kNone, kCnn, kPgsr, kH3dgs };

AppearanceVariant appearance_variant_from_string(const std::string& name);
std::string to_string(AppearanceVariant v);

struct AppearanceModel {
    AppearanceVariant variant = AppearanceVariant::kNone;
    int n_images = 0;

    AppearanceNet net;
    std::vector<std::array<double, kLatentDim>> latents;

    std::vector<double> pgsr_a, pgsr_b;  // per image
    std::vector<Mat3> h3_a;
    std::vector<Vec3> h3_b;

    static AppearanceModel create(AppearanceVariant variant, int n_images, uint64_t seed);
};

// Reflection-pad each dimension up to the next multiple of 32 and box-average
// 32x32 blocks. The result is treated as detached in the backward pass.
ImageBuffer downsample32_reflect(const ImageBuffer& img);

// 3-channel (u, v, r) buffer; u and v span [-1, 1] across pixel centers and
// r = sqrt(u^2 + v^2).
ImageBuffer positional_encoding(int width, int height);

struct AppearanceForward {
    ImageBuffer corrected;  // Î_app (full resolution)
    ImageBuffer log_map;    // M, the per-pixel log-space correction
    // retained activations (CNN variant only)
    Tensor3 input;
    std::vector<Tensor3> conv_inputs;
    std::vector<Tensor3> preacts;
    int pad_h = 0, pad_w = 0;  // net output size before cropping
};

// Î_app = Î ⊙ exp(M) for the CNN variant, per-image affine map otherwise,
// identity for kNone. `frozen_ds32` substitutes the detached CNN input (used
// by finite-difference checks).
AppearanceForward apply_appearance(const AppearanceModel& model, int image_id,
                                   const ImageBuffer& raw,
                                   const ImageBuffer* frozen_ds32 = nullptr);

// Standalone affine map (PGSR: exp(a)·Î + b, H3DGS: A·Î + b).
ImageBuffer apply_affine(const ImageBuffer& raw, const AppearanceModel& model, int image_id);

struct AppearanceGrads {
    // parameter gradients, shaped like the model
    std::vector<double> d_conv_w[4];
    std::vector<double> d_conv_b[4];
    std::array<double, kLatentDim> d_latent{};  // for the current image id
    double d_pgsr_a = 0.0, d_pgsr_b = 0.0;
    Mat3 d_h3_a;
    Vec3 d_h3_b;
    ImageBuffer d_raw;  // dL/dÎ through the appearance map (ds32 path excluded)
};

AppearanceGrads appearance_backward(const AppearanceModel& model, int image_id,
                                    const ImageBuffer& raw, const AppearanceForward& fwd,
                                    const ImageBuffer& d_app);

// Sidecar checkpoint (versioned header, little-endian 32-bit floats).
void save_appearance(const AppearanceModel& model, const std::string& path);
AppearanceModel load_appearance(const std::string& path);

}  // namespace csplat
