#pragma once

#include <string>

#include "csplat/core/image.hpp"

namespace csplat {

// 8-bit binary PPM (P6) / PGM (P5). Values are mapped to [0,1] on load and
// clamped+quantized on save.
ImageBuffer load_ppm(const std::string& path);
void save_ppm(const ImageBuffer& img, const std::string& path);

// PFM, 32-bit little-endian floats, bottom-up rows, scale -1. "Pf" for one
// channel, "PF" for three.
ImageBuffer load_pfm(const std::string& path);
void save_pfm(const ImageBuffer& img, const std::string& path);

// 8-bit non-interlaced PNG (gray, gray+alpha, RGB, RGBA; alpha dropped).
ImageBuffer load_png(const std::string& path);

// Dispatch on extension (.ppm/.pgm/.png).
ImageBuffer load_image(const std::string& path);

}  // namespace csplat
