#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <vector>

namespace csplat {

// Row-major scalar image, 1 or 3 channels, interleaved.
struct ImageBuffer {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<double> data;

    ImageBuffer() = default;
    ImageBuffer(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, fill) {}

    std::size_t index(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
    double at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    bool same_shape(const ImageBuffer& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }

    ImageBuffer& clamp01() {
        for (double& v : data) v = std::clamp(v, 0.0, 1.0);
        return *this;
    }
};

// Mirror index without edge duplication (…,2,1,0,1,2,…). Valid for any
// offset, including pads longer than the extent.
inline int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n - 2;
    int m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - m;
}

}  // namespace csplat
