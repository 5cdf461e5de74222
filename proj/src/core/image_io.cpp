#include "csplat/core/image_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace csplat {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& why) {
    throw std::runtime_error(path + ": " + why);
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    in.seekg(0, std::ios::end);
    const auto size = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<uint8_t> buf(static_cast<std::size_t>(size));
    in.read(reinterpret_cast<char*>(buf.data()), size);
    if (!in) fail(path, "short read");
    return buf;
}

// Skips whitespace and '#' comments in a PNM header.
int next_pnm_int(const std::vector<uint8_t>& buf, std::size_t& pos) {
    while (pos < buf.size()) {
        if (buf[pos] == '#') {
            while (pos < buf.size() && buf[pos] != '\n') ++pos;
        } else if (std::isspace(buf[pos])) {
            ++pos;
        } else {
            break;
        }
    }
    int v = 0;
    bool any = false;
    while (pos < buf.size() && std::isdigit(buf[pos])) {
        v = v * 10 + (buf[pos] - '0');
        ++pos;
        any = true;
    }
    if (!any) throw std::runtime_error("malformed PNM header");
    return v;
}

}  // namespace

ImageBuffer load_ppm(const std::string& path) {
    const auto buf = read_file(path);
    if (buf.size() < 2 || buf[0] != 'P' || (buf[1] != '5' && buf[1] != '6'))
        fail(path, "not a binary PGM/PPM");
    const int channels = buf[1] == '6' ? 3 : 1;
    std::size_t pos = 2;
    const int w = next_pnm_int(buf, pos);
    const int h = next_pnm_int(buf, pos);
    const int maxval = next_pnm_int(buf, pos);
    if (maxval != 255) fail(path, "only maxval 255 supported");
    ++pos;  // single whitespace after maxval
    const std::size_t need = static_cast<std::size_t>(w) * h * channels;
    if (buf.size() - pos < need) fail(path, "truncated pixel data");
    ImageBuffer img(w, h, channels);
    for (std::size_t i = 0; i < need; ++i) img.data[i] = buf[pos + i] / 255.0;
    return img;
}

void save_ppm(const ImageBuffer& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3)
        throw std::runtime_error("save_ppm: 1 or 3 channels required");
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(path, "cannot open for write");
    out << (img.channels == 3 ? "P6" : "P5") << "\n"
        << img.width << " " << img.height << "\n255\n";
    std::vector<uint8_t> row(static_cast<std::size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                const double v = std::clamp(img.at(x, y, c), 0.0, 1.0);
                row[static_cast<std::size_t>(x) * img.channels + c] =
                    static_cast<uint8_t>(std::lround(v * 255.0));
            }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) fail(path, "write failed");
}

ImageBuffer load_pfm(const std::string& path) {
    const auto buf = read_file(path);
    if (buf.size() < 2 || buf[0] != 'P' || (buf[1] != 'f' && buf[1] != 'F'))
        fail(path, "not a PFM");
    const int channels = buf[1] == 'F' ? 3 : 1;
    std::size_t pos = 2;
    const int w = next_pnm_int(buf, pos);
    const int h = next_pnm_int(buf, pos);
    while (pos < buf.size() && std::isspace(buf[pos])) ++pos;
    // scale line (sign = endianness)
    std::size_t end = pos;
    while (end < buf.size() && buf[end] != '\n') ++end;
    const double scale = std::stod(std::string(buf.begin() + static_cast<long>(pos), buf.begin() + static_cast<long>(end)));
    if (scale >= 0) fail(path, "big-endian PFM not supported");
    pos = end + 1;
    const std::size_t need = static_cast<std::size_t>(w) * h * channels * 4;
    if (buf.size() - pos < need) fail(path, "truncated pixel data");
    ImageBuffer img(w, h, channels);
    for (int y = 0; y < h; ++y) {
        const int src_y = h - 1 - y;  // PFM rows are bottom-up
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) {
                float f;
                std::memcpy(&f, buf.data() + pos + ((static_cast<std::size_t>(src_y) * w + x) * channels + c) * 4, 4);
                img.at(x, y, c) = f;
            }
    }
    return img;
}

void save_pfm(const ImageBuffer& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3)
        throw std::runtime_error("save_pfm: 1 or 3 channels required");
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(path, "cannot open for write");
    out << (img.channels == 3 ? "PF" : "Pf") << "\n"
        << img.width << " " << img.height << "\n-1.0\n";
    std::vector<float> row(static_cast<std::size_t>(img.width) * img.channels);
    for (int y = img.height - 1; y >= 0; --y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                row[static_cast<std::size_t>(x) * img.channels + c] = static_cast<float>(img.at(x, y, c));
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
    }
    if (!out) fail(path, "write failed");
}

namespace {

uint32_t read_be32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    return pb <= pc ? b : c;
}

}  // namespace

ImageBuffer load_png(const std::string& path) {
    const auto buf = read_file(path);
    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (buf.size() < 8 || std::memcmp(buf.data(), sig, 8) != 0) fail(path, "not a PNG");

    uint32_t w = 0, h = 0;
    int bit_depth = 0, color_type = 0, interlace = 0;
    std::vector<uint8_t> idat;
    std::size_t pos = 8;
    while (pos + 8 <= buf.size()) {
        const uint32_t len = read_be32(buf.data() + pos);
        const char* type = reinterpret_cast<const char*>(buf.data() + pos + 4);
        const uint8_t* payload = buf.data() + pos + 8;
        if (pos + 12 + len > buf.size()) fail(path, "truncated chunk");
        if (std::memcmp(type, "IHDR", 4) == 0) {
            w = read_be32(payload);
            h = read_be32(payload + 4);
            bit_depth = payload[8];
            color_type = payload[9];
            interlace = payload[12];
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (w == 0 || h == 0) fail(path, "missing IHDR");
    if (bit_depth != 8) fail(path, "only 8-bit PNG supported");
    if (interlace != 0) fail(path, "interlaced PNG not supported");
    int src_channels;
    switch (color_type) {
        case 0: src_channels = 1; break;
        case 2: src_channels = 3; break;
        case 4: src_channels = 2; break;
        case 6: src_channels = 4; break;
        default: fail(path, "palette PNG not supported");
    }

    const std::size_t stride = static_cast<std::size_t>(w) * src_channels;
    std::vector<uint8_t> raw((stride + 1) * h);
    {
        z_stream zs{};
        if (inflateInit(&zs) != Z_OK) fail(path, "zlib init failed");
        zs.next_in = idat.data();
        zs.avail_in = static_cast<uInt>(idat.size());
        zs.next_out = raw.data();
        zs.avail_out = static_cast<uInt>(raw.size());
        const int rc = inflate(&zs, Z_FINISH);
        inflateEnd(&zs);
        if (rc != Z_STREAM_END) fail(path, "zlib inflate failed");
    }

    std::vector<uint8_t> pixels(stride * h);
    const int bpp = src_channels;
    for (uint32_t y = 0; y < h; ++y) {
        const uint8_t filter = raw[(stride + 1) * y];
        const uint8_t* src = raw.data() + (stride + 1) * y + 1;
        uint8_t* dst = pixels.data() + stride * y;
        const uint8_t* up = y > 0 ? pixels.data() + stride * (y - 1) : nullptr;
        for (std::size_t i = 0; i < stride; ++i) {
            const int left = i >= static_cast<std::size_t>(bpp) ? dst[i - bpp] : 0;
            const int above = up ? up[i] : 0;
            const int corner = (up && i >= static_cast<std::size_t>(bpp)) ? up[i - bpp] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += left; break;
                case 2: v += above; break;
                case 3: v += (left + above) / 2; break;
                case 4: v += paeth(left, above, corner); break;
                default: fail(path, "bad filter byte");
            }
            dst[i] = static_cast<uint8_t>(v);
        }
    }

    const int out_channels = src_channels >= 3 ? 3 : 1;
    ImageBuffer img(static_cast<int>(w), static_cast<int>(h), out_channels);
    for (uint32_t y = 0; y < h; ++y)
        for (uint32_t x = 0; x < w; ++x)
            for (int c = 0; c < out_channels; ++c)
                img.at(static_cast<int>(x), static_cast<int>(y), c) =
                    pixels[stride * y + x * src_channels + c] / 255.0;
    return img;
}

ImageBuffer load_image(const std::string& path) {
    const auto dot = path.rfind('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    if (ext == ".png" || ext == ".PNG") return load_png(path);
    if (ext == ".pfm" || ext == ".PFM") return load_pfm(path);
    return load_ppm(path);
}

}  // namespace csplat
