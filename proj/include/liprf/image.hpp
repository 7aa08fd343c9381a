#pragma once

// RGB images with values in [0,1], 8-bit PNG/PPM I/O and PFM depth maps.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>

#include "liprf/common.hpp"

namespace liprf {

struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data;  // interleaved RGB, row-major

    Image() = default;
    Image(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

    [[nodiscard]] std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    [[nodiscard]] double at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    [[nodiscard]] Vec3 pixel(int x, int y) const {
        const double* p = &data[(static_cast<std::size_t>(y) * width + x) * 3];
        return {p[0], p[1], p[2]};
    }
    void set_pixel(int x, int y, const Vec3& c) {
        double* p = &data[(static_cast<std::size_t>(y) * width + x) * 3];
        p[0] = c.x();
        p[1] = c.y();
        p[2] = c.z();
    }
    [[nodiscard]] bool same_shape(const Image& o) const { return width == o.width && height == o.height; }
    bool operator==(const Image&) const = default;
};

/// Single-channel float map (used for depth).
struct ScalarMap {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    ScalarMap() = default;
    ScalarMap(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}
    double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    [[nodiscard]] double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

/// 8-bit quantization with round-half-up, clamped to [0,255].
inline std::uint8_t quantize8(double v) {
    const double q = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
    return static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
}

inline Image clamp01(Image img) {
    for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
    return img;
}

namespace detail {

inline std::string lower_extension(const std::filesystem::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

inline Image read_png(const std::filesystem::path& path) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_file(&img, path.string().c_str()) == 0) {
        throw Error("cannot read PNG '" + path.string() + "': " + img.message);
    }
    img.format = PNG_FORMAT_RGB;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
    if (png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr) == 0) {
        png_image_free(&img);
        throw Error("cannot decode PNG '" + path.string() + "': " + img.message);
    }
    Image out(static_cast<int>(img.width), static_cast<int>(img.height));
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = buf[i] / 255.0;
    return out;
}

inline void write_png(const Image& image, const std::filesystem::path& path) {
    std::vector<png_byte> buf(image.data.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = quantize8(image.data[i]);
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    img.format = PNG_FORMAT_RGB;
    if (png_image_write_to_file(&img, path.string().c_str(), 0, buf.data(), 0, nullptr) == 0) {
        throw Error("cannot write PNG '" + path.string() + "': " + img.message);
    }
}

inline void skip_pnm_space(std::istream& in) {
    while (true) {
        const int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            return;
        }
    }
}

inline Image read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open image '" + path.string() + "'");
    std::string magic;
    in >> magic;
    if (magic != "P6") throw Error("unsupported PPM variant in '" + path.string() + "'");
    int w = 0, h = 0, maxval = 0;
    skip_pnm_space(in);
    in >> w;
    skip_pnm_space(in);
    in >> h;
    skip_pnm_space(in);
    in >> maxval;
    in.get();
    if (!in || w < 1 || h < 1 || maxval != 255) throw Error("corrupt PPM header in '" + path.string() + "'");
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw Error("truncated PPM '" + path.string() + "'");
    Image out(w, h);
    for (std::size_t i = 0; i < buf.size(); ++i) out.data[i] = buf[i] / 255.0;
    return out;
}

inline void write_ppm(const Image& image, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write image '" + path.string() + "'");
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    std::vector<unsigned char> buf(image.data.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = quantize8(image.data[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw Error("I/O failure writing '" + path.string() + "'");
}

}  // namespace detail

/// Reads an 8-bit PNG or binary PPM (P6) into [0,1] RGB. Values are used as stored (no gamma).
inline Image read_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error("missing image '" + path.string() + "'");
    const std::string ext = detail::lower_extension(path);
    if (ext == ".png") return detail::read_png(path);
    if (ext == ".ppm") return detail::read_ppm(path);
    throw Error("unsupported image format '" + ext + "'");
}

/// Writes an image quantized to 8 bits with round-half-up. Format chosen by extension.
inline void write_image(const Image& image, const std::filesystem::path& path) {
    const std::string ext = detail::lower_extension(path);
    if (ext == ".png") return detail::write_png(image, path);
    if (ext == ".ppm") return detail::write_ppm(image, path);
    throw Error("unsupported image format '" + ext + "'");
}

/// Writes a little-endian grayscale PFM. Non-finite values are stored as-is.
inline void write_pfm(const ScalarMap& map, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << "Pf\n" << map.width << ' ' << map.height << "\n-1.0\n";
    // PFM stores rows bottom to top.
    for (int y = map.height - 1; y >= 0; --y) {
        for (int x = 0; x < map.width; ++x) {
            auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(map.at(x, y)));
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
            out.write(reinterpret_cast<const char*>(&bits), 4);
        }
    }
    if (!out) throw Error("I/O failure writing '" + path.string() + "'");
}

inline ScalarMap read_pfm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::string magic;
    int w = 0, h = 0;
    double scale = 0.0;
    in >> magic >> w >> h >> scale;
    in.get();
    if (magic != "Pf" || w < 1 || h < 1 || scale == 0.0) throw Error("not a grayscale PFM: '" + path.string() + "'");
    const bool little = scale < 0.0;
    ScalarMap map(w, h);
    for (int y = h - 1; y >= 0; --y) {
        for (int x = 0; x < w; ++x) {
            std::uint32_t bits = 0;
            in.read(reinterpret_cast<char*>(&bits), 4);
            if (!in) throw Error("truncated PFM '" + path.string() + "'");
            const bool native_little = std::endian::native == std::endian::little;
            if (little != native_little) bits = __builtin_bswap32(bits);
            map.at(x, y) = std::bit_cast<float>(bits);
        }
    }
    return map;
}

}  // namespace liprf
