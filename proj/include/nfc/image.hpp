#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "nfc/errors.hpp"

namespace nfc {

// H x W x 3 image, row-major, values nominally in [0,1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> rgb;

    Image() = default;
    Image(int w, int h) : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3, 0.0) {}

    size_t pixel_count() const { return static_cast<size_t>(width) * height; }
    double& at(int x, int y, int c) { return rgb[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    double at(int x, int y, int c) const { return rgb[(static_cast<size_t>(y) * width + x) * 3 + c]; }
};

inline uint8_t quantize_byte(double v) {
    v = std::min(1.0, std::max(0.0, v));
    return static_cast<uint8_t>(std::lround(v * 255.0));
}

// Binary P6, maxval 255, layout "P6\n<W> <H>\n255\n" + RGB bytes row-major.
inline void ppm_write(const Image& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path);
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<uint8_t> bytes;
    bytes.reserve(img.rgb.size());
    for (double v : img.rgb) bytes.push_back(quantize_byte(v));
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path);
}

namespace detail {
// Reads one whitespace-delimited token, skipping '#' comment lines.
inline std::string ppm_token(std::istream& in) {
    std::string tok;
    int c = in.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#')
            while (c != EOF && c != '\n') c = in.get();
        c = in.get();
    }
    while (c != EOF && !std::isspace(c)) {
        tok += static_cast<char>(c);
        c = in.get();
    }
    return tok;
}
}  // namespace detail

inline Image ppm_read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for read: " + path);
    std::string magic = detail::ppm_token(f);
    if (magic != "P6") throw IoError("unsupported PPM format '" + magic + "' (binary P6 required): " + path);
    std::string ws = detail::ppm_token(f), hs = detail::ppm_token(f), ms = detail::ppm_token(f);
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(ws);
        h = std::stoi(hs);
        maxval = std::stoi(ms);
    } catch (const std::exception&) {
        throw IoError("malformed PPM header: " + path);
    }
    if (w <= 0 || h <= 0) throw IoError("bad PPM dimensions in " + path);
    if (maxval != 255) throw IoError("PPM maxval must be 255, got " + std::to_string(maxval) + ": " + path);
    std::vector<uint8_t> bytes(static_cast<size_t>(w) * h * 3);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (f.gcount() != static_cast<std::streamsize>(bytes.size())) throw IoError("truncated PPM payload: " + path);
    Image img(w, h);
    for (size_t i = 0; i < bytes.size(); ++i) img.rgb[i] = bytes[i] / 255.0;
    return img;
}

}  // namespace nfc
