#pragma once

// Planar float images and binary PPM/PGM serialization. Pixel (u, v) lives
// at matrix entry (v, u); values are scalars in [0,1] unless stated.

#include <handfit/core.hpp>

#include <array>
#include <cmath>
#include <fstream>
#include <string>

namespace handfit {

using ImageRGB = std::array<MatX, 3>;

inline ImageRGB make_image_rgb(int height, int width, double fill = 0.0) {
    ImageRGB img;
    for (auto& ch : img) ch = MatX::Constant(height, width, fill);
    return img;
}

namespace detail {

inline unsigned char to_byte(double v) {
    double c = std::min(1.0, std::max(0.0, v));
    return static_cast<unsigned char>(std::lround(c * 255.0));
}

inline int read_pnm_token(std::istream& in) {
    // skips whitespace and # comments, then reads one nonnegative integer
    int c = in.get();
    while (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '#') {
        if (c == '#')
            while (c != '\n' && c != EOF) c = in.get();
        c = in.get();
    }
    if (c < '0' || c > '9') throw io_error("malformed image header");
    int value = 0;
    while (c >= '0' && c <= '9') {
        value = value * 10 + (c - '0');
        c = in.get();
    }
    if (c != EOF) in.unget();
    return value;
}

}  // namespace detail

inline void write_ppm(const std::string& path, const ImageRGB& img) {
    int h = int(img[0].rows()), w = int(img[0].cols());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out << "P6\n" << w << " " << h << "\n255\n";
    std::string buf;
    buf.reserve(std::size_t(w * h * 3));
    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u)
            for (int c = 0; c < 3; ++c) buf.push_back(char(detail::to_byte(img[std::size_t(c)](v, u))));
    out.write(buf.data(), long(buf.size()));
    if (!out) throw io_error("write failed: " + path);
}

inline void write_pgm(const std::string& path, const MatX& img) {
    int h = int(img.rows()), w = int(img.cols());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out << "P5\n" << w << " " << h << "\n255\n";
    std::string buf;
    buf.reserve(std::size_t(w * h));
    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) buf.push_back(char(detail::to_byte(img(v, u))));
    out.write(buf.data(), long(buf.size()));
    if (!out) throw io_error("write failed: " + path);
}

inline ImageRGB read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path);
    if (in.get() != 'P' || in.get() != '6') throw io_error(path + ": not a P6 ppm");
    int w = detail::read_pnm_token(in);
    int h = detail::read_pnm_token(in);
    int maxval = detail::read_pnm_token(in);
    if (maxval != 255) throw io_error(path + ": only 8-bit images supported");
    in.get();  // the single whitespace before the raster
    std::string buf(std::size_t(w * h * 3), '\0');
    in.read(buf.data(), long(buf.size()));
    if (in.gcount() != long(buf.size())) throw io_error(path + ": truncated raster");
    ImageRGB img = make_image_rgb(h, w);
    std::size_t k = 0;
    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u)
            for (int c = 0; c < 3; ++c)
                img[std::size_t(c)](v, u) = double(static_cast<unsigned char>(buf[k++])) / 255.0;
    return img;
}

}  // namespace handfit
