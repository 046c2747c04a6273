#pragma once

#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "iagc/errors.hpp"
#include "iagc/tensor.hpp"

namespace iagc {

// Binary PPM (P6), 8-bit, maxval 255. Values map v/255 on read; writes round
// half-up and clamp. Files written here use the canonical header
// "P6\n<w> <h>\n255\n", so write(read(x)) is byte-identical for our output.

namespace detail {

inline int ppm_token(std::istream& in) {
    // skip whitespace and '#' comments, then parse a non-negative integer
    int c = in.get();
    for (;;) {
        while (c != EOF && std::isspace(c)) c = in.get();
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
            continue;
        }
        break;
    }
    if (c == EOF || !std::isdigit(c)) throw FormatError("malformed PPM header");
    long v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        if (v > 1 << 30) throw FormatError("PPM header value out of range");
        c = in.get();
    }
    if (c != EOF) in.unget();
    return int(v);
}

}  // namespace detail

template <class T = float>
BasicTensor<T> read_image(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open image: " + path);
    char magic[2] = {0, 0};
    f.read(magic, 2);
    if (!f || magic[0] != 'P') throw FormatError("not a PNM file: " + path);
    if (magic[1] != '6')
        throw UnsupportedFormat("only binary PPM (P6) is supported, got P" + std::string(1, magic[1]));
    const int w = detail::ppm_token(f);
    const int h = detail::ppm_token(f);
    const int maxval = detail::ppm_token(f);
    if (w <= 0 || h <= 0) throw FormatError("bad PPM dimensions");
    if (maxval != 255) throw UnsupportedFormat("only maxval 255 PPM is supported");
    f.get();  // single whitespace after maxval
    std::vector<unsigned char> raw(std::size_t(w) * h * 3);
    f.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (std::size_t(f.gcount()) != raw.size()) throw FormatError("PPM payload truncated: " + path);

    std::vector<T> data(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) data[i] = T(raw[i]) / T(255);
    return BasicTensor<T>::from_data({std::size_t(h), std::size_t(w), 3}, std::move(data));
}

template <class T>
void write_image(const std::string& path, const BasicTensor<T>& image) {
    if (image.rank() != 3 || image.dim(2) != 3)
        throw ShapeError("write_image: expected [H,W,3], got " + shape_str(image.shape()));
    const std::size_t h = image.dim(0), w = image.dim(1);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> raw(image.numel());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double v = std::floor(double(image[i]) * 255.0 + 0.5);  // round half up
        raw[i] = (unsigned char)(v < 0 ? 0 : (v > 255 ? 255 : v));
    }
    f.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
    if (!f) throw IoError("short write: " + path);
}

// Grayscale dump of a [H,W,1] map as P6 with equal channels.
template <class T>
void write_gray_image(const std::string& path, const BasicTensor<T>& map) {
    if (map.rank() != 3 || map.dim(2) != 1)
        throw ShapeError("write_gray_image: expected [H,W,1]");
    const std::size_t h = map.dim(0), w = map.dim(1);
    std::vector<T> rgb(h * w * 3);
    for (std::size_t i = 0; i < h * w; ++i) rgb[i * 3] = rgb[i * 3 + 1] = rgb[i * 3 + 2] = map[i];
    write_image(path, BasicTensor<T>::from_data({h, w, 3}, std::move(rgb)));
}

}  // namespace iagc
