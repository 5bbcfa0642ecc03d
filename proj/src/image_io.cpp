#include "dadet/image_io.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dadet/common.hpp"

namespace dadet {

namespace {

std::uint8_t to_byte(float v, const std::string& path) {
    float scaled = v * 255.f;
    float rounded = std::round(scaled);
    if (std::abs(scaled - rounded) > 1e-3f || rounded < 0.f || rounded > 255.f)
        throw IoError("write_ppm: pixel value off the 1/255 grid in " + path);
    return static_cast<std::uint8_t>(rounded);
}

// Reads one whitespace-delimited token, skipping '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (!std::isspace(c)) {
            tok.push_back(static_cast<char>(c));
            while ((c = in.get()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(c));
            break;
        }
    }
    return tok;
}

}  // namespace

void write_ppm(const std::string& path, const Tensor<float>& pixels) {
    if (pixels.shape.size() != 3 || pixels.dim(0) != 3)
        throw ArgumentError("write_ppm: expected {3, H, W} tensor");
    const int h = pixels.dim(1), w = pixels.dim(2);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_ppm: cannot open " + path);
    out << "P6\n" << w << " " << h << "\n255\n";
    std::vector<std::uint8_t> row(static_cast<size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                row[static_cast<size_t>(x) * 3 + c] = to_byte(pixels.at(c, y, x), path);
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw IoError("write_ppm: short write to " + path);
}

Tensor<float> read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_ppm: cannot open " + path);
    if (next_token(in) != "P6") throw IoError("read_ppm: not a P6 file: " + path);
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(next_token(in));
        h = std::stoi(next_token(in));
        maxval = std::stoi(next_token(in));
    } catch (const std::exception&) {
        throw IoError("read_ppm: malformed header in " + path);
    }
    if (w <= 0 || h <= 0 || maxval != 255) throw IoError("read_ppm: unsupported header in " + path);
    Tensor<float> pixels({3, h, w});
    std::vector<std::uint8_t> row(static_cast<size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!in) throw IoError("read_ppm: truncated pixel data in " + path);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                pixels.at(c, y, x) = static_cast<float>(row[static_cast<size_t>(x) * 3 + c]) / 255.f;
    }
    return pixels;
}

void write_pfm(const std::string& path, const Tensor<float>& field) {
    if (field.shape.size() != 2) throw ArgumentError("write_pfm: expected {H, W} tensor");
    const int h = field.dim(0), w = field.dim(1);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_pfm: cannot open " + path);
    out << "Pf\n" << w << " " << h << "\n-1.0\n";  // negative scale: little-endian
    // PFM rows run bottom-to-top.
    for (int y = h - 1; y >= 0; --y)
        out.write(reinterpret_cast<const char*>(&field.data[static_cast<size_t>(y) * w]),
                  static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(w)));
    if (!out) throw IoError("write_pfm: short write to " + path);
}

Tensor<float> read_pfm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_pfm: cannot open " + path);
    if (next_token(in) != "Pf") throw IoError("read_pfm: not a grayscale PFM: " + path);
    int w = 0, h = 0;
    float scale = 0.f;
    try {
        w = std::stoi(next_token(in));
        h = std::stoi(next_token(in));
        scale = std::stof(next_token(in));
    } catch (const std::exception&) {
        throw IoError("read_pfm: malformed header in " + path);
    }
    if (w <= 0 || h <= 0 || scale >= 0.f) throw IoError("read_pfm: unsupported header in " + path);
    Tensor<float> field({h, w});
    for (int y = h - 1; y >= 0; --y) {
        in.read(reinterpret_cast<char*>(&field.data[static_cast<size_t>(y) * w]),
                static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(w)));
        if (!in) throw IoError("read_pfm: truncated data in " + path);
    }
    return field;
}

void write_pgm(const std::string& path, const Tensor<float>& gray) {
    if (gray.shape.size() != 2) throw ArgumentError("write_pgm: expected {H, W} tensor");
    const int h = gray.dim(0), w = gray.dim(1);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_pgm: cannot open " + path);
    out << "P5\n" << w << " " << h << "\n255\n";
    std::vector<std::uint8_t> row(static_cast<size_t>(w));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float v = std::min(1.f, std::max(0.f, gray.at(y, x)));
            row[static_cast<size_t>(x)] = static_cast<std::uint8_t>(std::lround(v * 255.f));
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw IoError("write_pgm: short write to " + path);
}

}  // namespace dadet
