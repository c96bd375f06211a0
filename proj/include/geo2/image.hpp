#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace geo2 {

// Interleaved 8-bit RGB image, row-major, origin at the top-left pixel.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> data;  // height * width * 3

    Image() = default;
    Image(int w, int h, std::array<uint8_t, 3> fill = {0, 0, 0});

    uint8_t& at(int x, int y, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    uint8_t at(int x, int y, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    void set(int x, int y, std::array<uint8_t, 3> rgb);
    std::array<uint8_t, 3> get(int x, int y) const;
    bool inside(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
    uint64_t pixel_hash() const;
};

// Planar float image, one Eigen row per channel, pixel (x, y) at column y*width+x.
// Values conventionally in [0, 1] unless stated otherwise.
struct ImageF {
    int width = 0;
    int height = 0;
    Eigen::MatrixXd planes;  // 3 x (height*width)

    ImageF() = default;
    ImageF(int w, int h);

    double at(int x, int y, int c) const { return planes(c, static_cast<Eigen::Index>(y) * width + x); }
    double& at(int x, int y, int c) { return planes(c, static_cast<Eigen::Index>(y) * width + x); }
};

ImageF to_float(const Image& img);
Image to_uint8(const ImageF& img);  // clamps to [0,1] and rounds

// Bilinear resize with the pixel-center convention (pixel i covers [i, i+1),
// its center sits at i+0.5); edges clamp.
Image resize_bilinear(const Image& src, int out_w, int out_h);
ImageF resize_bilinear(const ImageF& src, int out_w, int out_h);

// Bilinear sample at continuous (u, v) in pixel units. Horizontal wrap is
// modulo width when wrap_x is set (equirectangular seam), vertical always
// clamps. Returns one channel.
double sample_bilinear(const Image& src, double u, double v, int c, bool wrap_x);
double sample_bilinear(const ImageF& src, double u, double v, int c, bool wrap_x);

void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

// Grayscale (luma) plane of an 8-bit image, values in [0, 255].
Eigen::MatrixXd luma(const Image& img);

}  // namespace geo2
