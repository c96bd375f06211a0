#include "geo2/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "geo2/common.hpp"

namespace geo2 {

Image::Image(int w, int h, std::array<uint8_t, 3> fill) : width(w), height(h) {
    if (w <= 0 || h <= 0) throw UsageError("image dimensions must be positive");
    data.resize(static_cast<size_t>(w) * h * 3);
    for (size_t i = 0; i < data.size(); i += 3) {
        data[i] = fill[0];
        data[i + 1] = fill[1];
        data[i + 2] = fill[2];
    }
}

void Image::set(int x, int y, std::array<uint8_t, 3> rgb) {
    size_t o = (static_cast<size_t>(y) * width + x) * 3;
    data[o] = rgb[0];
    data[o + 1] = rgb[1];
    data[o + 2] = rgb[2];
}

std::array<uint8_t, 3> Image::get(int x, int y) const {
    size_t o = (static_cast<size_t>(y) * width + x) * 3;
    return {data[o], data[o + 1], data[o + 2]};
}

uint64_t Image::pixel_hash() const {
    uint64_t h = fnv1a(&width, sizeof(width));
    h = fnv1a(&height, sizeof(height), h);
    return fnv1a(data.data(), data.size(), h);
}

ImageF::ImageF(int w, int h) : width(w), height(h) {
    if (w <= 0 || h <= 0) throw UsageError("image dimensions must be positive");
    planes = Eigen::MatrixXd::Zero(3, static_cast<Eigen::Index>(w) * h);
}

ImageF to_float(const Image& img) {
    ImageF out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y, c) / 255.0;
    return out;
}

Image to_uint8(const ImageF& img) {
    Image out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = std::clamp(img.at(x, y, c), 0.0, 1.0);
                out.at(x, y, c) = static_cast<uint8_t>(std::lround(v * 255.0));
            }
    return out;
}

namespace {

// Shared bilinear kernel. Sampling position (u, v) is in pixel units; the
// weight is taken against pixel centers at integer+0.5.
template <typename GetFn>
double bilinear(GetFn&& get, int w, int h, double u, double v, bool wrap_x) {
    double su = u - 0.5;
    double sv = v - 0.5;
    double fu = std::floor(su);
    double fv = std::floor(sv);
    double au = su - fu;
    double av = sv - fv;
    int x0 = static_cast<int>(fu);
    int y0 = static_cast<int>(fv);
    int x1 = x0 + 1;
    int y1 = y0 + 1;
    if (wrap_x) {
        x0 = ((x0 % w) + w) % w;
        x1 = ((x1 % w) + w) % w;
    } else {
        x0 = std::clamp(x0, 0, w - 1);
        x1 = std::clamp(x1, 0, w - 1);
    }
    y0 = std::clamp(y0, 0, h - 1);
    y1 = std::clamp(y1, 0, h - 1);
    double v00 = get(x0, y0);
    double v10 = get(x1, y0);
    double v01 = get(x0, y1);
    double v11 = get(x1, y1);
    return (1 - au) * (1 - av) * v00 + au * (1 - av) * v10 + (1 - au) * av * v01 + au * av * v11;
}

}  // namespace

double sample_bilinear(const Image& src, double u, double v, int c, bool wrap_x) {
    return bilinear([&](int x, int y) { return static_cast<double>(src.at(x, y, c)); }, src.width,
                    src.height, u, v, wrap_x);
}

double sample_bilinear(const ImageF& src, double u, double v, int c, bool wrap_x) {
    return bilinear([&](int x, int y) { return src.at(x, y, c); }, src.width, src.height, u, v,
                    wrap_x);
}

Image resize_bilinear(const Image& src, int out_w, int out_h) {
    if (out_w <= 0 || out_h <= 0) throw UsageError("resize target must be positive");
    Image out(out_w, out_h);
    double sx = static_cast<double>(src.width) / out_w;
    double sy = static_cast<double>(src.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        double v = (y + 0.5) * sy;
        for (int x = 0; x < out_w; ++x) {
            double u = (x + 0.5) * sx;
            for (int c = 0; c < 3; ++c) {
                double s = sample_bilinear(src, u, v, c, false);
                out.at(x, y, c) = static_cast<uint8_t>(std::lround(std::clamp(s, 0.0, 255.0)));
            }
        }
    }
    return out;
}

ImageF resize_bilinear(const ImageF& src, int out_w, int out_h) {
    if (out_w <= 0 || out_h <= 0) throw UsageError("resize target must be positive");
    ImageF out(out_w, out_h);
    double sx = static_cast<double>(src.width) / out_w;
    double sy = static_cast<double>(src.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        double v = (y + 0.5) * sy;
        for (int x = 0; x < out_w; ++x) {
            double u = (x + 0.5) * sx;
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = sample_bilinear(src, u, v, c, false);
        }
    }
    return out;
}

void write_png(const std::string& path, const Image& img) {
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!fp) throw IoError("cannot open for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = const_cast<png_bytep>(img.data.data() + static_cast<size_t>(y) * img.width * 3);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const std::string& path) {
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
    if (!fp) throw IoError("cannot open: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png read failed: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    Image img(static_cast<int>(png_get_image_width(png, info)),
              static_cast<int>(png_get_image_height(png, info)));
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = img.data.data() + static_cast<size_t>(y) * img.width * 3;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

Eigen::MatrixXd luma(const Image& img) {
    Eigen::MatrixXd out(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            out(y, x) =
                0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
    return out;
}

}  // namespace geo2
