#include "gcanet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace gcanet {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Tensor read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("read_png: cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("read_png: libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("read_png: " + path + " is not a valid PNG");
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    // normalize every input variant to 8-bit RGB
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    png_set_strip_alpha(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    const int64_t h = png_get_image_height(png, info);
    const int64_t w = png_get_image_width(png, info);
    std::vector<png_byte> rowbuf(png_get_rowbytes(png, info));
    Tensor out(Shape{1, 3, h, w});
    for (int64_t y = 0; y < h; ++y) {
        png_read_row(png, rowbuf.data(), nullptr);
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < 3; ++c)
                out.at(0, c, y, x) = rowbuf[x * 3 + c] / 255.0;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void write_png(const std::string& path, const Tensor& image) {
    const Shape s = image.shape();
    if (s.n != 1 || s.c != 3)
        throw std::invalid_argument("write_png: expected (1,3,h,w), got " + s.str());

    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("write_png: cannot open " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("write_png: libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("write_png: failed writing " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(s.w), static_cast<png_uint_32>(s.h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);

    std::vector<png_byte> row(static_cast<size_t>(s.w) * 3);
    for (int64_t y = 0; y < s.h; ++y) {
        for (int64_t x = 0; x < s.w; ++x)
            for (int64_t c = 0; c < 3; ++c)
                row[x * 3 + c] = static_cast<png_byte>(
                    std::lround(std::clamp(image.at(0, c, y, x), 0.0, 1.0) * 255.0));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace gcanet
