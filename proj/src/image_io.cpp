#include "iaunet/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

namespace iaunet::data {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image8 read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open image: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("corrupt or unreadable PNG: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const int bit_depth = png_get_bit_depth(png, info);
    if (bit_depth == 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unsupported bit depth 16 (only 8-bit PNGs are supported): " + path);
    }
    const int color_type = png_get_color_type(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    Image8 img;
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.channels = static_cast<int>(png_get_channels(png, info));
    if (img.channels != 1 && img.channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unsupported channel count " + std::to_string(img.channels) + ": " + path);
    }
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y)
        rows[static_cast<std::size_t>(y)] = img.pixels.data() + static_cast<std::size_t>(y) * img.width * img.channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const std::string& path, const Image8& img) {
    if (img.channels != 1 && img.channels != 3) throw UsageError("write_png: channels must be 1 or 3");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open image for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y)
        rows[static_cast<std::size_t>(y)] =
            const_cast<png_bytep>(img.pixels.data() + static_cast<std::size_t>(y) * img.width * img.channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

nn::Tensor<float> read_image(const std::string& path) {
    Image8 img = read_png(path);
    nn::Tensor<float> out({3, img.height, img.width});
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const std::uint8_t v = img.channels == 1 ? img.at(y, x, 0) : img.at(y, x, c);
                out[(static_cast<std::int64_t>(c) * img.height + y) * img.width + x] =
                    static_cast<float>(v) / 255.0f;
            }
    return out;
}

void write_image(const std::string& path, const nn::Tensor<float>& chw) {
    if (chw.ndim() != 3 || chw.dim(0) != 3) throw UsageError("write_image: expects [3,H,W]");
    Image8 img;
    img.height = chw.dim(1);
    img.width = chw.dim(2);
    img.channels = 3;
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                float v = chw[(static_cast<std::int64_t>(c) * img.height + y) * img.width + x];
                v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
                img.at(y, x, c) = static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
    write_png(path, img);
}

nn::Tensor<float> read_mask(const std::string& path, bool binary, int num_classes) {
    Image8 img = read_png(path);
    if (img.channels != 1) throw ValidationError("mask must be grayscale: " + path);
    nn::Tensor<float> out({1, img.height, img.width});
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const std::uint8_t v = img.at(y, x, 0);
            if (binary) {
                if (v != 0 && v != 255)
                    throw ValidationError("mask " + path + " is not binary: found value " + std::to_string(v));
                out[static_cast<std::int64_t>(y) * img.width + x] = v == 255 ? 1.0f : 0.0f;
            } else {
                if (v >= num_classes)
                    throw ValidationError("mask " + path + " has class " + std::to_string(v) + " >= num_classes " +
                                          std::to_string(num_classes));
                out[static_cast<std::int64_t>(y) * img.width + x] = static_cast<float>(v);
            }
        }
    return out;
}

void write_mask(const std::string& path, const nn::Tensor<float>& mask, bool binary) {
    if (mask.ndim() != 3 || mask.dim(0) != 1) throw UsageError("write_mask: expects [1,H,W]");
    Image8 img;
    img.height = mask.dim(1);
    img.width = mask.dim(2);
    img.channels = 1;
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const float v = mask[static_cast<std::int64_t>(y) * img.width + x];
            img.at(y, x, 0) = binary ? (v >= 0.5f ? 255 : 0) : static_cast<std::uint8_t>(v);
        }
    write_png(path, img);
}

}  // namespace iaunet::data
