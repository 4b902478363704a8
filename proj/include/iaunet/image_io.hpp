#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iaunet/tensor.hpp"

namespace iaunet::data {

// Interleaved 8-bit raster (1 = grayscale, 3 = RGB).
struct Image8 {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t& at(int y, int x, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

// 8-bit PNG codec. Palette images are expanded, alpha is stripped; 16-bit
// files are rejected with an explicit unsupported-format error.
Image8 read_png(const std::string& path);
void write_png(const std::string& path, const Image8& img);

// Tensor conversions used by the pipeline: images are [3,H,W] floats in
// [0,1]; grayscale sources are replicated across channels.
nn::Tensor<float> read_image(const std::string& path);
void write_image(const std::string& path, const nn::Tensor<float>& chw);

// Binary masks are stored as {0,255} grayscale PNGs and load as {0,1}
// float maps; multiclass masks hold raw class indices.
nn::Tensor<float> read_mask(const std::string& path, bool binary = true, int num_classes = 1);
void write_mask(const std::string& path, const nn::Tensor<float>& mask, bool binary = true);

}  // namespace iaunet::data
