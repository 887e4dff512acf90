#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "capsnet/tensor.hpp"

namespace capsnet {

/// 8-bit image, planar C x H x W.
struct Image8 {
    std::size_t channels = 0, height = 0, width = 0;
    std::vector<std::uint8_t> pixels;
};

/// Binary PGM (P5) or PPM (P6) with maxval <= 255.
Image8 read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const Image8& image);

/// x / 255 elementwise.
Tensor<float> rescale_u8(std::span<const std::uint8_t> pixels, const Shape& shape);
Tensor<float> rescale_u8(const Image8& image);

/// Round-to-nearest quantization of [0,1] values back to bytes.
Image8 quantize_u8(const Tensor<float>& image);

/// Bilinear resize of every channel with half-pixel centres and edge clamping.
Tensor<float> resize_bilinear(const Tensor<float>& image, std::size_t out_height, std::size_t out_width);

/// Channel conversion: RGB -> gray by mean, gray -> RGB by replication.
Tensor<float> convert_channels(const Tensor<float>& image, std::size_t channels);

}  // namespace capsnet
