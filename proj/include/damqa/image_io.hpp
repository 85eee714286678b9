#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "damqa/views.hpp"

namespace damqa {

/// Decodes a PNG or JPEG file (sniffed from its magic bytes) into RGB.
/// Grayscale is expanded, alpha is dropped, 16-bit PNG is reduced to 8 bits.
ImageBuffer load_image(const std::filesystem::path& path);
ImageBuffer decode_image(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_png(const ImageBuffer& img);
std::vector<std::uint8_t> encode_png(const MaskBuffer& mask);

/// Decodes an 8-bit grayscale PNG as produced by encode_png(MaskBuffer).
MaskBuffer decode_mask_png(std::span<const std::uint8_t> bytes);

void save_png(const std::filesystem::path& path, const ImageBuffer& img);

}  // namespace damqa
