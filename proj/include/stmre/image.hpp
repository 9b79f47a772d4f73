#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "stmre/layers.hpp"

namespace stmre {

/// Decodes PNG or binary/ASCII PGM/PPM bytes to a [C, H, W] tensor in [0, 1]
/// with C = 1 (gray) or 3 (RGB). `origin` only labels error messages.
Tensor decode_image(std::span<const std::uint8_t> bytes, const std::string& origin);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Bilinear resize of a [C, H, W] image with half-pixel centres. Returns the
/// input unchanged when the size already matches.
Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w);

/// Decode, replicate gray to 3 channels if needed, resize to `target`, clamp to [0, 1].
Tensor decode_resize(std::span<const std::uint8_t> bytes, const ImageShape& target, const std::string& origin);

Tensor load_image(const std::filesystem::path& path, const ImageShape& target);

/// 8-bit binary PGM (C = 1) or PPM (C = 3); values are clamped and rounded.
void write_pnm(const std::filesystem::path& path, const Tensor& image);

void write_png(const std::filesystem::path& path, const Tensor& image);

}  // namespace stmre
