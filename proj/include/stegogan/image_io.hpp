#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stegogan/domain.hpp"

namespace stegogan {

// 8-bit PNG/JPEG/BMP via OpenCV. Colour images are returned as RGB.
Image8 read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image8& img);

// Nonzero pixels of a grayscale image become 1.
BinaryMask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const BinaryMask& mask);

// Regular files with an image extension, sorted by filename.
std::vector<std::string> list_images(const std::filesystem::path& dir);

}  // namespace stegogan
