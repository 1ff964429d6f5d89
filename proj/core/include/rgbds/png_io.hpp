#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rgbds {

struct Rgb8Image {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data;  // interleaved r,g,b
};

struct Gray16Image {
  int width = 0;
  int height = 0;
  std::vector<uint16_t> data;
};

/// Reads an 8-bit PNG as RGB (gray and RGBA inputs are expanded/stripped).
/// Throws std::runtime_error on I/O or decode failure, and when handed a
/// 16-bit file.
Rgb8Image read_png_rgb8(const std::string& path);

/// Reads a 16-bit single-channel PNG. Throws when the file is not 16-bit
/// grayscale.
Gray16Image read_png_gray16(const std::string& path);

void write_png_rgb8(const std::string& path, const Rgb8Image& img);
void write_png_gray16(const std::string& path, const Gray16Image& img);

}  // namespace rgbds
