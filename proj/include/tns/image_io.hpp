#pragma once

// PNG (8-bit sRGB) and PFM (32-bit float, grayscale) file I/O plus the sRGB
// transfer. In-memory layout is row-major, top row first; PFM files store
// rows bottom-up as their header demands.

#include <cstdint>
#include <string>
#include <vector>

namespace tns::img {

struct ImageU8 {
  int width = 0, height = 0;
  std::vector<std::uint8_t> rgb;  // 3 bytes per pixel, row-major, top-down

  std::uint8_t* pixel(int x, int y) { return rgb.data() + 3 * (y * width + x); }
  const std::uint8_t* pixel(int x, int y) const { return rgb.data() + 3 * (y * width + x); }
};

struct DepthImage {
  int width = 0, height = 0;
  std::vector<float> values;  // row-major, top-down; 0 marks invalid

  float at(int x, int y) const { return values[y * width + x]; }
  float& at(int x, int y) { return values[y * width + x]; }
};

double srgb_to_linear(double s);
double linear_to_srgb(double c);
std::uint8_t quantize_srgb(double linear);

void write_png(const std::string& path, const ImageU8& image);
ImageU8 read_png(const std::string& path);

void write_pfm(const std::string& path, const DepthImage& depth);
DepthImage read_pfm(const std::string& path);

}  // namespace tns::img
