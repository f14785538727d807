#include "tns/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace tns::img {

double srgb_to_linear(double s) {
  return s <= 0.04045 ? s / 12.92 : std::pow((s + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double c) {
  if (c <= 0) return 0;
  if (c >= 1) return 1;
  return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

std::uint8_t quantize_srgb(double linear) {
  const double s = linear_to_srgb(linear);
  const int v = static_cast<int>(std::lround(s * 255.0));
  return static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_png(const std::string& path, const ImageU8& image) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y)
    png_write_row(png, const_cast<png_bytep>(image.pixel(0, y)));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageU8 read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png read failed: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  ImageU8 image;
  image.width = static_cast<int>(png_get_image_width(png, info));
  image.height = static_cast<int>(png_get_image_height(png, info));
  image.rgb.resize(static_cast<size_t>(image.width) * image.height * 3);
  for (int y = 0; y < image.height; ++y) png_read_row(png, image.pixel(0, y), nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

void write_pfm(const std::string& path, const DepthImage& depth) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "Pf\n" << depth.width << " " << depth.height << "\n-1.0\n";
  // -1.0 scale marks little-endian; rows bottom first.
  for (int y = depth.height - 1; y >= 0; --y)
    f.write(reinterpret_cast<const char*>(depth.values.data() + static_cast<size_t>(y) * depth.width),
            static_cast<std::streamsize>(sizeof(float)) * depth.width);
  if (!f) throw std::runtime_error("pfm write failed: " + path);
}

DepthImage read_pfm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::string tag;
  f >> tag;
  if (tag != "Pf") throw std::runtime_error("not a grayscale PFM: " + path);
  DepthImage depth;
  double scale = 0;
  f >> depth.width >> depth.height >> scale;
  if (!f || depth.width <= 0 || depth.height <= 0 || scale >= 0)
    throw std::runtime_error("bad PFM header (expect little-endian): " + path);
  f.get();  // single whitespace after the header
  depth.values.resize(static_cast<size_t>(depth.width) * depth.height);
  for (int y = depth.height - 1; y >= 0; --y)
    f.read(reinterpret_cast<char*>(depth.values.data() + static_cast<size_t>(y) * depth.width),
           static_cast<std::streamsize>(sizeof(float)) * depth.width);
  if (!f) throw std::runtime_error("truncated PFM: " + path);
  return depth;
}

}  // namespace tns::img
