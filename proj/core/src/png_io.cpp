#include "rgbds/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>

namespace rgbds {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::string& path, const char* what) {
  throw std::runtime_error(path + ": " + what);
}

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FilePtr file;

  explicit PngReader(const std::string& path) {
    file.reset(std::fopen(path.c_str(), "rb"));
    if (!file) fail(path, "cannot open for reading");
    png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                 nullptr);
    info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) fail(path, "libpng init failed");
    png_init_io(png, file.get());
  }
  ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FilePtr file;

  explicit PngWriter(const std::string& path) {
    file.reset(std::fopen(path.c_str(), "wb"));
    if (!file) fail(path, "cannot open for writing");
    png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                  nullptr);
    info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) fail(path, "libpng init failed");
    png_init_io(png, file.get());
  }
  ~PngWriter() { png_destroy_write_struct(&png, &info); }
};

}  // namespace

Rgb8Image read_png_rgb8(const std::string& path) {
  PngReader r(path);
  if (setjmp(png_jmpbuf(r.png))) fail(path, "png decode error");
  png_read_info(r.png, r.info);

  const int bit_depth = png_get_bit_depth(r.png, r.info);
  if (bit_depth > 8) fail(path, "expected an 8-bit image");
  const int color = png_get_color_type(r.png, r.info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(r.png);
  }
  if (bit_depth < 8) png_set_expand(r.png);
  png_set_strip_alpha(r.png);
  png_read_update_info(r.png, r.info);

  Rgb8Image img;
  img.width = static_cast<int>(png_get_image_width(r.png, r.info));
  img.height = static_cast<int>(png_get_image_height(r.png, r.info));
  img.data.resize(static_cast<size_t>(img.width) * img.height * 3);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) {
    rows[y] = img.data.data() + static_cast<size_t>(y) * img.width * 3;
  }
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  return img;
}

Gray16Image read_png_gray16(const std::string& path) {
  PngReader r(path);
  if (setjmp(png_jmpbuf(r.png))) fail(path, "png decode error");
  png_read_info(r.png, r.info);

  if (png_get_bit_depth(r.png, r.info) != 16 ||
      png_get_color_type(r.png, r.info) != PNG_COLOR_TYPE_GRAY) {
    fail(path, "expected a 16-bit grayscale image");
  }
  png_set_swap(r.png);  // PNG is big-endian on disk
  png_read_update_info(r.png, r.info);

  Gray16Image img;
  img.width = static_cast<int>(png_get_image_width(r.png, r.info));
  img.height = static_cast<int>(png_get_image_height(r.png, r.info));
  img.data.resize(static_cast<size_t>(img.width) * img.height);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) {
    rows[y] = reinterpret_cast<png_bytep>(img.data.data() +
                                          static_cast<size_t>(y) * img.width);
  }
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  return img;
}

void write_png_rgb8(const std::string& path, const Rgb8Image& img) {
  PngWriter w(path);
  if (setjmp(png_jmpbuf(w.png))) fail(path, "png encode error");
  png_set_IHDR(w.png, w.info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) {
    rows[y] = const_cast<png_bytep>(img.data.data() +
                                    static_cast<size_t>(y) * img.width * 3);
  }
  png_write_image(w.png, rows.data());
  png_write_end(w.png, nullptr);
}

void write_png_gray16(const std::string& path, const Gray16Image& img) {
  PngWriter w(path);
  if (setjmp(png_jmpbuf(w.png))) fail(path, "png encode error");
  png_set_IHDR(w.png, w.info, img.width, img.height, 16, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  png_set_swap(w.png);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) {
    rows[y] = reinterpret_cast<png_bytep>(
        const_cast<uint16_t*>(img.data.data()) +
        static_cast<size_t>(y) * img.width);
  }
  png_write_image(w.png, rows.data());
  png_write_end(w.png, nullptr);
}

}  // namespace rgbds
