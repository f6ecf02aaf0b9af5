#include "defectgen/core/io_png.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "defectgen/core/errors.hpp"

namespace defectgen {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

// Reads an 8-bit gray or RGB PNG into row-major bytes.
void read_png_bytes(const std::filesystem::path& path, std::vector<unsigned char>& bytes,
                    int& height, int& width, int& channels) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw DataError("cannot open PNG for reading: " + path.string());

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8))
    throw FormatError("not a PNG file: " + path.string());

  PngReader r;
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!r.png) throw Error("png_create_read_struct failed");
  r.info = png_create_info_struct(r.png);
  if (!r.info) throw Error("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(r.png))) throw FormatError("corrupt PNG data: " + path.string());

  png_init_io(r.png, fp.get());
  png_set_sig_bytes(r.png, 8);
  png_read_info(r.png, r.info);

  const int bit_depth = png_get_bit_depth(r.png, r.info);
  const int color_type = png_get_color_type(r.png, r.info);
  if (bit_depth != 8)
    throw FormatError("unsupported PNG bit depth (expected 8): " + path.string());
  if (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_RGB)
    throw FormatError("unsupported PNG color type (expected gray8 or rgb8): " +
                      path.string());

  height = static_cast<int>(png_get_image_height(r.png, r.info));
  width = static_cast<int>(png_get_image_width(r.png, r.info));
  channels = (color_type == PNG_COLOR_TYPE_GRAY) ? 1 : 3;

  bytes.resize(static_cast<std::size_t>(height) * width * channels);
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y)
    rows[static_cast<std::size_t>(y)] =
        bytes.data() + static_cast<std::size_t>(y) * width * channels;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
}

void write_png_bytes(const std::filesystem::path& path, const unsigned char* bytes,
                     int height, int width, int channels) {
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw DataError("cannot open PNG for writing: " + path.string());

  PngWriter w;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!w.png) throw Error("png_create_write_struct failed");
  w.info = png_create_info_struct(w.png);
  if (!w.info) throw Error("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(w.png))) throw DataError("PNG write failed: " + path.string());

  png_init_io(w.png, fp.get());
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(width),
               static_cast<png_uint_32>(height), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);

  std::vector<png_const_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y)
    rows[static_cast<std::size_t>(y)] =
        bytes + static_cast<std::size_t>(y) * width * channels;
  png_write_rows(w.png, const_cast<png_bytepp>(rows.data()),
                 static_cast<png_uint_32>(height));
  png_write_end(w.png, w.info);
}

}  // namespace

Image read_image_png(const std::filesystem::path& path) {
  std::vector<unsigned char> bytes;
  int h = 0, w = 0, c = 0;
  read_png_bytes(path, bytes, h, w, c);
  Image img(h, w, c);
  for (int ch = 0; ch < c; ++ch) {
    auto& p = img.plane(ch);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        p(y, x) = static_cast<float>(bytes[(static_cast<std::size_t>(y) * w + x) * c + ch]) /
                  255.0f;
  }
  return img;
}

void write_image_png(const std::filesystem::path& path, const Image& img) {
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  const int c = img.channels();
  if (c != 1 && c != 3) throw ShapeError("PNG output requires 1 or 3 channels");
  std::vector<unsigned char> bytes(static_cast<std::size_t>(h) * w * c);
  for (int ch = 0; ch < c; ++ch) {
    const auto& p = img.plane(ch);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const float v = std::min(1.0f, std::max(0.0f, p(y, x)));
        bytes[(static_cast<std::size_t>(y) * w + x) * c + ch] =
            static_cast<unsigned char>(std::lround(v * 255.0f));
      }
  }
  write_png_bytes(path, bytes.data(), h, w, c);
}

Mask read_mask_png(const std::filesystem::path& path) {
  std::vector<unsigned char> bytes;
  int h = 0, w = 0, c = 0;
  read_png_bytes(path, bytes, h, w, c);
  if (c != 1) throw FormatError("mask PNG must be single-channel: " + path.string());
  Mask m(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const unsigned char v = bytes[static_cast<std::size_t>(y) * w + x];
      if (v == 0)
        m(y, x) = 0;
      else if (v == 255)
        m(y, x) = 1;
      else
        throw FormatError("mask PNG pixel values must be 0 or 255: " + path.string());
    }
  return m;
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  const int h = static_cast<int>(mask.rows());
  const int w = static_cast<int>(mask.cols());
  std::vector<unsigned char> bytes(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      bytes[static_cast<std::size_t>(y) * w + x] = mask(y, x) ? 255 : 0;
  write_png_bytes(path, bytes.data(), h, w, 1);
}

}  // namespace defectgen
