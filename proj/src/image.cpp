#include "image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "common.hpp"

namespace fsp {

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

// Decodes any PNG into 16-bit samples, reporting the original bit depth.
// Gray output has 1 channel, color has 3 (alpha stripped).
struct DecodedPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<uint16_t> samples;
};

DecodedPng decode_png(const std::string& path, bool want_color) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open PNG for reading: " + path);

  PngReader r;
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!r.png) throw IoError("png_create_read_struct failed");
  r.info = png_create_info_struct(r.png);
  if (!r.info) throw IoError("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(r.png))) throw ParseError("corrupt PNG: " + path);

  png_init_io(r.png, f.get());
  png_read_info(r.png, r.info);

  const int bit_depth = png_get_bit_depth(r.png, r.info);
  const int color_type = png_get_color_type(r.png, r.info);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
  if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
  png_set_strip_alpha(r.png);
  if (want_color) {
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
      png_set_gray_to_rgb(r.png);
  } else {
    if (color_type == PNG_COLOR_TYPE_RGB || color_type == PNG_COLOR_TYPE_RGB_ALPHA ||
        color_type == PNG_COLOR_TYPE_PALETTE)
      png_set_rgb_to_gray_fixed(r.png, 1, -1, -1);
  }
  if (bit_depth == 16) png_set_swap(r.png);  // file is big-endian
  png_read_update_info(r.png, r.info);

  DecodedPng out;
  out.width = static_cast<int>(png_get_image_width(r.png, r.info));
  out.height = static_cast<int>(png_get_image_height(r.png, r.info));
  out.channels = png_get_channels(r.png, r.info);
  out.bit_depth = png_get_bit_depth(r.png, r.info);

  const size_t row_samples = static_cast<size_t>(out.width) * out.channels;
  out.samples.resize(row_samples * out.height);

  std::vector<png_bytep> rows(out.height);
  std::vector<uint8_t> raw8;
  if (out.bit_depth == 16) {
    for (int y = 0; y < out.height; ++y)
      rows[y] = reinterpret_cast<png_bytep>(out.samples.data() + row_samples * y);
  } else {
    raw8.resize(row_samples * out.height);
    for (int y = 0; y < out.height; ++y) rows[y] = raw8.data() + row_samples * y;
  }
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);

  if (out.bit_depth != 16) {
    for (size_t i = 0; i < out.samples.size(); ++i) out.samples[i] = raw8[i];
  }
  return out;
}

void encode_png(const std::string& path, int width, int height, int channels, int bit_depth,
                const std::vector<uint16_t>& samples) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot open PNG for writing: " + path);

  PngWriter w;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!w.png) throw IoError("png_create_write_struct failed");
  w.info = png_create_info_struct(w.png);
  if (!w.info) throw IoError("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(w.png))) throw IoError("PNG write failed: " + path);

  png_init_io(w.png, f.get());
  const int color_type = channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(w.png, w.info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  if (bit_depth == 16) png_set_swap(w.png);

  const size_t row_samples = static_cast<size_t>(width) * channels;
  if (bit_depth == 16) {
    for (int y = 0; y < height; ++y) {
      png_write_row(w.png, reinterpret_cast<png_const_bytep>(samples.data() + row_samples * y));
    }
  } else {
    std::vector<uint8_t> row(row_samples);
    for (int y = 0; y < height; ++y) {
      for (size_t i = 0; i < row_samples; ++i)
        row[i] = static_cast<uint8_t>(samples[row_samples * y + i]);
      png_write_row(w.png, row.data());
    }
  }
  png_write_end(w.png, nullptr);
}

}  // namespace

ImageRGB read_rgb_png(const std::string& path) {
  DecodedPng d = decode_png(path, true);
  const double scale = d.bit_depth == 16 ? 65535.0 : 255.0;
  ImageRGB img(d.width, d.height);
  for (size_t i = 0; i < img.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) img.at_index(i, c) = d.samples[i * 3 + c] / scale;
  }
  return img;
}

ImageGray read_depth_png(const std::string& path, double depth_scale) {
  if (depth_scale <= 0) throw InputError("depth_scale must be positive");
  DecodedPng d = decode_png(path, false);
  ImageGray img(d.width, d.height);
  for (size_t i = 0; i < img.pixel_count(); ++i) img.at_index(i) = d.samples[i] / depth_scale;
  return img;
}

ImageLabel read_label_png(const std::string& path) {
  DecodedPng d = decode_png(path, false);
  ImageLabel img(d.width, d.height);
  for (size_t i = 0; i < img.pixel_count(); ++i) img.at_index(i) = d.samples[i];
  return img;
}

void write_rgb_png(const std::string& path, const ImageRGB& img) {
  std::vector<uint16_t> samples(img.pixel_count() * 3);
  for (size_t i = 0; i < img.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const double v = std::clamp(img.at_index(i, c), 0.0, 1.0);
      samples[i * 3 + c] = static_cast<uint16_t>(std::lround(v * 255.0));
    }
  }
  encode_png(path, img.width, img.height, 3, 8, samples);
}

void write_depth_png(const std::string& path, const ImageGray& img, double depth_scale) {
  if (depth_scale <= 0) throw InputError("depth_scale must be positive");
  std::vector<uint16_t> samples(img.pixel_count());
  for (size_t i = 0; i < img.pixel_count(); ++i) {
    const double meters = img.at_index(i);
    double raw = 0.0;
    if (std::isfinite(meters) && meters > 0) raw = std::round(meters * depth_scale);
    samples[i] = static_cast<uint16_t>(std::clamp(raw, 0.0, 65535.0));
  }
  encode_png(path, img.width, img.height, 1, 16, samples);
}

void write_label_png(const std::string& path, const ImageLabel& img) {
  std::vector<uint16_t> samples(img.pixel_count());
  for (size_t i = 0; i < img.pixel_count(); ++i) {
    const int32_t v = img.at_index(i);
    samples[i] = static_cast<uint16_t>(std::clamp<int32_t>(v, 0, 65535));
  }
  encode_png(path, img.width, img.height, 1, 16, samples);
}

}  // namespace fsp
