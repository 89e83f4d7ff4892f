#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fsp {

// Row-major image, `C` interleaved channels per pixel.
template <typename T, int C>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, T fill = T{})
      : width(w), height(h), data(static_cast<size_t>(w) * h * C, fill) {}

  bool empty() const { return data.empty(); }
  size_t pixel_count() const { return static_cast<size_t>(width) * height; }

  T& at(int x, int y, int c = 0) { return data[(static_cast<size_t>(y) * width + x) * C + c]; }
  const T& at(int x, int y, int c = 0) const {
    return data[(static_cast<size_t>(y) * width + x) * C + c];
  }
  // Flattened pixel index (y * width + x), channel c.
  T& at_index(size_t idx, int c = 0) { return data[idx * C + c]; }
  const T& at_index(size_t idx, int c = 0) const { return data[idx * C + c]; }

  bool same_shape(int w, int h) const { return width == w && height == h; }
  template <typename U, int D>
  bool same_shape(const Image<U, D>& other) const {
    return width == other.width && height == other.height;
  }
};

using ImageRGB = Image<double, 3>;    // color in [0,1]
using ImageGray = Image<double, 1>;   // depth in meters, 0 or NaN = invalid
using ImageLabel = Image<int32_t, 1>; // object id per pixel, 0 = background

// PNG I/O. Color files are 8-bit RGB; depth and label files are 16-bit
// grayscale (labels also accept 8-bit). Depth is stored as raw integer
// units and converted with `depth_scale` (units per meter).
ImageRGB read_rgb_png(const std::string& path);
ImageGray read_depth_png(const std::string& path, double depth_scale);
ImageLabel read_label_png(const std::string& path);

void write_rgb_png(const std::string& path, const ImageRGB& img);
void write_depth_png(const std::string& path, const ImageGray& img, double depth_scale);
void write_label_png(const std::string& path, const ImageLabel& img);

}  // namespace fsp
