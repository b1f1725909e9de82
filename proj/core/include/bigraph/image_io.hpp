#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bigraph/tensor.hpp"

namespace bigraph {

// 8-bit PNG writers (RGB / grayscale), rows top to bottom.
void write_png_rgb(const std::string& path, int width, int height,
                   std::span<const uint8_t> rgb);
void write_png_gray(const std::string& path, int width, int height,
                    std::span<const uint8_t> gray);

// [3,h,w] planar values in [-1,1] -> interleaved 8-bit RGB.
template <typename T>
std::vector<uint8_t> image_to_rgb8(const Tensor<T>& img) {
  BG_CHECK_DIM(img.rank() == 3 && img.dim(0) == 3,
               "image_to_rgb8: expects [3,h,w], got " << shape_str(img.shape()));
  int64_t h = img.dim(1), w = img.dim(2), plane = h * w;
  auto v = img.values();
  std::vector<uint8_t> out(static_cast<size_t>(3 * plane));
  for (int64_t i = 0; i < plane; ++i)
    for (int64_t c = 0; c < 3; ++c) {
      double x = (static_cast<double>(v[static_cast<size_t>(c * plane + i)]) + 1.0) * 0.5;
      x = x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
      out[static_cast<size_t>(i * 3 + c)] = static_cast<uint8_t>(x * 255.0 + 0.5);
    }
  return out;
}

// [1,h,w] or [h,w] values in [0,1] -> 8-bit grayscale.
template <typename T>
std::vector<uint8_t> plane_to_gray8(const Tensor<T>& img) {
  BG_CHECK_DIM((img.rank() == 3 && img.dim(0) == 1) || img.rank() == 2,
               "plane_to_gray8: expects [1,h,w] or [h,w], got " << shape_str(img.shape()));
  auto v = img.values();
  std::vector<uint8_t> out(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    double x = static_cast<double>(v[i]);
    x = x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
    out[i] = static_cast<uint8_t>(x * 255.0 + 0.5);
  }
  return out;
}

template <typename T>
void save_image_png(const std::string& path, const Tensor<T>& img) {
  auto rgb = image_to_rgb8(img);
  write_png_rgb(path, static_cast<int>(img.dim(2)), static_cast<int>(img.dim(1)), rgb);
}

template <typename T>
void save_gray_png(const std::string& path, const Tensor<T>& img) {
  auto g = plane_to_gray8(img);
  int h = static_cast<int>(img.rank() == 3 ? img.dim(1) : img.dim(0));
  int w = static_cast<int>(img.rank() == 3 ? img.dim(2) : img.dim(1));
  write_png_gray(path, w, h, g);
}

}  // namespace bigraph
