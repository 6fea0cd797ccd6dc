#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vgw/tensor.hpp"

namespace vgw {

/// 8-bit image, row-major, channels interleaved (1 = gray, 3 = RGB).
struct Image8 {
  int width = 0, height = 0, channels = 0;
  std::vector<uint8_t> pixels;

  uint8_t& at(int y, int x, int c) { return pixels[size_t((y * width + x) * channels + c)]; }
  uint8_t at(int y, int x, int c) const { return pixels[size_t((y * width + x) * channels + c)]; }
};

/// 16-bit single-channel image for quantized unit-range fields.
struct Image16 {
  int width = 0, height = 0;
  std::vector<uint16_t> pixels;

  uint16_t& at(int y, int x) { return pixels[size_t(y * width + x)]; }
  uint16_t at(int y, int x) const { return pixels[size_t(y * width + x)]; }
};

Image8 read_image8(const std::string& path);
Image16 read_image16(const std::string& path);
void write_image8(const std::string& path, const Image8& img);
void write_image16(const std::string& path, const Image16& img);

/// Sample n of a [N,C,H,W] tensor with C in {1,3} and values in [0,1],
/// rounded to 8 bits with clamping.
template <class S> Image8 to_image8(const Tensor<S>& t, int n = 0);
/// Inverse direction: [1,C,H,W] in [0,1].
template <class S> Tensor<S> from_image8(const Image8& img);

}  // namespace vgw
