#include "vgw/png_image.hpp"

#include <png.h>

#include <cmath>
#include <stdexcept>

namespace vgw {
namespace {

[[noreturn]] void fail(png_image& img, const std::string& path) {
  std::string msg = path + ": " + img.message;
  png_image_free(&img);
  throw std::runtime_error(msg);
}

}  // namespace

Image8 read_image8(const std::string& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) fail(img, path);
  const bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
  img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Image8 out;
  out.width = int(img.width);
  out.height = int(img.height);
  out.channels = gray ? 1 : 3;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) fail(img, path);
  return out;
}

Image16 read_image16(const std::string& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) fail(img, path);
  // 16-bit gray in, 16-bit gray out: samples pass through untouched, which
  // keeps the quantized fields stored this way bit-exact.
  img.format = PNG_FORMAT_LINEAR_Y;
  Image16 out;
  out.width = int(img.width);
  out.height = int(img.height);
  out.pixels.resize(size_t(out.width) * size_t(out.height));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) fail(img, path);
  return out;
}

void write_image8(const std::string& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::runtime_error(path + ": image must have 1 or 3 channels, has " +
                             std::to_string(img.channels));
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = png_uint_32(img.width);
  png.height = png_uint_32(img.height);
  png.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, img.pixels.data(), 0, nullptr))
    fail(png, path);
}

void write_image16(const std::string& path, const Image16& img) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = png_uint_32(img.width);
  png.height = png_uint_32(img.height);
  png.format = PNG_FORMAT_LINEAR_Y;
  if (!png_image_write_to_file(&png, path.c_str(), 0, img.pixels.data(), 0, nullptr))
    fail(png, path);
}

template <class S>
Image8 to_image8(const Tensor<S>& t, int n) {
  if (t.rank() != 4 || (t.dim(1) != 1 && t.dim(1) != 3))
    throw std::runtime_error("to_image8: expected [N,1|3,H,W], got " + shape_str(t.shape()));
  if (n < 0 || n >= t.dim(0))
    throw std::runtime_error("to_image8: sample " + std::to_string(n) + " out of range");
  const int C = t.dim(1), H = t.dim(2), W = t.dim(3);
  Image8 img;
  img.width = W;
  img.height = H;
  img.channels = C;
  img.pixels.resize(size_t(W) * H * C);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double v = double(t.at(n, c, y, x));
        v = v < 0.0 ? 0.0 : v > 1.0 ? 1.0 : v;
        img.at(y, x, c) = uint8_t(std::lround(v * 255.0));
      }
  return img;
}

template <class S>
Tensor<S> from_image8(const Image8& img) {
  Tensor<S> t = Tensor<S>::zeros({1, img.channels, img.height, img.width});
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) t.at(0, c, y, x) = S(img.at(y, x, c)) / S(255);
  return t;
}

template Image8 to_image8(const Tensor<float>&, int);
template Image8 to_image8(const Tensor<double>&, int);
template Tensor<float> from_image8(const Image8&);
template Tensor<double> from_image8(const Image8&);

}  // namespace vgw
