#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>

#include "vgw/io.hpp"
#include "vgw/png_image.hpp"
#include "vgw/rng.hpp"

using namespace vgw;

namespace {

std::string tmp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("tensor stream round trip is bit exact") {
  Rng rng(41);
  Tensor<float> t = Tensor<float>::zeros({2, 3, 4, 5});
  for (auto& v : t.values()) v = float(rng.uniform(-10.0, 10.0));
  t.at(0) = -0.0f;
  t.at(1) = 1e-40f;  // denormal survives too

  std::stringstream ss;
  write_tensor(ss, t);
  Tensor<float> back = read_tensor<float>(ss);
  CHECK(back.shape() == t.shape());
  CHECK(back.values() == t.values());
  CHECK(std::signbit(back.at(0)));
}

TEST_CASE("double tensors keep full precision") {
  Tensor<double> t = Tensor<double>::from({3}, {1.0 / 3.0, -2.7182818284590452, 1e-300});
  std::stringstream ss;
  write_tensor(ss, t);
  Tensor<double> back = read_tensor<double>(ss);
  CHECK(back.values() == t.values());
}

TEST_CASE("tensor file round trip") {
  const std::string path = tmp_path("vgw_io_tensor.vgwt");
  Tensor<float> t = Tensor<float>::from({2, 2}, {1.5f, -2.25f, 0.0f, 3e-8f});
  save_tensor(path, t);
  Tensor<float> back = load_tensor<float>(path);
  CHECK(back.shape() == t.shape());
  CHECK(back.values() == t.values());
  std::remove(path.c_str());
}

TEST_CASE("scalar type mismatch is reported") {
  std::stringstream ss;
  write_tensor(ss, Tensor<float>::scalar(1.0f));
  CHECK_THROWS_WITH_AS(read_tensor<double>(ss), doctest::Contains("caller expects"),
                       std::runtime_error);
}

TEST_CASE("bad magic is reported") {
  std::stringstream ss("not a tensor file at all");
  CHECK_THROWS_WITH_AS(read_tensor<float>(ss), doctest::Contains("bad magic"),
                       std::runtime_error);
}

TEST_CASE("truncated stream is reported") {
  std::stringstream full;
  Tensor<float> t = Tensor<float>::zeros({8, 8});
  write_tensor(full, t);
  const std::string bytes = full.str();
  std::stringstream cut(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_WITH_AS(read_tensor<float>(cut), doctest::Contains("truncated"),
                       std::runtime_error);
}

TEST_CASE("missing file is reported by name") {
  CHECK_THROWS_WITH_AS(load_tensor<float>("/nonexistent/vgw.vgwt"),
                       doctest::Contains("/nonexistent/vgw.vgwt"), std::runtime_error);
}

TEST_CASE("checkpoint round trip preserves names order and values") {
  Rng rng(42);
  std::vector<std::pair<std::string, Tensor<float>>> entries;
  entries.emplace_back("zeta.w", Tensor<float>::from({2, 2}, {1, 2, 3, 4}));
  entries.emplace_back("alpha.b", Tensor<float>::scalar(-7.5f));
  Tensor<float> big = Tensor<float>::zeros({3, 4, 5});
  for (auto& v : big.values()) v = float(rng.normal());
  entries.emplace_back("alpha.w", big);

  const std::string path = tmp_path("vgw_io_ckpt.vgwc");
  save_checkpoint(path, entries);
  auto back = load_checkpoint<float>(path);
  REQUIRE(back.size() == entries.size());
  for (size_t i = 0; i < entries.size(); ++i) {
    CHECK(back[i].first == entries[i].first);  // order kept, not sorted
    CHECK(back[i].second.shape() == entries[i].second.shape());
    CHECK(back[i].second.values() == entries[i].second.values());
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint with wrong magic is rejected") {
  const std::string path = tmp_path("vgw_io_badmagic.vgwc");
  save_tensor(path, Tensor<float>::scalar(1.0f));  // VGWT, not VGWC
  CHECK_THROWS_WITH_AS(load_checkpoint<float>(path), doctest::Contains("bad magic"),
                       std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("png 8 bit round trip") {
  Rng rng(43);
  Image8 img;
  img.width = 7;
  img.height = 5;
  img.channels = 3;
  img.pixels.resize(size_t(7 * 5 * 3));
  for (auto& p : img.pixels) p = uint8_t(rng.uniform_int(0, 255));

  const std::string path = tmp_path("vgw_io_rgb.png");
  write_image8(path, img);
  Image8 back = read_image8(path);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.channels == 3);
  CHECK(back.pixels == img.pixels);
  std::remove(path.c_str());
}

TEST_CASE("png grayscale round trip") {
  Image8 img;
  img.width = 4;
  img.height = 3;
  img.channels = 1;
  img.pixels = {0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 255};
  const std::string path = tmp_path("vgw_io_gray.png");
  write_image8(path, img);
  Image8 back = read_image8(path);
  CHECK(back.channels == 1);
  CHECK(back.pixels == img.pixels);
  std::remove(path.c_str());
}

TEST_CASE("png 16 bit round trip") {
  Rng rng(44);
  Image16 img;
  img.width = 6;
  img.height = 4;
  img.pixels.resize(24);
  for (auto& p : img.pixels) p = uint16_t(rng.uniform_int(0, 65535));
  img.pixels[0] = 0;
  img.pixels[1] = 65535;

  const std::string path = tmp_path("vgw_io_16.png");
  write_image16(path, img);
  Image16 back = read_image16(path);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.pixels == img.pixels);
  std::remove(path.c_str());
}

TEST_CASE("tensor image conversion") {
  Tensor<float> t = Tensor<float>::zeros({1, 3, 2, 2});
  t.at(0, 0, 0, 0) = 0.0f;
  t.at(0, 1, 0, 0) = 0.5f;
  t.at(0, 2, 0, 0) = 1.0f;
  t.at(0, 0, 1, 1) = 2.0f;   // clamps high
  t.at(0, 1, 1, 1) = -1.0f;  // clamps low
  Image8 img = to_image8(t);
  CHECK(img.at(0, 0, 0) == 0);
  CHECK(img.at(0, 0, 1) == 128);  // round(0.5 * 255)
  CHECK(img.at(0, 0, 2) == 255);
  CHECK(img.at(1, 1, 0) == 255);
  CHECK(img.at(1, 1, 1) == 0);

  Tensor<float> back = from_image8<float>(img);
  CHECK(back.shape() == Shape{1, 3, 2, 2});
  CHECK(back.at(0, 2, 0, 0) == 1.0f);
  CHECK(back.at(0, 1, 0, 0) == doctest::Approx(128.0 / 255.0));
}

}  // TEST_SUITE
