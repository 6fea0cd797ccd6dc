#include "vgw/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace vgw {
namespace {

constexpr uint32_t kVersion = 1;

void put_u16(std::ostream& out, uint16_t v) {
  unsigned char b[2] = {(unsigned char)(v & 0xff), (unsigned char)(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint16_t get_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return uint16_t(b[0]) | uint16_t(b[1]) << 8;
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
  return v;
}

template <class S> constexpr uint8_t dtype_code();
template <> constexpr uint8_t dtype_code<float>() { return 0; }
template <> constexpr uint8_t dtype_code<double>() { return 1; }

const char* dtype_name(uint8_t code) { return code == 0 ? "f32" : code == 1 ? "f64" : "unknown"; }

// Values are little-endian on disk. On LE hosts the in-memory layout already
// matches; otherwise shuffle per element.
template <class S>
void put_values(std::ostream& out, const std::vector<S>& v) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(S)));
  } else {
    for (S x : v) {
      unsigned char b[sizeof(S)];
      std::memcpy(b, &x, sizeof(S));
      for (size_t i = 0; i < sizeof(S) / 2; ++i) std::swap(b[i], b[sizeof(S) - 1 - i]);
      out.write(reinterpret_cast<const char*>(b), sizeof(S));
    }
  }
}

template <class S>
void get_values(std::istream& in, std::vector<S>& v) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(v.data()), std::streamsize(v.size() * sizeof(S)));
  } else {
    for (S& x : v) {
      unsigned char b[sizeof(S)];
      in.read(reinterpret_cast<char*>(b), sizeof(S));
      for (size_t i = 0; i < sizeof(S) / 2; ++i) std::swap(b[i], b[sizeof(S) - 1 - i]);
      std::memcpy(&x, b, sizeof(S));
    }
  }
}

void expect_magic(std::istream& in, const char* magic, const std::string& what) {
  char got[4];
  in.read(got, 4);
  if (!in || std::memcmp(got, magic, 4) != 0)
    throw std::runtime_error(what + ": bad magic, expected \"" + magic + "\"");
}

}  // namespace

template <class S>
void write_tensor(std::ostream& out, const Tensor<S>& t) {
  out.write("VGWT", 4);
  put_u32(out, kVersion);
  out.put(char(dtype_code<S>()));
  out.put(char(t.rank()));
  for (int i = 0; i < t.rank(); ++i) put_u32(out, uint32_t(t.dim(i)));
  put_values(out, t.values());
}

template <class S>
Tensor<S> read_tensor(std::istream& in) {
  expect_magic(in, "VGWT", "tensor record");
  const uint32_t ver = get_u32(in);
  if (ver != kVersion)
    throw std::runtime_error("tensor record: unsupported version " + std::to_string(ver));
  const int dtype = in.get();
  if (dtype != dtype_code<S>())
    throw std::runtime_error(std::string("tensor record: file holds ") + dtype_name(uint8_t(dtype)) +
                             ", caller expects " + dtype_name(dtype_code<S>()));
  const int rank = in.get();
  if (rank < 0 || rank > 8) throw std::runtime_error("tensor record: implausible rank");
  Shape shape(size_t(rank), 0);
  for (int i = 0; i < rank; ++i) shape[size_t(i)] = int(get_u32(in));
  std::vector<S> values(size_t(shape_numel(shape)));
  get_values(in, values);
  if (!in) throw std::runtime_error("tensor record: truncated file");
  return Tensor<S>::from(std::move(shape), std::move(values));
}

template <class S>
void save_tensor(const std::string& path, const Tensor<S>& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_tensor(out, t);
  if (!out) throw std::runtime_error("write failed for " + path);
}

template <class S>
Tensor<S> load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_tensor<S>(in);
}

template <class S>
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor<S>>>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write("VGWC", 4);
  put_u32(out, kVersion);
  put_u32(out, uint32_t(entries.size()));
  for (const auto& [name, t] : entries) {
    if (name.size() > 0xffff) throw std::runtime_error("checkpoint entry name too long: " + name);
    put_u16(out, uint16_t(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    write_tensor(out, t);
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

template <class S>
std::vector<std::pair<std::string, Tensor<S>>> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  expect_magic(in, "VGWC", path);
  const uint32_t ver = get_u32(in);
  if (ver != kVersion)
    throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(ver));
  const uint32_t count = get_u32(in);
  std::vector<std::pair<std::string, Tensor<S>>> entries;
  entries.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t len = get_u16(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in) throw std::runtime_error(path + ": truncated checkpoint");
    entries.emplace_back(std::move(name), read_tensor<S>(in));
  }
  return entries;
}

#define VGW_INSTANTIATE(S)                                                           \
  template void write_tensor(std::ostream&, const Tensor<S>&);                      \
  template Tensor<S> read_tensor(std::istream&);                                    \
  template void save_tensor(const std::string&, const Tensor<S>&);                  \
  template Tensor<S> load_tensor(const std::string&);                               \
  template void save_checkpoint(const std::string&,                                 \
                                const std::vector<std::pair<std::string, Tensor<S>>>&); \
  template std::vector<std::pair<std::string, Tensor<S>>> load_checkpoint(const std::string&);

VGW_INSTANTIATE(float)
VGW_INSTANTIATE(double)
#undef VGW_INSTANTIATE

}  // namespace vgw
