#include "vgw/tensor.hpp"

namespace vgw {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    if (d <= 0) throw std::runtime_error("shape " + shape_str(s) + " has a non-positive extent");
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

}  // namespace vgw
