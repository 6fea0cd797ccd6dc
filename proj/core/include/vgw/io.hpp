#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "vgw/tensor.hpp"

namespace vgw {

// Binary tensor file: "VGWT" magic, u32 version, u8 dtype (0 = f32, 1 = f64),
// u8 rank, u32 extents, then raw little-endian values. Checkpoints ("VGWC")
// hold an ordered list of named tensor records in the same layout.

template <class S> void write_tensor(std::ostream& out, const Tensor<S>& t);
template <class S> Tensor<S> read_tensor(std::istream& in);

template <class S> void save_tensor(const std::string& path, const Tensor<S>& t);
template <class S> Tensor<S> load_tensor(const std::string& path);

template <class S>
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor<S>>>& entries);
template <class S>
std::vector<std::pair<std::string, Tensor<S>>> load_checkpoint(const std::string& path);

}  // namespace vgw
