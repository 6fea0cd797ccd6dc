#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vgw/tensor.hpp"

namespace vgw {

struct GradCheckResult {
  double max_rel_err = 0.0;
  int worst_input = -1;       // index into the inputs vector
  int64_t worst_coord = -1;   // flat index within that input
  double analytic = 0.0;      // values at the worst coordinate
  double numeric = 0.0;
  bool nan_seen = false;

  bool ok(double tol) const { return !nan_seen && max_rel_err <= tol; }
  std::string describe() const;
};

struct GradCheckOptions {
  double h = 1e-5;
  /// Cap on checked coordinates per input (evenly strided); -1 checks all.
  int64_t max_coords = -1;
};

/// Compares reverse-mode gradients of a scalar-valued function against
/// central differences. Relative error uses max(|analytic|, |numeric|, 1e-3)
/// as the denominator so near-zero gradients stay meaningful.
template <class S>
GradCheckResult gradient_check(
    const std::function<Tensor<S>(const std::vector<Tensor<S>>&)>& f,
    const std::vector<Tensor<S>>& inputs, const GradCheckOptions& opt = {});

}  // namespace vgw
