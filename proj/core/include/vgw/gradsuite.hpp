#pragma once

#include <string>
#include <vector>

#include "vgw/gradcheck.hpp"

namespace vgw {

constexpr double kGradSuiteTol = 1e-4;

struct GradSuiteRow {
  std::string name;
  double max_rel_err = 0.0;
  std::string detail;  // worst coordinate, analytic vs numeric
  bool pass = false;
};

/// Central finite-difference checks in double for every differentiable
/// operation: tensor primitives, warping, the composite losses, and each
/// network forward (via input gradients, which exercise the whole backward
/// chain; weight gradients are covered by the primitive rows). Inputs are
/// seeded and kink-avoiding: |x| >= 0.2 for abs/relu-like ops, |a-b| >= 0.1
/// for L1 pairs, sub-pixel warp offsets in [0.3, 0.7], and total-variation
/// inputs built from shuffled lattices so neighbor gaps stay >= 1/n.
std::vector<GradSuiteRow> run_gradient_suite(uint64_t seed);

bool all_pass(const std::vector<GradSuiteRow>& rows);

}  // namespace vgw
