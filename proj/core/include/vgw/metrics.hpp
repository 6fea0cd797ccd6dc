#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "vgw/training.hpp"

namespace vgw {

/// Single-scale structural similarity: 11x11 Gaussian window (sigma 1.5),
/// K1=0.01, K2=0.03, dynamic range 1, averaged over valid window positions,
/// channels, and batch. Accumulates in double regardless of S. Throws if
/// either spatial extent is below the window size.
template <class S>
double ssim(const Tensor<S>& a, const Tensor<S>& b);

struct EvalRow {
  std::string sample_id;
  double ssim = 0.0;
  double l1 = 0.0;             // mean |I_gen - I_t| over all pixels
  double l1_visible = 0.0;     // same restricted to the GT-visible region
  double gram_invisible = 0.0; // style distance on invisible-masked images
  double ssim_baseline = 0.0;  // identity copy of I_s scored the same way
  double l1_baseline = 0.0;
  double l1_visible_baseline = 0.0;  // kept out of the CSV, used by reports
};

struct EvalReport {
  std::vector<EvalRow> rows;
  EvalRow mean;  // per-column averages, sample_id = "mean"
  int count() const { return int(rows.size()); }
};

/// Scores repose_inference per held-out paired sample against I_t, next to
/// an identity baseline that reuses I_s unchanged. Region masks come from
/// GT visibility at cfg.vis_eps. Rows keep the input order.
EvalReport evaluate(const Models<float>& m, const std::vector<ReposeSample>& split,
                    const TrainConfig& cfg);

/// Header plus one row per sample:
/// sample_id,ssim,l1,l1_visible,gram_invisible,ssim_baseline,l1_baseline
void write_eval_csv(std::ostream& os, const EvalReport& rep);

}  // namespace vgw
