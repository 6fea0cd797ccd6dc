#include "vgw/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vgw/tape.hpp"

namespace vgw {

std::string GradCheckResult::describe() const {
  if (worst_input < 0) return "no coordinates checked";
  std::string s = nan_seen ? "NaN at " : "max rel err " + std::to_string(max_rel_err) + " at ";
  s += "input " + std::to_string(worst_input) + " coord " + std::to_string(worst_coord) +
       " (analytic " + std::to_string(analytic) + ", numeric " + std::to_string(numeric) + ")";
  return s;
}

template <class S>
GradCheckResult gradient_check(
    const std::function<Tensor<S>(const std::vector<Tensor<S>>&)>& f,
    const std::vector<Tensor<S>>& inputs, const GradCheckOptions& opt) {
  GradCheckResult res;

  // Analytic pass on grad-enabled copies under a private tape.
  std::vector<Tensor<S>> live;
  live.reserve(inputs.size());
  for (const auto& t : inputs) live.push_back(t.detach().set_requires_grad(true));
  std::vector<std::vector<S>> analytic(inputs.size());
  {
    Tape<S> tape;
    typename Tape<S>::Scope scope(tape);
    Tensor<S> loss = f(live);
    if (loss.numel() != 1)
      throw std::runtime_error("gradient_check: f must return a scalar, got " +
                               shape_str(loss.shape()));
    tape.backward(loss);
    for (size_t i = 0; i < live.size(); ++i) {
      analytic[i] = live[i].grad();
      if (analytic[i].empty()) analytic[i].assign(size_t(live[i].numel()), S(0));
    }
  }

  // Numeric pass on detached copies; nothing here touches any tape.
  std::vector<Tensor<S>> probe;
  for (const auto& t : inputs) probe.push_back(t.detach());
  auto eval = [&]() -> double { return double(f(probe).item()); };

  for (size_t i = 0; i < probe.size(); ++i) {
    const int64_t n = probe[i].numel();
    int64_t stride = 1;
    if (opt.max_coords > 0 && n > opt.max_coords) stride = (n + opt.max_coords - 1) / opt.max_coords;
    for (int64_t j = 0; j < n; j += stride) {
      const S saved = probe[i].at(int(j));
      probe[i].at(int(j)) = saved + S(opt.h);
      const double fp = eval();
      probe[i].at(int(j)) = saved - S(opt.h);
      const double fm = eval();
      probe[i].at(int(j)) = saved;

      const double num = (fp - fm) / (2.0 * opt.h);
      const double ana = double(analytic[i][size_t(j)]);
      const bool bad = std::isnan(num) || std::isnan(ana);
      const double rel = std::fabs(ana - num) / std::max({std::fabs(ana), std::fabs(num), 1e-3});
      if (bad || (!res.nan_seen && rel > res.max_rel_err)) {
        res.max_rel_err = bad ? std::numeric_limits<double>::infinity() : rel;
        res.worst_input = int(i);
        res.worst_coord = j;
        res.analytic = ana;
        res.numeric = num;
        if (bad) {
          res.nan_seen = true;
          return res;
        }
      }
    }
  }
  return res;
}

template GradCheckResult gradient_check(
    const std::function<Tensor<float>(const std::vector<Tensor<float>>&)>&,
    const std::vector<Tensor<float>>&, const GradCheckOptions&);
template GradCheckResult gradient_check(
    const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>&,
    const std::vector<Tensor<double>>&, const GradCheckOptions&);

}  // namespace vgw
