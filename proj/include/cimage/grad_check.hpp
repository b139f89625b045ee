#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cimage/param_set.hpp"

namespace cimage::nn {

struct GradCheckEval {
  double value = 0.0;
  // Tape::regime_hash() of the evaluation; two evals with different hashes
  // crossed a relu/clamp/guard boundary, so that coordinate is skipped.
  std::uint64_t regime_hash = 0;
};

// Evaluates the loss at the current parameters. When want_grad is true the
// evaluation must also accumulate gradients into the ParamSet.
using GradCheckFn = std::function<GradCheckEval(ParamSet&, bool want_grad)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t num_checked = 0;
  std::size_t num_skipped = 0;
  std::vector<std::pair<std::string, std::size_t>> skipped_coords;
};

// Central-difference comparison of analytic gradients at `samples` random
// parameter coordinates (all coordinates when samples covers them).
GradCheckReport grad_check(const GradCheckFn& fn, ParamSet& params,
                           std::size_t samples, std::uint64_t seed,
                           double h = 1e-5);

}  // namespace cimage::nn
