#include "cimage/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "cimage/rng.hpp"

namespace cimage::nn {

GradCheckReport grad_check(const GradCheckFn& fn, ParamSet& params,
                           std::size_t samples, std::uint64_t seed, double h) {
  // analytic gradients at the base point
  params.zero_grad();
  const GradCheckEval base = fn(params, true);
  std::vector<std::pair<std::string, std::size_t>> coords;
  std::vector<double> analytic;
  for (const auto& name : params.names()) {
    const auto& g = params.at(name).grad.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      coords.emplace_back(name, i);
      analytic.push_back(g[i]);
    }
  }
  params.zero_grad();

  std::vector<std::size_t> order(coords.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const std::size_t take = std::min(samples, order.size());

  GradCheckReport report;
  for (std::size_t s = 0; s < take; ++s) {
    const std::size_t c = order[s];
    const auto& [name, idx] = coords[c];
    double& slot = params.at(name).value.values()[idx];
    const double saved = slot;

    slot = saved + h;
    GradCheckEval plus = fn(params, false);
    slot = saved - h;
    GradCheckEval minus = fn(params, false);
    slot = saved;

    // all three evaluations must share the relu/clamp/guard regime; the
    // base point matters too (a symmetric flip can leave f+h and f-h in the
    // same regime while the base sits on the boundary)
    if (plus.regime_hash != minus.regime_hash ||
        plus.regime_hash != base.regime_hash) {
      ++report.num_skipped;
      report.skipped_coords.emplace_back(name, idx);
      continue;
    }
    const double fd = (plus.value - minus.value) / (2.0 * h);
    // below the finite-difference noise floor both sides count as zero
    const double mag = std::max(std::abs(fd), std::abs(analytic[c]));
    const double rel = (mag < 1e-7) ? 0.0 : std::abs(fd - analytic[c]) / mag;
    report.max_rel_error = std::max(report.max_rel_error, rel);
    ++report.num_checked;
  }
  return report;
}

}  // namespace cimage::nn
