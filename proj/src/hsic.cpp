#include "cimage/hsic.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "cimage/errors.hpp"

namespace cimage {

GramMatrix gaussian_gram(const std::vector<double>& x, double bandwidth) {
  if (bandwidth <= 0.0) throw ConfigError("gaussian_gram: bandwidth must be positive");
  for (double v : x)
    if (!std::isfinite(v)) throw NonFiniteError("gaussian_gram: non-finite input");
  const std::size_t n = x.size();
  GramMatrix gram{DenseMatrix(n, n), false};
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  for (std::size_t i = 0; i < n; ++i) {
    gram.values(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = x[i] - x[j];
      const double k = std::exp(-d * d * inv);
      gram.values(i, j) = k;
      gram.values(j, i) = k;
    }
  }
  return gram;
}

GramMatrix delta_gram(const std::vector<int>& labels) {
  if (labels.empty()) throw ConfigError("delta_gram: labels must be nonempty");
  const std::size_t n = labels.size();
  GramMatrix gram{DenseMatrix(n, n), false};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      gram.values(i, j) = (labels[i] == labels[j]) ? 1.0 : 0.0;
  return gram;
}

double median_bandwidth(const std::vector<double>& x) {
  if (x.size() < 2) throw ConfigError("median_bandwidth: need at least two points");
  std::vector<double> dists;
  dists.reserve(x.size() * (x.size() - 1) / 2);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double d = std::abs(x[i] - x[j]);
      if (d > 0.0) dists.push_back(d);
    }
  if (dists.empty()) return 1.0;
  const std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
  double med = dists[mid];
  if (dists.size() % 2 == 0) {
    // lower half's max completes the even-count median
    double lower = *std::max_element(dists.begin(), dists.begin() + mid);
    med = 0.5 * (med + lower);
  }
  return med;
}

void center_gram(GramMatrix& gram) {
  if (gram.centered) return;
  DenseMatrix& k = gram.values;
  const std::size_t n = k.rows();
  std::vector<double> row_mean(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += k(i, j);
    row_mean[i] = s / static_cast<double>(n);
    total += s;
  }
  total /= static_cast<double>(n) * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      k(i, j) += total - row_mean[i] - row_mean[j];
  gram.centered = true;
}

double empirical_hsic(const GramMatrix& kx, const GramMatrix& ly) {
  if (kx.size() != ly.size()) throw ShapeError("empirical_hsic: size mismatch");
  const std::size_t n = kx.size();
  if (n < 2) return 0.0;
  GramMatrix kc = kx, lc = ly;
  center_gram(kc);
  center_gram(lc);
  double trace = 0.0;
  const auto& kv = kc.values.values();
  const auto& lv = lc.values.values();
  for (std::size_t i = 0; i < kv.size(); ++i) trace += kv[i] * lv[i];
  const double n1 = static_cast<double>(n - 1);
  return trace / (n1 * n1);
}

double empirical_hsic(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("empirical_hsic: size mismatch");
  GramMatrix kx = gaussian_gram(x, median_bandwidth(x));
  GramMatrix ly = gaussian_gram(y, median_bandwidth(y));
  return empirical_hsic(kx, ly);
}

double conditional_hsic(const std::vector<double>& f_i, const std::vector<double>& f_j,
                        const std::vector<int>& labels) {
  if (f_i.size() != f_j.size() || f_i.size() != labels.size())
    throw ShapeError("conditional_hsic: size mismatch");
  if (labels.empty()) throw ConfigError("conditional_hsic: no labeled samples");
  std::map<int, std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < labels.size(); ++i) classes[labels[i]].push_back(i);
  const double n = static_cast<double>(labels.size());
  double out = 0.0;
  for (const auto& [cls, idx] : classes) {
    if (idx.size() < 2) continue;
    std::vector<double> xi, xj;
    xi.reserve(idx.size());
    xj.reserve(idx.size());
    for (std::size_t p : idx) {
      xi.push_back(f_i[p]);
      xj.push_back(f_j[p]);
    }
    out += (static_cast<double>(idx.size()) / n) * empirical_hsic(xi, xj);
  }
  return out;
}

}  // namespace cimage
