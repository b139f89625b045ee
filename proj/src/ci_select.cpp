#include "cimage/ci_select.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "cimage/errors.hpp"
#include "cimage/hsic.hpp"
#include "cimage/rng.hpp"

namespace cimage {

namespace {

// stratified subsample of labeled indices, proportional with largest
// remainder, at least one node per class
std::vector<std::size_t> stratified_sample(const PseudoLabels& labels,
                                           std::size_t cap, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.node_ids.size(); ++i)
    by_class[labels.labels[i]].push_back(i);
  const std::size_t total = labels.node_ids.size();
  if (total <= cap) {
    std::vector<std::size_t> all(total);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  if (by_class.size() > cap)
    throw InsufficientLabeledError(
        "build_hsic_stats: cap smaller than the number of classes");

  Rng rng(derive_seed(seed, 41));
  std::vector<std::pair<double, int>> remainders;
  std::map<int, std::size_t> take;
  std::size_t assigned = 0;
  for (const auto& [cls, members] : by_class) {
    const double exact = static_cast<double>(cap) *
                         static_cast<double>(members.size()) /
                         static_cast<double>(total);
    std::size_t base = std::max<std::size_t>(1, static_cast<std::size_t>(exact));
    base = std::min(base, members.size());
    take[cls] = base;
    assigned += base;
    remainders.push_back({exact - static_cast<double>(base), cls});
  }
  std::sort(remainders.begin(), remainders.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  for (const auto& [frac, cls] : remainders) {
    if (assigned >= cap) break;
    if (take[cls] < by_class[cls].size()) {
      ++take[cls];
      ++assigned;
    }
  }
  std::vector<std::size_t> out;
  for (auto& [cls, members] : by_class) {
    rng.shuffle(members);
    for (std::size_t i = 0; i < take[cls] && i < members.size(); ++i)
      out.push_back(members[i]);
  }
  std::sort(out.begin(), out.end());
  if (out.size() > cap) out.resize(cap);
  return out;
}

DenseMatrix centered_gaussian_gram(const std::vector<double>& x, double bandwidth) {
  GramMatrix g = gaussian_gram(x, bandwidth);
  center_gram(g);
  return std::move(g.values);
}

double gram_dot(const DenseMatrix& a, const DenseMatrix& b) {
  double s = 0.0;
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  return s;
}

}  // namespace

HsicStats build_hsic_stats(const DenseMatrix& z_flat, const PseudoLabels& labels,
                           std::size_t cap, std::uint64_t seed) {
  if (labels.node_ids.size() < 4)
    throw InsufficientLabeledError("build_hsic_stats: need at least 4 labeled nodes");
  const auto sample = stratified_sample(labels, cap, seed);
  const std::size_t n = sample.size();
  const std::size_t d = z_flat.cols();

  HsicStats stats;
  stats.dim = d;
  stats.n_lab = n;
  stats.num_rows = n * n;
  stats.sampled_channels = DenseMatrix(n, d);
  stats.sampled_labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t li = sample[i];
    stats.sampled_labels[i] = labels.labels[li];
    const NodeId node = labels.node_ids[li];
    for (std::size_t j = 0; j < d; ++j)
      stats.sampled_channels(i, j) = z_flat(node, j);
  }

  // label gram (the regression response)
  GramMatrix lgram = delta_gram(stats.sampled_labels);
  center_gram(lgram);
  const double n1sq = static_cast<double>(n - 1) * static_cast<double>(n - 1);
  stats.response_sqnorm = gram_dot(lgram.values, lgram.values) / n1sq;

  // per-channel centered grams with once-computed median bandwidths
  std::vector<DenseMatrix> grams(d);
  std::vector<double> bandwidths(d);
  std::vector<double> channel(n);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) channel[i] = stats.sampled_channels(i, j);
    bandwidths[j] = median_bandwidth(channel);
    grams[j] = centered_gaussian_gram(channel, bandwidths[j]);
  }

  stats.rel.assign(d, 0.0);
  stats.red = DenseMatrix(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    stats.rel[i] = gram_dot(grams[i], lgram.values) / n1sq;
    for (std::size_t j = i; j < d; ++j) {
      const double v = gram_dot(grams[i], grams[j]) / n1sq;
      stats.red(i, j) = v;
      stats.red(j, i) = v;
    }
  }

  // class-conditional redundancy as the class-size weighted mean of
  // within-class HSIC, with the same per-channel bandwidths
  stats.red_cond = DenseMatrix(d, d);
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < n; ++i) by_class[stats.sampled_labels[i]].push_back(i);
  for (const auto& [cls, members] : by_class) {
    const std::size_t nc = members.size();
    if (nc < 2) continue;
    const double weight = static_cast<double>(nc) / static_cast<double>(n);
    const double nc1sq = static_cast<double>(nc - 1) * static_cast<double>(nc - 1);
    std::vector<DenseMatrix> sub(d);
    std::vector<double> sub_channel(nc);
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t i = 0; i < nc; ++i)
        sub_channel[i] = stats.sampled_channels(members[i], j);
      // bandwidth reused from the full sampled subset
      sub[j] = centered_gaussian_gram(sub_channel, bandwidths[j]);
    }
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i; j < d; ++j) {
        const double v = weight * gram_dot(sub[i], sub[j]) / nc1sq;
        stats.red_cond(i, j) += v;
        if (i != j) stats.red_cond(j, i) += v;
      }
  }
  return stats;
}

HsicStats stats_from_regression(const DenseMatrix& design,
                                const std::vector<double>& response) {
  if (design.rows() != response.size())
    throw ShapeError("stats_from_regression: design rows != response length");
  if (design.rows() == 0) throw ConfigError("stats_from_regression: empty design");
  const std::size_t rows = design.rows(), d = design.cols();
  HsicStats stats;
  stats.dim = d;
  stats.n_lab = rows;
  stats.num_rows = rows;
  stats.red = matmul_tn(design, design);
  stats.red_cond = DenseMatrix(d, d);
  stats.rel.assign(d, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < d; ++j) stats.rel[j] += design(i, j) * response[i];
  stats.response_sqnorm = 0.0;
  for (double y : response) stats.response_sqnorm += y * y;
  return stats;
}

double evaluate_objective(const std::vector<double>& omega, const HsicStats& stats,
                          double pi, double beta) {
  if (omega.size() != stats.dim)
    throw ShapeError("evaluate_objective: omega length != D");
  double relevance = 0.0, l1 = 0.0;
  for (std::size_t i = 0; i < omega.size(); ++i) {
    relevance += omega[i] * stats.rel[i];
    l1 += std::abs(omega[i]);
  }
  double redundancy = 0.0;
  for (std::size_t i = 0; i < omega.size(); ++i) {
    if (omega[i] == 0.0) continue;
    for (std::size_t j = 0; j < omega.size(); ++j)
      redundancy += omega[i] * omega[j] * stats.red(i, j);
  }
  return relevance - (1.0 - pi) * redundancy - beta * l1;
}

namespace {

// Cholesky factorization of an SPD matrix, in place (lower triangle).
// Returns false when a pivot fails.
bool cholesky(DenseMatrix& m) {
  const std::size_t n = m.rows();
  for (std::size_t j = 0; j < n; ++j) {
    double diag = m(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= m(j, k) * m(j, k);
    if (!(diag > 0.0) || !std::isfinite(diag)) return false;
    const double root = std::sqrt(diag);
    m(j, j) = root;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = m(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= m(i, k) * m(j, k);
      m(i, j) = v / root;
    }
  }
  return true;
}

// diag of M^-1 from the Cholesky factor L (M = L L^T): solves L x = e_j,
// then accumulates the squared entries of L^-T x column by column.
std::vector<double> inverse_from_cholesky_diag(const DenseMatrix& l,
                                               DenseMatrix* full_inverse) {
  const std::size_t n = l.rows();
  std::vector<double> diag(n, 0.0);
  std::vector<double> x(n);
  for (std::size_t j = 0; j < n; ++j) {
    // forward solve L x = e_j
    for (std::size_t i = 0; i < n; ++i) {
      double v = (i == j) ? 1.0 : 0.0;
      for (std::size_t k = j; k < i; ++k) v -= l(i, k) * x[k];
      x[i] = (i >= j) ? v / l(i, i) : 0.0;
    }
    // back solve L^T y = x
    for (std::size_t ii = n; ii-- > 0;) {
      double v = x[ii];
      for (std::size_t k = ii + 1; k < n; ++k) v -= l(k, ii) * x[k];
      x[ii] = v / l(ii, ii);
    }
    diag[j] = x[j];
    if (full_inverse)
      for (std::size_t i = 0; i < n; ++i) (*full_inverse)(i, j) = x[i];
  }
  return diag;
}

}  // namespace

SolverState solve_bayesian_lasso(const HsicStats& stats, const LassoOptions& opts) {
  if (opts.beta < 0.0) throw ConfigError("solve_bayesian_lasso: beta must be >= 0");
  const std::size_t d = stats.dim;
  if (d == 0) throw ConfigError("solve_bayesian_lasso: empty stats");
  const DenseMatrix& a = stats.design_gram();
  const std::vector<double>& b = stats.design_response();
  const double yty = stats.response_sqnorm;
  const double rows = static_cast<double>(stats.num_rows);

  SolverState st;
  st.mu.assign(d, 0.0);
  st.nu.assign(d, 1.0);
  st.xi.assign(d, 1.0);
  st.sigma_diag.assign(d, 0.0);
  st.noise_var = std::max(yty / rows, 1e-30);  // response variance

  std::vector<double> a_mu(d, 0.0);  // running A*mu for coordinate descent

  for (std::size_t iter = 1; iter <= opts.max_iter; ++iter) {
    const std::vector<double> mu_prev = st.mu;

    // (a) cyclic coordinate descent with soft threshold beta*sigma^2 and a
    //     nonnegativity clamp
    const double threshold = opts.beta * st.noise_var;
    for (std::size_t sweep = 0; sweep < 50; ++sweep) {
      double max_delta = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double c_j = a_mu[j] - a(j, j) * st.mu[j];
        const double denom = a(j, j) + st.noise_var * st.nu[j] / st.xi[j];
        double next = 0.0;
        if (denom > 0.0) next = std::max(0.0, (b[j] - c_j - threshold) / denom);
        const double delta = next - st.mu[j];
        if (delta != 0.0) {
          st.mu[j] = next;
          for (std::size_t i = 0; i < d; ++i) a_mu[i] += delta * a(i, j);
          max_delta = std::max(max_delta, std::abs(delta));
        }
      }
      if (max_delta < opts.tol) break;
    }

    // (b) posterior covariance Sigma = sigma^2 (A + sigma^2 Theta)^-1
    DenseMatrix m = a;
    for (std::size_t j = 0; j < d; ++j)
      m(j, j) += st.noise_var * st.nu[j] / st.xi[j];
    if (!cholesky(m))
      throw SingularSystemError(
          "solve_bayesian_lasso: covariance system is not positive definite");
    const std::vector<double> inv_diag = inverse_from_cholesky_diag(m, nullptr);
    double trace_theta_minv = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      st.sigma_diag[j] = st.noise_var * inv_diag[j];
      trace_theta_minv += (st.nu[j] / st.xi[j]) * inv_diag[j];
    }
    // Tr(A Sigma) = sigma^2 (D - sigma^2 Tr(Theta M^-1))
    const double trace_a_sigma =
        st.noise_var * (static_cast<double>(d) - st.noise_var * trace_theta_minv);

    // (c) nu = xi / (mu^2 + diag Sigma)
    for (std::size_t j = 0; j < d; ++j)
      st.nu[j] = st.xi[j] / std::max(st.mu[j] * st.mu[j] + st.sigma_diag[j], 1e-300);

    // (d) sigma^2 = (RSS + Tr(A Sigma)) / num_rows
    double mu_a_mu = 0.0, b_mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      mu_a_mu += st.mu[j] * a_mu[j];
      b_mu += b[j] * st.mu[j];
    }
    const double rss = std::max(yty - 2.0 * b_mu + mu_a_mu, 0.0);
    st.noise_var = std::max((rss + std::max(trace_a_sigma, 0.0)) / rows, 1e-30);

    st.iterations_run = iter;
    double change = 0.0;
    for (std::size_t j = 0; j < d; ++j)
      change = std::max(change, std::abs(st.mu[j] - mu_prev[j]));
    if (change < opts.tol && iter > 1) {
      st.converged = true;
      break;
    }
  }

  return st;
}

std::vector<double> factor_scores(const std::vector<double>& mu, std::size_t k,
                                  std::size_t d_ch) {
  if (mu.size() != k * d_ch)
    throw ShapeError("factor_scores: mu length must equal K * D_ch");
  std::vector<double> means(k, 0.0);
  for (std::size_t f = 0; f < k; ++f) {
    for (std::size_t j = 0; j < d_ch; ++j) means[f] += mu[f * d_ch + j];
    means[f] /= static_cast<double>(d_ch);
  }
  const double mx = *std::max_element(means.begin(), means.end());
  if (mx <= 0.0)
    throw DegeneratePartitionError("factor_scores: all channel weights are zero");
  for (double& v : means) v /= mx;
  return means;
}

ContextPartition partition_contexts(const std::vector<double>& scores,
                                    double zero_tol) {
  ContextPartition part;
  part.scores = scores;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if (scores[k] > zero_tol)
      part.f1_factors.push_back(k);
    else
      part.f2_factors.push_back(k);
  }
  if (part.f1_factors.empty()) throw EmptyContextError("F1");
  if (part.f2_factors.empty()) throw EmptyContextError("F2");
  return part;
}

PartitionResult select_partition_with_retry(const HsicStats& stats, std::size_t k,
                                            std::size_t d_ch, double beta,
                                            double zero_tol,
                                            std::size_t max_retries,
                                            const LassoOptions& base_opts) {
  PartitionResult result;
  double current_beta = beta;
  for (std::size_t attempt = 0;; ++attempt) {
    LassoOptions opts = base_opts;
    opts.beta = current_beta;
    SolverState state = solve_bayesian_lasso(stats, opts);
    try {
      auto scores = factor_scores(state.mu, k, d_ch);
      ContextPartition part = partition_contexts(scores, zero_tol);
      result.state = std::move(state);
      result.partition = std::move(part);
      result.beta_used = current_beta;
      result.retries = attempt;
      return result;
    } catch (const DegeneratePartitionError&) {
      if (attempt >= max_retries) throw;
      current_beta /= 2.0;  // everything zeroed: weaken the penalty
    } catch (const EmptyContextError& e) {
      if (attempt >= max_retries) throw;
      if (e.which == "F2")
        current_beta *= 2.0;  // nothing zeroed: strengthen the penalty
      else
        current_beta /= 2.0;
    }
  }
}

}  // namespace cimage
