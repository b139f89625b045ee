#pragma once

#include <cstdint>
#include <vector>

#include "cimage/clustering.hpp"
#include "cimage/dense_matrix.hpp"

namespace cimage {

// Statistics for the channel-selection regression. Channels are the columns
// of the flattened N x (D_ch*K) representation restricted to a stratified
// subsample of the pseudo-labeled nodes.
//
// The regression design (one column per channel holding the vectorized
// centered Gram, response the vectorized centered label Gram) is held in
// Gram form: with columns scaled by 1/(n-1), the design Gram equals `red`
// and the design-response product equals `rel` exactly, so the solver never
// touches an n_lab^2-row matrix.
struct HsicStats {
  std::size_t dim = 0;    // D = D_ch * K
  std::size_t n_lab = 0;  // sampled labeled nodes
  std::size_t num_rows = 0;  // design rows (n_lab^2 for pipeline stats)

  std::vector<double> rel;  // HSIC(f_i, C-hat), length D
  DenseMatrix red;          // HSIC(f_i, f_j), D x D
  DenseMatrix red_cond;     // HSIC(f_i, f_j | C-hat), D x D
  double response_sqnorm = 0.0;  // HSIC(C-hat, C-hat)

  // sampled data kept for independent recomputation in tests
  DenseMatrix sampled_channels;  // n_lab x D
  std::vector<int> sampled_labels;

  const DenseMatrix& design_gram() const { return red; }
  const std::vector<double>& design_response() const { return rel; }
};

// Variational Bayesian-lasso state over the D channel weights.
struct SolverState {
  std::vector<double> mu;          // posterior mean, the omega estimate (>= 0)
  std::vector<double> sigma_diag;  // diag of the posterior covariance
  std::vector<double> nu;          // Student-t precision parameters
  std::vector<double> xi;          // held fixed at 1
  double noise_var = 0.0;          // sigma^2
  std::size_t iterations_run = 0;
  bool converged = false;
};

struct ContextPartition {
  std::vector<double> scores;       // Sc, length K, in [0,1], max = 1
  std::vector<std::size_t> f1_factors;  // Sc_k > zero_tol
  std::vector<std::size_t> f2_factors;  // Sc_k <= zero_tol
};

// Builds rel/red/red_cond and the response statistics from the flattened
// representation and pseudo-labels, stratified-subsampling the labeled set
// to at most `cap` nodes. Bandwidths use the median heuristic per channel,
// computed once on the sampled subset.
HsicStats build_hsic_stats(const DenseMatrix& z_flat, const PseudoLabels& labels,
                           std::size_t cap, std::uint64_t seed);

// Stats assembled from an explicit regression (tests and synthetic probes):
// design V (rows x D) and response y.
HsicStats stats_from_regression(const DenseMatrix& design,
                                const std::vector<double>& response);

// The CMI-HSIC objective: sum_i w_i rel_i - (1-pi) sum_ij w_i w_j red_ij
// - beta |w|_1. Serves as the independent oracle for the solver.
double evaluate_objective(const std::vector<double>& omega, const HsicStats& stats,
                          double pi, double beta);

struct LassoOptions {
  double beta = 1.0;
  std::size_t max_iter = 200;
  double tol = 1e-8;
};

// Alternating variational updates: nonnegative coordinate-descent for mu
// with soft threshold beta*sigma^2, the posterior covariance via a dense
// SPD factorization, nu = 1/(mu^2 + diag Sigma) and the stated sigma^2
// update. Throws SingularSystemError when the covariance system loses
// positive definiteness.
SolverState solve_bayesian_lasso(const HsicStats& stats, const LassoOptions& opts);

// Per-factor mean of the channel weights, normalized by the maximum.
// Throws DegeneratePartitionError when every weight is zero.
std::vector<double> factor_scores(const std::vector<double>& mu, std::size_t k,
                                  std::size_t d_ch);

// Piecewise split: scores above zero_tol go to F1, the rest to F2. Throws
// EmptyContextError when either side is empty.
ContextPartition partition_contexts(const std::vector<double>& scores,
                                    double zero_tol);

struct PartitionResult {
  SolverState state;
  ContextPartition partition;
  double beta_used = 0.0;
  std::size_t retries = 0;
};

// Full selection with the beta retry schedule: an empty F2 doubles beta, an
// empty F1 (or an all-zero solve) halves it, up to max_retries adjustments.
PartitionResult select_partition_with_retry(const HsicStats& stats, std::size_t k,
                                            std::size_t d_ch, double beta,
                                            double zero_tol,
                                            std::size_t max_retries,
                                            const LassoOptions& base_opts = {});

}  // namespace cimage
