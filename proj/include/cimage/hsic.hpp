#pragma once

#include <vector>

#include "cimage/dense_matrix.hpp"

namespace cimage {

// Symmetric kernel matrix with a centering flag. Centering applies the
// projection H K H with H = I - (1/n) 1 1^T, after which every row sums
// to zero.
struct GramMatrix {
  DenseMatrix values;
  bool centered = false;
  std::size_t size() const { return values.rows(); }
};

// K_ij = exp(-(x_i - x_j)^2 / (2 bandwidth^2))
GramMatrix gaussian_gram(const std::vector<double>& x, double bandwidth);

// L_ij = 1 when labels match, 0 otherwise.
GramMatrix delta_gram(const std::vector<int>& labels);

// Median of the nonzero pairwise absolute differences; 1.0 when all points
// coincide.
double median_bandwidth(const std::vector<double>& x);

// In-place double centering. Idempotent on centered inputs.
void center_gram(GramMatrix& gram);

// (n-1)^-2 Tr(Kbar Lbar); inputs are centered first if not already.
double empirical_hsic(const GramMatrix& kx, const GramMatrix& ly);

// Convenience: HSIC of two scalar samples with Gaussian kernels under the
// median-bandwidth heuristic.
double empirical_hsic(const std::vector<double>& x, const std::vector<double>& y);

// Class-conditional HSIC: sum over classes c of (n_c / n) HSIC within class
// c; classes with fewer than two members contribute zero.
double conditional_hsic(const std::vector<double>& f_i, const std::vector<double>& f_j,
                        const std::vector<int>& labels);

}  // namespace cimage
