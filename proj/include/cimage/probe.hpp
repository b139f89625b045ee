#pragma once

#include <cstdint>
#include <vector>

#include "cimage/dense_matrix.hpp"

namespace cimage {

struct NodeSplit {
  std::vector<std::uint32_t> train;
  std::vector<std::uint32_t> val;
  std::vector<std::uint32_t> test;
};

// Random node split by fractions (train, val, remainder test).
NodeSplit split_nodes(std::size_t num_nodes, double train_frac, double val_frac,
                      std::uint64_t seed);

// Multinomial logistic regression on frozen embeddings: a single linear
// layer trained with softmax cross-entropy and Adam (lr 1e-2), early
// stopping on validation accuracy with patience 20. Returns test accuracy.
// The embeddings are never modified. Throws when a class present anywhere
// is absent from the training rows.
double eval_node_linear_probe(const DenseMatrix& embeddings,
                              const std::vector<int>& labels, const NodeSplit& split,
                              std::uint64_t seed);

}  // namespace cimage
