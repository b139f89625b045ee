#pragma once

#include <cstdint>
#include <vector>

#include "cimage/graph.hpp"
#include "cimage/tape.hpp"

namespace cimage {

// High-confidence cluster assignments extracted from the encoded
// representation; confidence is the mean cosine to same-cluster rows.
struct PseudoLabels {
  std::vector<NodeId> node_ids;  // sorted, unique
  std::vector<int> labels;
  std::vector<double> confidences;
  int num_clusters = 0;
  bool used_fallback = false;
};

// Newman modularity of a hard assignment, computed from per-cluster edge
// and degree totals. Throws on edgeless graphs.
double modularity_hard(const Graph& g, const std::vector<int>& assignment);

// Differentiable -Q with the soft cluster indicator Z Z^T, evaluated on the
// visible part of the masked graph. Never materializes an N x N matrix: the
// adjacency term runs over visible edges (in node batches of `batch_size`
// rows; 0 means the full graph at once) and the degree term reduces to the
// squared norm of d^T Z.
nn::Var clustering_loss(const MaskedGraph& masked, nn::Var z_flat,
                        std::size_t batch_size = 0);

// Spherical k-means over the row-normalized flattened representation,
// followed by the confidence filter. Nodes with confidence above `threshold`
// are kept; when fewer than `min_labeled` survive, the top 20% of each
// cluster by confidence is kept instead and the fallback flag is set.
PseudoLabels extract_pseudo_labels(const DenseMatrix& z_flat, int num_clusters,
                                   double threshold, std::size_t min_labeled,
                                   std::uint64_t seed);

// Best-permutation agreement between pseudo labels and reference labels on
// the labeled subset (exhaustive over cluster permutations; k <= 8).
double pseudo_label_accuracy(const PseudoLabels& pl, const std::vector<int>& truth);

}  // namespace cimage
