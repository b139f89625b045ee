#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cimage/dense_matrix.hpp"

namespace cimage {

using NodeId = std::uint32_t;

// Undirected node pair, canonicalized to first < second.
struct Edge {
  NodeId u = 0;
  NodeId v = 0;
  Edge() = default;
  Edge(NodeId a, NodeId b) : u(a < b ? a : b), v(a < b ? b : a) {}
  bool operator==(const Edge& o) const { return u == o.u && v == o.v; }
  bool operator<(const Edge& o) const { return u < o.u || (u == o.u && v < o.v); }
};

struct EdgeList {
  std::vector<Edge> pairs;
  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

// Immutable undirected graph: sorted unique edge set plus CSR neighbor lists,
// dense node features, optional class labels.
class Graph {
 public:
  Graph(std::size_t num_nodes, std::vector<Edge> edges, DenseMatrix features,
        std::optional<std::vector<int>> labels = std::nullopt,
        std::optional<int> num_classes = std::nullopt);

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  const DenseMatrix& features() const { return features_; }
  std::size_t feature_dim() const { return features_.cols(); }
  const std::optional<std::vector<int>>& labels() const { return labels_; }
  std::optional<int> num_classes() const { return num_classes_; }

  bool has_edge(NodeId a, NodeId b) const;
  std::size_t degree(NodeId v) const {
    return csr_offsets_[v + 1] - csr_offsets_[v];
  }
  const NodeId* neighbors_begin(NodeId v) const {
    return csr_targets_.data() + csr_offsets_[v];
  }
  const NodeId* neighbors_end(NodeId v) const {
    return csr_targets_.data() + csr_offsets_[v + 1];
  }

 private:
  std::size_t num_nodes_;
  std::vector<Edge> edges_;  // sorted, unique, u < v
  std::vector<std::size_t> csr_offsets_;
  std::vector<NodeId> csr_targets_;
  DenseMatrix features_;
  std::optional<std::vector<int>> labels_;
  std::optional<int> num_classes_;
};

// Partition of a graph's edges into a visible set (encoder input) and a
// masked set (reconstruction targets). Visible neighbor lists are kept in
// CSR form for the routing encoder.
class MaskedGraph {
 public:
  MaskedGraph(const Graph& base, std::vector<Edge> visible, std::vector<Edge> masked,
              double mask_rate);

  const Graph& base() const { return *base_; }
  const std::vector<Edge>& visible_edges() const { return visible_; }
  const std::vector<Edge>& masked_edges() const { return masked_; }
  double mask_rate() const { return mask_rate_; }

  std::size_t num_nodes() const { return base_->num_nodes(); }
  std::size_t num_visible() const { return visible_.size(); }
  std::size_t visible_degree(NodeId v) const {
    return csr_offsets_[v + 1] - csr_offsets_[v];
  }
  const NodeId* visible_neighbors_begin(NodeId v) const {
    return csr_targets_.data() + csr_offsets_[v];
  }
  const NodeId* visible_neighbors_end(NodeId v) const {
    return csr_targets_.data() + csr_offsets_[v + 1];
  }

 private:
  const Graph* base_;
  std::vector<Edge> visible_;
  std::vector<Edge> masked_;
  double mask_rate_;
  std::vector<std::size_t> csr_offsets_;
  std::vector<NodeId> csr_targets_;
};

// Loads a graph from a JSON manifest naming an edge-list file, a feature CSV
// and optionally a label file / class count. Directed duplicates in the edge
// file collapse to one undirected edge.
Graph load_graph(const std::string& manifest_path);

// Planted-community random graph. Nodes are split into k equal blocks; pairs
// connect with p_in inside a block and p_out across. Features are the block's
// random unit mean plus isotropic Gaussian noise, labels are block ids.
Graph generate_sbm(std::size_t n, std::size_t k, double p_in, double p_out,
                   std::size_t feat_dim, double feat_noise, std::uint64_t seed);

// Uniform without-replacement selection of floor(rate*|E|) edges to mask.
MaskedGraph mask_edges(const Graph& g, double rate, std::uint64_t seed);

// Uniformly sampled unique non-edges (no self loops, not in `exclude`).
EdgeList sample_negatives(const Graph& g, std::size_t count, const EdgeList& exclude,
                          std::uint64_t seed);

struct LinkEvalSplit {
  EdgeList train_edges;
  EdgeList test_pos;
  EdgeList test_neg;
};

// Random edge split for link evaluation; |test_neg| == |test_pos|.
LinkEvalSplit split_link_eval(const Graph& g, double train_frac, std::uint64_t seed);

// Convenience: graph restricted to a subset of edges (same nodes/features).
Graph subgraph_with_edges(const Graph& g, const EdgeList& edges);

}  // namespace cimage
