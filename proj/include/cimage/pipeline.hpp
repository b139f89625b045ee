#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cimage/ci_select.hpp"
#include "cimage/clustering.hpp"
#include "cimage/encoder.hpp"
#include "cimage/graph.hpp"
#include "cimage/losses.hpp"
#include "cimage/param_set.hpp"
#include "cimage/probe.hpp"

namespace cimage {

enum class StructurePositives { kMasked, kAll };

struct TrainConfig {
  std::size_t K = 16;
  std::size_t D_ch = 32;
  std::size_t T = 3;
  std::size_t encoder_hidden = 512;
  std::size_t factor_recon_hidden = 256;
  std::size_t structure_hidden = 32;
  double mask_rate = 0.7;
  double lambda1 = 0.86;
  double lambda2 = 0.4;
  double tau = 2.0;
  double beta = 2000.0;
  double pi = 0.5;
  double lr = 5e-3;
  double cluster_threshold = 0.99;
  double zero_tol = 1e-6;
  std::size_t epochs = 300;
  std::size_t warmup_epochs = 100;
  std::size_t num_clusters = 0;  // required
  std::size_t labeled_cap = 1024;
  std::size_t max_beta_retries = 8;
  std::uint64_t seed = 0;
  SoftmaxAxis softmax_axis = SoftmaxAxis::kFactors;
  StructurePositives structure_positives = StructurePositives::kMasked;

  void validate() const;
  std::string to_json() const;                     // canonical, stable key order
  static TrainConfig from_json(const std::string& text);  // unknown keys rejected
  static TrainConfig load(const std::string& path);
  std::string hash() const;  // FNV-1a of the canonical serialization
};

struct EpochLog {
  std::size_t epoch = 0;
  double st = 0.0;
  double ch = 0.0;
  double cl = 0.0;
  double total = 0.0;
};

struct RunArtifacts {
  TrainConfig config;
  nn::ParamSet params;
  // embeddings with factor blocks reordered to [F1 | F2]
  DenseMatrix embeddings;
  std::vector<std::size_t> column_order;  // factor ids in embedding-block order
  ContextPartition partition;
  double beta_used = 0.0;
  bool ci_converged = false;
  std::size_t ci_iterations = 0;
  PseudoLabels pseudo_labels;
  std::vector<EpochLog> per_epoch;
  std::string metrics_json;
  std::optional<LinkEvalSplit> link_split;  // present for task=link

  std::size_t f1_width() const { return partition.f1_factors.size() * config.D_ch; }

  void save(const std::string& dir) const;
  static RunArtifacts load(const std::string& dir);
};

// Full training schedule: mask -> warmup on structure+clustering ->
// pseudo-labels -> CI partition (beta retries) -> joint objective for the
// remaining epochs. `dataset_id` only labels the metrics report. For
// task=link the graph is split 85/15 first and training runs on the
// retained subgraph.
RunArtifacts train(const TrainConfig& config, const Graph& graph,
                   const std::string& dataset_id, bool link_task = false,
                   double link_train_frac = 0.85);

// Decoder edge probabilities for arbitrary pairs, in original factor order.
std::vector<double> score_edges(const RunArtifacts& artifacts, const EdgeList& pairs);

struct LinkMetrics {
  double auc = 0.0;
  double ap = 0.0;
};
LinkMetrics eval_link(const RunArtifacts& artifacts, const EdgeList& test_pos,
                      const EdgeList& test_neg);

struct RedundancyReport {
  double acc_f1 = 0.0;
  double acc_f2 = 0.0;
  double acc_both = 0.0;
  double gap() const {
    return std::max(acc_both - acc_f1, acc_both - acc_f2);
  }
};

// Probes the F1 columns, F2 columns and the full embedding on the same split.
RedundancyReport redundancy_check(const DenseMatrix& embeddings, std::size_t f1_width,
                                  const std::vector<int>& labels,
                                  const NodeSplit& split, std::uint64_t seed);

struct SeparabilityReport {
  double acc_reconstructed = 0.0;  // probe on h(F1)
  double acc_raw_f1 = 0.0;         // probe on F1 itself
};

// Probe on the reconstructed F2 block against the given targets, reported
// alongside the probe on the raw F1 block. The decoder is any map from the
// F1 block to the reconstruction.
SeparabilityReport separability_check(
    const DenseMatrix& f1_block, const std::vector<int>& targets,
    const std::function<DenseMatrix(const DenseMatrix&)>& decoder,
    std::uint64_t seed);

// separability_check with the trained factor decoder from the artifacts,
// restricted to the pseudo-labeled nodes.
SeparabilityReport separability_check(const RunArtifacts& artifacts,
                                      std::uint64_t seed);

// Embedding file IO (magic "CIMG", version, N, width, row-major f64 LE).
void write_embeddings(const std::string& path, const DenseMatrix& m);
DenseMatrix read_embeddings(const std::string& path);

}  // namespace cimage
