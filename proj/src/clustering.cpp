#include "cimage/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "cimage/errors.hpp"
#include "cimage/rng.hpp"

namespace cimage {

double modularity_hard(const Graph& g, const std::vector<int>& assignment) {
  if (assignment.size() != g.num_nodes())
    throw ShapeError("modularity_hard: assignment length must equal node count");
  const double m = static_cast<double>(g.num_edges());
  if (m == 0.0) throw ConfigError("modularity_hard: graph has no edges");

  std::map<int, double> within, degree;
  for (const Edge& e : g.edges()) {
    if (assignment[e.u] == assignment[e.v]) within[assignment[e.u]] += 1.0;
  }
  for (std::size_t v = 0; v < g.num_nodes(); ++v)
    degree[assignment[v]] += static_cast<double>(g.degree(static_cast<NodeId>(v)));

  double q = 0.0;
  for (const auto& [cluster, d_c] : degree) {
    const double m_c = within.count(cluster) ? within.at(cluster) : 0.0;
    const double frac = d_c / (2.0 * m);
    q += m_c / m - frac * frac;
  }
  return q;
}

nn::Var clustering_loss(const MaskedGraph& masked, nn::Var z_flat,
                        std::size_t batch_size) {
  using namespace nn;
  const std::size_t n = masked.num_nodes();
  if (z_flat.rows() != n)
    throw ShapeError("clustering_loss: representation rows must equal node count");
  const double m = static_cast<double>(masked.num_visible());
  if (m == 0.0) throw ConfigError("clustering_loss: no visible edges");
  Tape& tape = *z_flat.tape;

  // visible CSR for the adjacency term
  std::vector<std::size_t> offsets(n + 1);
  for (std::size_t v = 0; v < n; ++v)
    offsets[v + 1] = offsets[v] + masked.visible_degree(static_cast<NodeId>(v));
  std::vector<std::uint32_t> targets(offsets.back());
  for (std::size_t v = 0; v < n; ++v) {
    std::size_t pos = offsets[v];
    for (const NodeId* u = masked.visible_neighbors_begin(static_cast<NodeId>(v));
         u != masked.visible_neighbors_end(static_cast<NodeId>(v)); ++u)
      targets[pos++] = *u;
  }

  // Tr(A Z Z^T) accumulated over node batches
  Var az = spmm(offsets, targets, z_flat);
  const std::size_t batch = (batch_size == 0) ? n : batch_size;
  Var edge_term = tape.scalar_constant(0.0);
  for (std::size_t r0 = 0; r0 < n; r0 += batch) {
    const std::size_t height = std::min(batch, n - r0);
    Var part = sum_all(mul(slice_rows(az, r0, height), slice_rows(z_flat, r0, height)));
    edge_term = add(edge_term, part);
  }

  // rank-one degree correction: ||d^T Z||^2 / 2m
  DenseMatrix drow(1, n);
  for (std::size_t v = 0; v < n; ++v)
    drow(0, v) = static_cast<double>(masked.visible_degree(static_cast<NodeId>(v)));
  Var dz = matmul(tape.constant(drow), z_flat);
  Var deg_term = scale(sum_all(mul(dz, dz)), 1.0 / (2.0 * m));

  // -Q = -(1/2m) (Tr(A Z Z^T) - ||d^T Z||^2 / 2m)
  return scale(sub(edge_term, deg_term), -1.0 / (2.0 * m));
}

namespace {

void normalize_rows(DenseMatrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double* row = m.row(r);
    double sq = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) sq += row[j] * row[j];
    const double norm = std::sqrt(sq);
    if (norm >= 1e-12)
      for (std::size_t j = 0; j < m.cols(); ++j) row[j] /= norm;
    else
      for (std::size_t j = 0; j < m.cols(); ++j) row[j] = 0.0;
  }
}

double cosine(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) s += a[j] * b[j];
  return s;
}

// spherical k-means with k-means++ seeding; returns assignments
std::vector<int> spherical_kmeans(const DenseMatrix& x, int k, Rng& rng) {
  const std::size_t n = x.rows(), d = x.cols();
  DenseMatrix centers(k, d);

  // k-means++ on the squared chordal distance 2(1 - cos)
  std::vector<double> min_dist(n, 2.0);
  std::size_t first = rng.uniform_index(n);
  for (std::size_t j = 0; j < d; ++j) centers(0, j) = x(first, j);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dist = 2.0 * (1.0 - cosine(x.row(i), centers.row(c - 1), d));
      min_dist[i] = std::min(min_dist[i], std::max(dist, 0.0));
      total += min_dist[i] * min_dist[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total, acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += min_dist[i] * min_dist[i];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.uniform_index(n);
    }
    for (std::size_t j = 0; j < d; ++j) centers(c, j) = x(pick, j);
  }

  std::vector<int> assign(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_cos = -2.0;
      for (int c = 0; c < k; ++c) {
        const double cs = cosine(x.row(i), centers.row(c), d);
        if (cs > best_cos + 1e-15) {
          best_cos = cs;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;

    centers.fill(0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (std::size_t j = 0; j < d; ++j) centers(assign[i], j) += x(i, j);
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // reseed an empty cluster from the point farthest from its center
        std::size_t worst = 0;
        double worst_cos = 2.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double cs = cosine(x.row(i), centers.row(assign[i]), d);
          if (cs < worst_cos) {
            worst_cos = cs;
            worst = i;
          }
        }
        for (std::size_t j = 0; j < d; ++j) centers(c, j) = x(worst, j);
      }
    }
    normalize_rows(centers);
  }
  return assign;
}

}  // namespace

PseudoLabels extract_pseudo_labels(const DenseMatrix& z_flat, int num_clusters,
                                   double threshold, std::size_t min_labeled,
                                   std::uint64_t seed) {
  if (num_clusters < 2) throw ConfigError("extract_pseudo_labels: need >= 2 clusters");
  if (static_cast<std::size_t>(num_clusters) > z_flat.rows())
    throw ConfigError("extract_pseudo_labels: more clusters than nodes");

  DenseMatrix x = z_flat;
  normalize_rows(x);
  Rng rng(seed);
  std::vector<int> assign = spherical_kmeans(x, num_clusters, rng);

  const std::size_t n = x.rows(), d = x.cols();
  // confidence(v) = mean cosine to the members of v's cluster (v included):
  // the empirical mean of the soft indicator restricted to the claimed cluster
  DenseMatrix cluster_sum(num_clusters, d);
  std::vector<double> cluster_count(num_clusters, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    cluster_count[assign[i]] += 1.0;
    for (std::size_t j = 0; j < d; ++j) cluster_sum(assign[i], j) += x(i, j);
  }
  std::vector<double> confidence(n);
  for (std::size_t i = 0; i < n; ++i)
    confidence[i] =
        cosine(x.row(i), cluster_sum.row(assign[i]), d) / cluster_count[assign[i]];

  PseudoLabels out;
  out.num_clusters = num_clusters;
  for (std::size_t i = 0; i < n; ++i) {
    if (confidence[i] > threshold) {
      out.node_ids.push_back(static_cast<NodeId>(i));
      out.labels.push_back(assign[i]);
      out.confidences.push_back(confidence[i]);
    }
  }

  if (out.node_ids.size() < min_labeled) {
    // fallback: keep the top fifth of every cluster by confidence
    constexpr double kFallbackFraction = 0.2;
    out = PseudoLabels{};
    out.num_clusters = num_clusters;
    out.used_fallback = true;
    for (int c = 0; c < num_clusters; ++c) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < n; ++i)
        if (assign[i] == c) members.push_back(i);
      if (members.empty()) continue;
      std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
        if (confidence[a] != confidence[b]) return confidence[a] > confidence[b];
        return a < b;
      });
      const std::size_t keep = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::floor(kFallbackFraction * members.size())));
      for (std::size_t i = 0; i < keep; ++i) {
        out.node_ids.push_back(static_cast<NodeId>(members[i]));
        out.labels.push_back(c);
        out.confidences.push_back(confidence[members[i]]);
      }
    }
  }

  // keep node order sorted for deterministic downstream consumption
  std::vector<std::size_t> order(out.node_ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return out.node_ids[a] < out.node_ids[b]; });
  PseudoLabels sorted;
  sorted.num_clusters = out.num_clusters;
  sorted.used_fallback = out.used_fallback;
  for (std::size_t i : order) {
    sorted.node_ids.push_back(out.node_ids[i]);
    sorted.labels.push_back(out.labels[i]);
    sorted.confidences.push_back(out.confidences[i]);
  }
  return sorted;
}

double pseudo_label_accuracy(const PseudoLabels& pl, const std::vector<int>& truth) {
  if (pl.node_ids.empty()) return 0.0;
  const int k = pl.num_clusters;
  if (k > 8) throw ConfigError("pseudo_label_accuracy: permutation search limited to k<=8");
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0.0;
  do {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pl.node_ids.size(); ++i)
      if (perm[pl.labels[i]] == truth[pl.node_ids[i]]) ++hits;
    best = std::max(best, static_cast<double>(hits) /
                              static_cast<double>(pl.node_ids.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace cimage
