#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "cimage/clustering.hpp"
#include "cimage/errors.hpp"
#include "cimage/graph.hpp"
#include "cimage/rng.hpp"

using namespace cimage;

namespace {

Graph two_triangles() {
  std::vector<Edge> edges{{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}};
  return Graph(6, edges, DenseMatrix::zeros(6, 1));
}

// direct directed-pair evaluation of Q, the brute-force oracle
double modularity_bruteforce(const Graph& g, const std::vector<int>& a) {
  const double m = static_cast<double>(g.num_edges());
  const std::size_t n = g.num_nodes();
  double q = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (a[i] != a[j]) continue;
      const double adj =
          g.has_edge(static_cast<NodeId>(i), static_cast<NodeId>(j)) ? 1.0 : 0.0;
      q += adj - g.degree(static_cast<NodeId>(i)) * g.degree(static_cast<NodeId>(j)) /
                     (2.0 * m);
    }
  return q / (2.0 * m);
}

Graph random_graph(std::size_t n, double p, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Edge> edges;
  for (NodeId u = 0; u + 1 < n; ++u)
    for (NodeId v = u + 1; v < n; ++v)
      if (rng.uniform() < p) edges.emplace_back(u, v);
  return Graph(n, edges, DenseMatrix::zeros(n, 1));
}

}  // namespace

TEST_CASE("modularity: one cluster gives exactly zero") {
  Graph g = random_graph(10, 0.4, 3);
  std::vector<int> a(10, 0);
  CHECK(modularity_hard(g, a) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("modularity: two disjoint triangles split correctly give 0.5") {
  Graph g = two_triangles();
  std::vector<int> a{0, 0, 0, 1, 1, 1};
  CHECK(modularity_hard(g, a) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("modularity: misassignment strictly decreases Q") {
  Graph g = two_triangles();
  std::vector<int> a{0, 0, 1, 1, 1, 1};
  CHECK(modularity_hard(g, a) < 0.5);
}

TEST_CASE("modularity: invariant under cluster-id permutation") {
  Graph g = random_graph(12, 0.3, 7);
  std::vector<int> a{0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2};
  std::vector<int> b{2, 0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1};
  CHECK(modularity_hard(g, a) == doctest::Approx(modularity_hard(g, b)).epsilon(1e-15));
}

TEST_CASE("modularity: matches brute-force directed-pair oracle; bounded") {
  Rng pick(99);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const std::size_t n = 4 + pick.uniform_index(9);  // 4..12
    Graph g = random_graph(n, 0.45, 1000 + seed);
    if (g.num_edges() == 0) continue;
    std::vector<int> a(n);
    for (auto& c : a) c = static_cast<int>(pick.uniform_index(3));
    const double q = modularity_hard(g, a);
    CHECK(q == doctest::Approx(modularity_bruteforce(g, a)).epsilon(1e-12));
    CHECK(q >= -0.5 - 1e-12);
    CHECK(q <= 1.0 + 1e-12);
  }
}

TEST_CASE("clustering_loss: hard one-hot assignment equals -Q") {
  Rng pick(5);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t n = 5 + pick.uniform_index(8);
    Graph g = random_graph(n, 0.5, 2000 + seed);
    if (g.num_edges() == 0) continue;
    MaskedGraph masked = mask_edges(g, 0.0, 1);  // all edges visible
    std::vector<int> a(n);
    for (auto& c : a) c = static_cast<int>(pick.uniform_index(3));

    DenseMatrix h(n, 3);
    for (std::size_t i = 0; i < n; ++i) h(i, a[i]) = 1.0;
    nn::Tape tape;
    nn::Var loss = clustering_loss(masked, tape.constant(h));
    CHECK(std::abs(loss.scalar() + modularity_hard(g, a)) < 1e-10);
  }
}

TEST_CASE("clustering_loss: all-ones single column gives zero") {
  Graph g = two_triangles();
  MaskedGraph masked = mask_edges(g, 0.0, 1);
  nn::Tape tape;
  nn::Var loss = clustering_loss(masked, tape.constant(DenseMatrix(6, 1, 1.0)));
  CHECK(std::abs(loss.scalar()) < 1e-12);
}

TEST_CASE("clustering_loss: batch size 1 equals full-graph evaluation") {
  Graph g = random_graph(14, 0.4, 11);
  MaskedGraph masked = mask_edges(g, 0.3, 2);
  Rng rng(17);
  DenseMatrix z = DenseMatrix::gaussian(14, 6, rng);
  nn::Tape t1, t2;
  const double full = clustering_loss(masked, t1.constant(z), 0).scalar();
  const double batched = clustering_loss(masked, t2.constant(z), 1).scalar();
  CHECK(std::abs(full - batched) < 1e-10);
}

TEST_CASE("clustering_loss: zero visible edges is an error") {
  Graph g = two_triangles();
  MaskedGraph masked = mask_edges(g, 1.0, 1);
  nn::Tape tape;
  CHECK_THROWS_AS(clustering_loss(masked, tape.constant(DenseMatrix(6, 2, 1.0))),
                  ConfigError);
}

TEST_CASE("extract_pseudo_labels: two cliques separate into components") {
  // separated unit-vector clusters stand in for a trained representation
  Rng rng(23);
  DenseMatrix z(8, 4);
  for (std::size_t i = 0; i < 8; ++i) {
    const bool second = i >= 4;
    z(i, 0) = second ? 0.01 * rng.normal() : 1.0 + 0.01 * rng.normal();
    z(i, 1) = second ? 1.0 + 0.01 * rng.normal() : 0.01 * rng.normal();
    z(i, 2) = 0.01 * rng.normal();
    z(i, 3) = 0.01 * rng.normal();
  }
  PseudoLabels pl = extract_pseudo_labels(z, 2, 0.99, 4, 7);
  REQUIRE(pl.node_ids.size() == 8);
  CHECK(!pl.used_fallback);
  // components-as-clusters up to label swap
  CHECK(pl.labels[0] == pl.labels[1]);
  CHECK(pl.labels[4] == pl.labels[5]);
  CHECK(pl.labels[0] != pl.labels[4]);
  std::vector<int> truth{0, 0, 0, 0, 1, 1, 1, 1};
  CHECK(pseudo_label_accuracy(pl, truth) == doctest::Approx(1.0));
  for (double c : pl.confidences) CHECK(c > 0.99);
}

TEST_CASE("extract_pseudo_labels: impossible threshold engages fallback") {
  Rng rng(29);
  DenseMatrix z = DenseMatrix::gaussian(20, 5, rng);
  PseudoLabels pl = extract_pseudo_labels(z, 3, 1.01, 4, 3);
  CHECK(pl.used_fallback);
  CHECK(!pl.node_ids.empty());
  // sorted unique node ids
  std::set<NodeId> seen;
  NodeId prev = 0;
  for (std::size_t i = 0; i < pl.node_ids.size(); ++i) {
    if (i > 0) CHECK(pl.node_ids[i] > prev);
    prev = pl.node_ids[i];
    CHECK(seen.insert(pl.node_ids[i]).second);
  }
}

TEST_CASE("extract_pseudo_labels: deterministic per seed") {
  Rng rng(31);
  DenseMatrix z = DenseMatrix::gaussian(30, 6, rng);
  PseudoLabels a = extract_pseudo_labels(z, 3, 0.5, 5, 13);
  PseudoLabels b = extract_pseudo_labels(z, 3, 0.5, 5, 13);
  CHECK(a.node_ids == b.node_ids);
  CHECK(a.labels == b.labels);
  CHECK(a.confidences == b.confidences);
}

TEST_CASE("extract_pseudo_labels: num_clusters > N is an error") {
  DenseMatrix z(3, 2, 1.0);
  CHECK_THROWS_AS(extract_pseudo_labels(z, 4, 0.9, 1, 1), ConfigError);
}
