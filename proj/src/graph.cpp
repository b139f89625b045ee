#include "cimage/graph.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "cimage/errors.hpp"
#include "json.hpp"

namespace cimage {

namespace {

void build_csr(std::size_t num_nodes, const std::vector<Edge>& edges,
               std::vector<std::size_t>& offsets, std::vector<NodeId>& targets) {
  std::vector<std::size_t> deg(num_nodes, 0);
  for (const Edge& e : edges) {
    ++deg[e.u];
    ++deg[e.v];
  }
  offsets.assign(num_nodes + 1, 0);
  for (std::size_t i = 0; i < num_nodes; ++i) offsets[i + 1] = offsets[i] + deg[i];
  targets.assign(offsets.back(), 0);
  std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
  for (const Edge& e : edges) {
    targets[cursor[e.u]++] = e.v;
    targets[cursor[e.v]++] = e.u;
  }
  for (std::size_t i = 0; i < num_nodes; ++i)
    std::sort(targets.begin() + offsets[i], targets.begin() + offsets[i + 1]);
}

std::vector<Edge> canonicalize_edges(std::vector<Edge> edges) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

}  // namespace

Graph::Graph(std::size_t num_nodes, std::vector<Edge> edges, DenseMatrix features,
             std::optional<std::vector<int>> labels, std::optional<int> num_classes)
    : num_nodes_(num_nodes),
      edges_(canonicalize_edges(std::move(edges))),
      features_(std::move(features)),
      labels_(std::move(labels)),
      num_classes_(num_classes) {
  for (const Edge& e : edges_) {
    if (e.u == e.v) throw ShapeError("graph: self-loop not allowed");
    if (e.v >= num_nodes_) throw ShapeError("graph: edge endpoint out of range");
  }
  if (features_.rows() != num_nodes_)
    throw ShapeError("graph: feature row count must equal node count");
  if (labels_ && labels_->size() != num_nodes_)
    throw ShapeError("graph: label count must equal node count");
  build_csr(num_nodes_, edges_, csr_offsets_, csr_targets_);
}

bool Graph::has_edge(NodeId a, NodeId b) const {
  if (a == b) return false;
  Edge e(a, b);
  return std::binary_search(edges_.begin(), edges_.end(), e);
}

MaskedGraph::MaskedGraph(const Graph& base, std::vector<Edge> visible,
                         std::vector<Edge> masked, double mask_rate)
    : base_(&base),
      visible_(canonicalize_edges(std::move(visible))),
      masked_(canonicalize_edges(std::move(masked))),
      mask_rate_(mask_rate) {
  if (visible_.size() + masked_.size() != base.num_edges())
    throw ShapeError("masked graph: visible+masked must cover the base edges");
  build_csr(base.num_nodes(), visible_, csr_offsets_, csr_targets_);
}

namespace {

std::filesystem::path resolve_relative(const std::filesystem::path& base_dir,
                                       const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_absolute()) return path;
  return base_dir / path;
}

std::vector<Edge> read_edge_file(const std::filesystem::path& path, NodeId& max_node) {
  std::ifstream in(path);
  if (!in) throw FileMissingError("edge file missing: " + path.string());
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  max_node = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    long long a = -1, b = -1;
    if (!(ss >> a >> b) || a < 0 || b < 0)
      throw ParseError("edge file " + path.string() + ": malformed line " +
                       std::to_string(line_no));
    if (a == b) continue;  // drop self-loops on ingest
    Edge e(static_cast<NodeId>(a), static_cast<NodeId>(b));
    max_node = std::max(max_node, e.v);
    edges.push_back(e);
  }
  return edges;
}

DenseMatrix read_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileMissingError("feature file missing: " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r,") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ParseError("feature file " + path.string() + ": malformed line " +
                         std::to_string(line_no));
      }
    }
    if (width == 0) width = row.size();
    if (row.size() != width)
      throw ParseError("feature file " + path.string() + ": ragged row at line " +
                       std::to_string(line_no));
    rows.push_back(std::move(row));
  }
  DenseMatrix m(rows.size(), width);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j) m(i, j) = rows[i][j];
  return m;
}

std::vector<int> read_label_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileMissingError("label file missing: " + path.string());
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      labels.push_back(std::stoi(line));
    } catch (const std::exception&) {
      throw ParseError("label file " + path.string() + ": malformed line " +
                       std::to_string(line_no));
    }
  }
  return labels;
}

}  // namespace

Graph load_graph(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw FileMissingError("manifest missing: " + manifest_path);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const std::exception& e) {
    throw ParseError("manifest " + manifest_path + ": " + e.what());
  }
  if (!manifest.contains("edges") || !manifest.contains("features"))
    throw ParseError("manifest must name 'edges' and 'features' files");

  const auto base_dir = std::filesystem::path(manifest_path).parent_path();
  NodeId max_node = 0;
  auto edges = read_edge_file(resolve_relative(base_dir, manifest["edges"]), max_node);
  auto features = read_feature_csv(resolve_relative(base_dir, manifest["features"]));

  if (!edges.empty() && features.rows() != static_cast<std::size_t>(max_node) + 1)
    throw ParseError("feature row count " + std::to_string(features.rows()) +
                     " does not equal max node index + 1 = " +
                     std::to_string(max_node + 1));

  std::optional<std::vector<int>> labels;
  if (manifest.contains("labels") && !manifest["labels"].is_null()) {
    labels = read_label_file(resolve_relative(base_dir, manifest["labels"]));
    if (labels->size() != features.rows())
      throw ParseError("label count does not match feature rows");
  }
  std::optional<int> num_classes;
  if (manifest.contains("num_classes") && !manifest["num_classes"].is_null())
    num_classes = manifest["num_classes"].get<int>();
  if (!num_classes && labels) {
    int mx = -1;
    for (int l : *labels) mx = std::max(mx, l);
    num_classes = mx + 1;
  }
  return Graph(features.rows(), std::move(edges), std::move(features),
               std::move(labels), num_classes);
}

Graph generate_sbm(std::size_t n, std::size_t k, double p_in, double p_out,
                   std::size_t feat_dim, double feat_noise, std::uint64_t seed) {
  if (k == 0 || n % k != 0)
    throw ConfigError("generate_sbm: n must be divisible by k");
  if (p_in < 0 || p_in > 1 || p_out < 0 || p_out > 1)
    throw ConfigError("generate_sbm: probabilities must lie in [0,1]");

  const std::size_t block = n / k;
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i / block);

  Rng rng(seed);

  // community mean directions
  DenseMatrix means(k, feat_dim);
  for (std::size_t c = 0; c < k; ++c) {
    double norm = 0.0;
    for (std::size_t j = 0; j < feat_dim; ++j) {
      means(c, j) = rng.normal();
      norm += means(c, j) * means(c, j);
    }
    norm = std::sqrt(norm);
    if (norm > 0)
      for (std::size_t j = 0; j < feat_dim; ++j) means(c, j) /= norm;
  }

  DenseMatrix features(n, feat_dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < feat_dim; ++j)
      features(i, j) = means(labels[i], j) + rng.normal() * feat_noise;

  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = (labels[i] == labels[j]) ? p_in : p_out;
      if (p <= 0.0) continue;
      if (p >= 1.0 || rng.uniform() < p)
        edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
    }
  }

  return Graph(n, std::move(edges), std::move(features), labels,
               static_cast<int>(k));
}

MaskedGraph mask_edges(const Graph& g, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate > 1.0) throw ConfigError("mask_edges: rate must be in [0,1]");
  const std::size_t num_masked =
      static_cast<std::size_t>(std::floor(rate * static_cast<double>(g.num_edges())));
  std::vector<std::size_t> idx(g.num_edges());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  // partial Fisher-Yates: first num_masked entries become the masked sample
  for (std::size_t i = 0; i < num_masked; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  std::vector<Edge> masked, visible;
  masked.reserve(num_masked);
  visible.reserve(g.num_edges() - num_masked);
  std::vector<bool> is_masked(g.num_edges(), false);
  for (std::size_t i = 0; i < num_masked; ++i) is_masked[idx[i]] = true;
  for (std::size_t i = 0; i < g.num_edges(); ++i) {
    if (is_masked[i])
      masked.push_back(g.edges()[i]);
    else
      visible.push_back(g.edges()[i]);
  }
  return MaskedGraph(g, std::move(visible), std::move(masked), rate);
}

EdgeList sample_negatives(const Graph& g, std::size_t count, const EdgeList& exclude,
                          std::uint64_t seed) {
  const std::size_t n = g.num_nodes();
  std::set<Edge> excluded(exclude.pairs.begin(), exclude.pairs.end());
  std::size_t excluded_nonedges = 0;
  for (const Edge& e : excluded)
    if (!g.has_edge(e.u, e.v)) ++excluded_nonedges;

  const std::size_t total_pairs = n * (n - 1) / 2;
  const std::size_t available = total_pairs - g.num_edges() - excluded_nonedges;
  if (count > available)
    throw InsufficientNonEdgesError("sample_negatives: requested " +
                                    std::to_string(count) + " but only " +
                                    std::to_string(available) + " non-edges exist");

  Rng rng(seed);
  EdgeList out;
  std::set<Edge> chosen;

  if (available <= 2 * count || total_pairs <= 4096) {
    // dense case: enumerate all admissible non-edges and sample by shuffle
    std::vector<Edge> pool;
    pool.reserve(available);
    for (NodeId u = 0; u + 1 < n; ++u)
      for (NodeId v = u + 1; v < n; ++v) {
        Edge e(u, v);
        if (g.has_edge(u, v) || excluded.count(e)) continue;
        pool.push_back(e);
      }
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(pool.size() - i));
      std::swap(pool[i], pool[j]);
      out.pairs.push_back(pool[i]);
    }
  } else {
    while (out.pairs.size() < count) {
      NodeId u = static_cast<NodeId>(rng.uniform_index(n));
      NodeId v = static_cast<NodeId>(rng.uniform_index(n));
      if (u == v) continue;
      Edge e(u, v);
      if (g.has_edge(u, v) || excluded.count(e) || chosen.count(e)) continue;
      chosen.insert(e);
      out.pairs.push_back(e);
    }
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  return out;
}

LinkEvalSplit split_link_eval(const Graph& g, double train_frac, std::uint64_t seed) {
  if (train_frac <= 0.0 || train_frac >= 1.0)
    throw ConfigError("split_link_eval: train_frac must lie strictly in (0,1)");
  const std::size_t num_train = static_cast<std::size_t>(
      std::llround(train_frac * static_cast<double>(g.num_edges())));
  if (num_train >= g.num_edges())
    throw EmptyTestSplitError("split_link_eval: no edges left for the test split");

  std::vector<Edge> shuffled = g.edges();
  Rng rng(derive_seed(seed, 11));
  rng.shuffle(shuffled);

  LinkEvalSplit split;
  split.train_edges.pairs.assign(shuffled.begin(), shuffled.begin() + num_train);
  split.test_pos.pairs.assign(shuffled.begin() + num_train, shuffled.end());
  std::sort(split.train_edges.pairs.begin(), split.train_edges.pairs.end());
  std::sort(split.test_pos.pairs.begin(), split.test_pos.pairs.end());
  split.test_neg =
      sample_negatives(g, split.test_pos.size(), EdgeList{}, derive_seed(seed, 12));
  return split;
}

Graph subgraph_with_edges(const Graph& g, const EdgeList& edges) {
  return Graph(g.num_nodes(), edges.pairs, g.features(), g.labels(), g.num_classes());
}

}  // namespace cimage
