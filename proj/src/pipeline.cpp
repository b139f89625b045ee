#include "cimage/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cimage/errors.hpp"
#include "cimage/metrics.hpp"
#include "json.hpp"

namespace cimage {

using nn::Var;
using ordered_json = nlohmann::ordered_json;

void TrainConfig::validate() const {
  if (K < 2 || D_ch < 1 || T < 1) throw ConfigError("config: K >= 2, D_ch/T >= 1");
  if (encoder_hidden < 1 || factor_recon_hidden < 1 || structure_hidden < 1)
    throw ConfigError("config: hidden widths must be >= 1");
  if (mask_rate < 0.0 || mask_rate >= 1.0)
    throw ConfigError("config: mask_rate must lie in [0, 1) for training");
  if (lambda1 < 0.0 || lambda2 < 0.0 || beta < 0.0)
    throw ConfigError("config: lambda and beta must be nonnegative");
  if (tau < 1.0) throw ConfigError("config: tau must be >= 1");
  if (pi != 0.5) throw ConfigError("config: only pi = 0.5 is supported");
  if (lr <= 0.0) throw ConfigError("config: lr must be positive");
  if (cluster_threshold <= -1.0) throw ConfigError("config: bad cluster_threshold");
  if (zero_tol < 0.0) throw ConfigError("config: zero_tol must be >= 0");
  if (epochs < 1 || warmup_epochs < 1 || warmup_epochs > epochs)
    throw ConfigError("config: need 1 <= warmup_epochs <= epochs");
  if (num_clusters < 2) throw ConfigError("config: num_clusters must be >= 2");
  if (labeled_cap < 4) throw ConfigError("config: labeled_cap must be >= 4");
}

namespace {

const char* axis_name(SoftmaxAxis a) {
  return a == SoftmaxAxis::kFactors ? "factors" : "neighbors";
}
const char* positives_name(StructurePositives p) {
  return p == StructurePositives::kMasked ? "masked" : "all";
}

}  // namespace

std::string TrainConfig::to_json() const {
  ordered_json j;
  j["K"] = K;
  j["D_ch"] = D_ch;
  j["T"] = T;
  j["encoder_hidden"] = encoder_hidden;
  j["factor_recon_hidden"] = factor_recon_hidden;
  j["structure_hidden"] = structure_hidden;
  j["mask_rate"] = mask_rate;
  j["lambda1"] = lambda1;
  j["lambda2"] = lambda2;
  j["tau"] = tau;
  j["beta"] = beta;
  j["pi"] = pi;
  j["lr"] = lr;
  j["cluster_threshold"] = cluster_threshold;
  j["zero_tol"] = zero_tol;
  j["epochs"] = epochs;
  j["warmup_epochs"] = warmup_epochs;
  j["num_clusters"] = num_clusters;
  j["labeled_cap"] = labeled_cap;
  j["max_beta_retries"] = max_beta_retries;
  j["seed"] = seed;
  j["softmax_axis"] = axis_name(softmax_axis);
  j["structure_positives"] = positives_name(structure_positives);
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  static const std::vector<std::string> known{
      "K", "D_ch", "T", "encoder_hidden", "factor_recon_hidden",
      "structure_hidden", "mask_rate", "lambda1", "lambda2", "tau", "beta",
      "pi", "lr", "cluster_threshold", "zero_tol", "epochs", "warmup_epochs",
      "num_clusters", "labeled_cap", "max_beta_retries", "seed", "softmax_axis",
      "structure_positives"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("config: unknown key '" + key + "'");
  }
  TrainConfig c;
  auto get = [&j](const char* key, auto& slot) {
    if (j.contains(key)) slot = j.at(key).get<std::decay_t<decltype(slot)>>();
  };
  get("K", c.K);
  get("D_ch", c.D_ch);
  get("T", c.T);
  get("encoder_hidden", c.encoder_hidden);
  get("factor_recon_hidden", c.factor_recon_hidden);
  get("structure_hidden", c.structure_hidden);
  get("mask_rate", c.mask_rate);
  get("lambda1", c.lambda1);
  get("lambda2", c.lambda2);
  get("tau", c.tau);
  get("beta", c.beta);
  get("pi", c.pi);
  get("lr", c.lr);
  get("cluster_threshold", c.cluster_threshold);
  get("zero_tol", c.zero_tol);
  get("epochs", c.epochs);
  get("warmup_epochs", c.warmup_epochs);
  get("num_clusters", c.num_clusters);
  get("labeled_cap", c.labeled_cap);
  get("max_beta_retries", c.max_beta_retries);
  get("seed", c.seed);
  if (j.contains("softmax_axis")) {
    const std::string a = j.at("softmax_axis").get<std::string>();
    if (a == "factors")
      c.softmax_axis = SoftmaxAxis::kFactors;
    else if (a == "neighbors")
      c.softmax_axis = SoftmaxAxis::kNeighbors;
    else
      throw ConfigError("config: softmax_axis must be 'factors' or 'neighbors'");
  }
  if (j.contains("structure_positives")) {
    const std::string p = j.at("structure_positives").get<std::string>();
    if (p == "masked")
      c.structure_positives = StructurePositives::kMasked;
    else if (p == "all")
      c.structure_positives = StructurePositives::kAll;
    else
      throw ConfigError("config: structure_positives must be 'masked' or 'all'");
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileMissingError("config missing: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string TrainConfig::hash() const {
  const std::string text = to_json();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

namespace {

// factor blocks of the flattened representation in a given factor order
Var gather_factor_blocks(Var z, const std::vector<std::size_t>& factors,
                         std::size_t d_ch) {
  std::vector<Var> parts;
  parts.reserve(factors.size());
  for (std::size_t f : factors) parts.push_back(nn::slice_cols(z, f * d_ch, d_ch));
  return nn::concat_cols(parts);
}

DenseMatrix reorder_columns(const DenseMatrix& z,
                            const std::vector<std::size_t>& factor_order,
                            std::size_t d_ch) {
  DenseMatrix out(z.rows(), z.cols());
  std::size_t pos = 0;
  for (std::size_t f : factor_order) {
    for (std::size_t c = 0; c < d_ch; ++c) {
      for (std::size_t r = 0; r < z.rows(); ++r)
        out(r, pos * d_ch + c) = z(r, f * d_ch + c);
    }
    ++pos;
  }
  return out;
}

DenseMatrix restore_original_order(const DenseMatrix& reordered,
                                   const std::vector<std::size_t>& factor_order,
                                   std::size_t d_ch) {
  DenseMatrix out(reordered.rows(), reordered.cols());
  std::size_t pos = 0;
  for (std::size_t f : factor_order) {
    for (std::size_t c = 0; c < d_ch; ++c)
      for (std::size_t r = 0; r < reordered.rows(); ++r)
        out(r, f * d_ch + c) = reordered(r, pos * d_ch + c);
    ++pos;
  }
  return out;
}

DenseMatrix slice_columns(const DenseMatrix& m, std::size_t c0, std::size_t width) {
  DenseMatrix out(m.rows(), width);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < width; ++c) out(r, c) = m(r, c0 + c);
  return out;
}

DenseMatrix apply_mlp(const nn::ParamSet& params, const std::string& prefix,
                      const DenseMatrix& x) {
  DenseMatrix h = matmul(x, params.at(prefix + ".w1").value);
  const DenseMatrix& b1 = params.at(prefix + ".b1").value;
  for (std::size_t r = 0; r < h.rows(); ++r)
    for (std::size_t c = 0; c < h.cols(); ++c) {
      h(r, c) += b1(0, c);
      if (h(r, c) < 0.0) h(r, c) = 0.0;
    }
  DenseMatrix out = matmul(h, params.at(prefix + ".w2").value);
  const DenseMatrix& b2 = params.at(prefix + ".b2").value;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += b2(0, c);
  return out;
}

std::string dataset_or(const std::string& id) { return id.empty() ? "unknown" : id; }

}  // namespace

RunArtifacts train(const TrainConfig& config, const Graph& graph,
                   const std::string& dataset_id, bool link_task,
                   double link_train_frac) {
  config.validate();
  RunArtifacts art;
  art.config = config;

  const Graph* train_graph = &graph;
  Graph link_subgraph(0, {}, DenseMatrix(0, 0));
  if (link_task) {
    art.link_split = split_link_eval(graph, link_train_frac, derive_seed(config.seed, 5));
    link_subgraph = subgraph_with_edges(graph, art.link_split->train_edges);
    train_graph = &link_subgraph;
  }

  MaskedGraph masked = mask_edges(*train_graph, config.mask_rate,
                                  derive_seed(config.seed, 1));

  EncoderConfig ecfg;
  ecfg.num_factors = config.K;
  ecfg.factor_dim = config.D_ch;
  ecfg.hidden_dim = config.encoder_hidden;
  ecfg.routing_iterations = config.T;
  ecfg.softmax_axis = config.softmax_axis;

  Rng init_rng(derive_seed(config.seed, 0));
  init_encoder_params(art.params, ecfg, train_graph->feature_dim(), init_rng);
  init_structure_decoder(art.params, ecfg.width(), config.structure_hidden, init_rng);

  EdgeList positives;
  positives.pairs = (config.structure_positives == StructurePositives::kMasked)
                        ? masked.masked_edges()
                        : train_graph->edges();
  if (positives.empty())
    throw ConfigError("train: structure positives are empty (mask_rate 0 with "
                      "structure_positives=masked)");

  bool partition_ready = false;

  auto run_epoch = [&](std::size_t epoch) {
    nn::Tape tape;
    Var z = encode(tape, art.params, masked, ecfg);
    EdgeList negatives = sample_negatives(*train_graph, positives.size(), EdgeList{},
                                          derive_seed(config.seed, 1000 + epoch));
    Var st = structure_loss(tape, art.params, z, positives, negatives);
    Var cl = clustering_loss(masked, z);
    EpochLog log;
    log.epoch = epoch;
    log.st = st.scalar();
    log.cl = cl.scalar();
    Var total{};
    if (partition_ready) {
      Var f1 = gather_factor_blocks(z, art.partition.f1_factors, config.D_ch);
      Var f2 = gather_factor_blocks(z, art.partition.f2_factors, config.D_ch);
      Var pred = factor_decoder_apply(tape, art.params, f1);
      Var ch = sce_loss(f2, pred, config.tau);
      log.ch = ch.scalar();
      total = total_loss(st, ch, cl, config.lambda1, config.lambda2);
    } else {
      total = total_loss(st, tape.scalar_constant(0.0), cl, 0.0, config.lambda2);
    }
    log.total = total.scalar();
    if (!std::isfinite(log.total))
      throw NonFiniteError("train: non-finite loss at epoch " + std::to_string(epoch));
    tape.backward(total);
    nn::adam_step(art.params, config.lr);
    art.per_epoch.push_back(log);
  };

  for (std::size_t epoch = 0; epoch < config.warmup_epochs; ++epoch) run_epoch(epoch);

  // pseudo-labels and the CI partition from the warmed-up representation
  DenseMatrix z_warm;
  {
    nn::Tape tape;
    z_warm = encode(tape, art.params, masked, ecfg).value();
  }
  const std::size_t min_labeled =
      std::max<std::size_t>(32, 4 * config.num_clusters);
  art.pseudo_labels = extract_pseudo_labels(
      z_warm, static_cast<int>(config.num_clusters), config.cluster_threshold,
      min_labeled, derive_seed(config.seed, 2));
  HsicStats stats = build_hsic_stats(z_warm, art.pseudo_labels, config.labeled_cap,
                                     derive_seed(config.seed, 3));
  PartitionResult sel =
      select_partition_with_retry(stats, config.K, config.D_ch, config.beta,
                                  config.zero_tol, config.max_beta_retries);
  art.partition = sel.partition;
  art.beta_used = sel.beta_used;
  art.ci_converged = sel.state.converged;
  art.ci_iterations = sel.state.iterations_run;
  init_factor_decoder(art.params, art.partition.f1_factors.size() * config.D_ch,
                      art.partition.f2_factors.size() * config.D_ch,
                      config.factor_recon_hidden, init_rng);
  partition_ready = true;

  for (std::size_t epoch = config.warmup_epochs; epoch < config.epochs; ++epoch)
    run_epoch(epoch);

  // final representation, stored as [F1 | F2] factor blocks
  DenseMatrix z_final;
  {
    nn::Tape tape;
    z_final = encode(tape, art.params, masked, ecfg).value();
  }
  art.column_order = art.partition.f1_factors;
  art.column_order.insert(art.column_order.end(), art.partition.f2_factors.begin(),
                          art.partition.f2_factors.end());
  art.embeddings = reorder_columns(z_final, art.column_order, config.D_ch);

  // metrics report
  ordered_json m;
  m["task"] = link_task ? "link" : "node";
  m["dataset"] = dataset_or(dataset_id);
  m["seed"] = config.seed;
  m["config_hash"] = config.hash();
  ordered_json values;
  const EpochLog& last = art.per_epoch.back();
  values["final_total"] = last.total;
  values["final_st"] = last.st;
  values["final_ch"] = last.ch;
  values["final_cl"] = last.cl;
  values["pseudo_label_count"] = art.pseudo_labels.node_ids.size();
  values["pseudo_label_fallback"] = art.pseudo_labels.used_fallback;
  if (train_graph->labels() && config.num_clusters <= 8)
    values["pseudo_label_accuracy"] =
        pseudo_label_accuracy(art.pseudo_labels, *train_graph->labels());
  values["beta_used"] = art.beta_used;
  values["ci_converged"] = art.ci_converged;
  values["ci_iterations"] = art.ci_iterations;
  values["ci_retries"] = sel.retries;
  values["f1_size"] = art.partition.f1_factors.size();
  values["f2_size"] = art.partition.f2_factors.size();
  if (link_task) {
    LinkMetrics lm = eval_link(art, art.link_split->test_pos, art.link_split->test_neg);
    values["auc"] = lm.auc;
    values["ap"] = lm.ap;
  }
  m["values"] = values;
  ordered_json epochs_json = ordered_json::array();
  for (const EpochLog& e : art.per_epoch) {
    ordered_json row;
    row["epoch"] = e.epoch;
    row["st"] = e.st;
    row["ch"] = e.ch;
    row["cl"] = e.cl;
    row["total"] = e.total;
    epochs_json.push_back(row);
  }
  m["per_epoch"] = epochs_json;
  art.metrics_json = m.dump(2) + "\n";
  return art;
}

std::vector<double> score_edges(const RunArtifacts& artifacts, const EdgeList& pairs) {
  DenseMatrix z = restore_original_order(artifacts.embeddings,
                                         artifacts.column_order, artifacts.config.D_ch);
  DenseMatrix products(pairs.size(), z.cols());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Edge& e = pairs.pairs[i];
    for (std::size_t c = 0; c < z.cols(); ++c)
      products(i, c) = z(e.u, c) * z(e.v, c);
  }
  DenseMatrix logits = apply_mlp(artifacts.params, "st", products);
  std::vector<double> out(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i)
    out[i] = 1.0 / (1.0 + std::exp(-logits(i, 0)));
  return out;
}

LinkMetrics eval_link(const RunArtifacts& artifacts, const EdgeList& test_pos,
                      const EdgeList& test_neg) {
  LinkMetrics lm;
  const std::vector<double> pos = score_edges(artifacts, test_pos);
  const std::vector<double> neg = score_edges(artifacts, test_neg);
  lm.auc = auc_score(pos, neg);
  lm.ap = average_precision(pos, neg);
  return lm;
}

RedundancyReport redundancy_check(const DenseMatrix& embeddings, std::size_t f1_width,
                                  const std::vector<int>& labels,
                                  const NodeSplit& split, std::uint64_t seed) {
  if (f1_width == 0 || f1_width >= embeddings.cols())
    throw ConfigError("redundancy_check: partition widths inconsistent");
  RedundancyReport report;
  report.acc_f1 = eval_node_linear_probe(slice_columns(embeddings, 0, f1_width),
                                         labels, split, seed);
  report.acc_f2 = eval_node_linear_probe(
      slice_columns(embeddings, f1_width, embeddings.cols() - f1_width), labels,
      split, seed);
  report.acc_both = eval_node_linear_probe(embeddings, labels, split, seed);
  return report;
}

SeparabilityReport separability_check(
    const DenseMatrix& f1_block, const std::vector<int>& targets,
    const std::function<DenseMatrix(const DenseMatrix&)>& decoder,
    std::uint64_t seed) {
  if (targets.size() != f1_block.rows())
    throw ShapeError("separability_check: target count must match rows");
  SeparabilityReport report;
  NodeSplit split = split_nodes(f1_block.rows(), 0.1, 0.1, seed);
  report.acc_reconstructed = eval_node_linear_probe(decoder(f1_block), targets,
                                                    split, seed);
  report.acc_raw_f1 = eval_node_linear_probe(f1_block, targets, split, seed);
  return report;
}

SeparabilityReport separability_check(const RunArtifacts& artifacts,
                                      std::uint64_t seed) {
  const PseudoLabels& pl = artifacts.pseudo_labels;
  DenseMatrix f1(pl.node_ids.size(), artifacts.f1_width());
  for (std::size_t i = 0; i < pl.node_ids.size(); ++i)
    for (std::size_t c = 0; c < artifacts.f1_width(); ++c)
      f1(i, c) = artifacts.embeddings(pl.node_ids[i], c);
  auto decoder = [&artifacts](const DenseMatrix& x) {
    return apply_mlp(artifacts.params, "ch", x);
  };
  return separability_check(f1, pl.labels, decoder, seed);
}

// --- artifact files -------------------------------------------------------

namespace {

constexpr char kEmbMagic[4] = {'C', 'I', 'M', 'G'};

void write_u32_stream(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64_stream(std::ofstream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32_stream(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64_stream(std::ifstream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_embeddings(const std::string& path, const DenseMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileMissingError("cannot open for write: " + path);
  out.write(kEmbMagic, 4);
  write_u32_stream(out, 1);
  write_u64_stream(out, m.rows());
  write_u64_stream(out, m.cols());
  for (double d : m.values()) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64_stream(out, bits);
  }
}

DenseMatrix read_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileMissingError("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kEmbMagic, 4) != 0)
    throw ParseError("bad magic in embeddings file: " + path);
  const std::uint32_t version = read_u32_stream(in);
  if (version != 1) throw ParseError("unsupported embeddings version");
  const std::uint64_t rows = read_u64_stream(in);
  const std::uint64_t cols = read_u64_stream(in);
  DenseMatrix m(rows, cols);
  for (double& d : m.values()) {
    std::uint64_t bits = read_u64_stream(in);
    std::memcpy(&d, &bits, 8);
  }
  if (!in) throw ParseError("truncated embeddings file: " + path);
  return m;
}

void RunArtifacts::save(const std::string& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  params.save(dir + "/params.bin");
  write_embeddings(dir + "/embeddings.bin", embeddings);

  ordered_json pj;
  pj["scores"] = partition.scores;
  pj["f1"] = partition.f1_factors;
  pj["f2"] = partition.f2_factors;
  pj["beta_used"] = beta_used;
  pj["converged"] = ci_converged;
  pj["iterations"] = ci_iterations;
  pj["column_order"] = column_order;
  pj["d_ch"] = config.D_ch;
  std::ofstream(dir + "/partition.json") << pj.dump(2) << "\n";

  std::ofstream csv(dir + "/pseudo_labels.csv");
  csv << "node_id,label,confidence\n";
  for (std::size_t i = 0; i < pseudo_labels.node_ids.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", pseudo_labels.confidences[i]);
    csv << pseudo_labels.node_ids[i] << "," << pseudo_labels.labels[i] << "," << buf
        << "\n";
  }

  std::ofstream(dir + "/config.json") << config.to_json() << "\n";
  std::ofstream(dir + "/metrics.json") << metrics_json;

  if (link_split) {
    ordered_json lj;
    auto edges_json = [](const EdgeList& edges) {
      ordered_json arr = ordered_json::array();
      for (const Edge& e : edges.pairs) arr.push_back({e.u, e.v});
      return arr;
    };
    lj["train_edges"] = edges_json(link_split->train_edges);
    lj["test_pos"] = edges_json(link_split->test_pos);
    lj["test_neg"] = edges_json(link_split->test_neg);
    std::ofstream(dir + "/link_split.json") << lj.dump() << "\n";
  }
}

RunArtifacts RunArtifacts::load(const std::string& dir) {
  RunArtifacts art;
  art.config = TrainConfig::load(dir + "/config.json");
  art.params = nn::ParamSet::load(dir + "/params.bin");
  art.embeddings = read_embeddings(dir + "/embeddings.bin");

  std::ifstream pin(dir + "/partition.json");
  if (!pin) throw FileMissingError("missing partition.json in " + dir);
  ordered_json pj;
  pin >> pj;
  art.partition.scores = pj.at("scores").get<std::vector<double>>();
  art.partition.f1_factors = pj.at("f1").get<std::vector<std::size_t>>();
  art.partition.f2_factors = pj.at("f2").get<std::vector<std::size_t>>();
  art.beta_used = pj.at("beta_used").get<double>();
  art.ci_converged = pj.at("converged").get<bool>();
  art.ci_iterations = pj.at("iterations").get<std::size_t>();
  art.column_order = pj.at("column_order").get<std::vector<std::size_t>>();

  std::ifstream csv(dir + "/pseudo_labels.csv");
  if (!csv) throw FileMissingError("missing pseudo_labels.csv in " + dir);
  std::string line;
  std::getline(csv, line);  // header
  art.pseudo_labels.num_clusters = static_cast<int>(art.config.num_clusters);
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    art.pseudo_labels.node_ids.push_back(static_cast<NodeId>(std::stoul(cell)));
    std::getline(ss, cell, ',');
    art.pseudo_labels.labels.push_back(std::stoi(cell));
    std::getline(ss, cell, ',');
    art.pseudo_labels.confidences.push_back(std::stod(cell));
  }

  std::ifstream min(dir + "/metrics.json");
  if (min) {
    std::stringstream ss;
    ss << min.rdbuf();
    art.metrics_json = ss.str();
  }

  std::ifstream lin(dir + "/link_split.json");
  if (lin) {
    ordered_json lj;
    lin >> lj;
    LinkEvalSplit split;
    auto parse_edges = [](const ordered_json& arr) {
      EdgeList out;
      for (const auto& pair : arr)
        out.pairs.emplace_back(pair.at(0).get<NodeId>(), pair.at(1).get<NodeId>());
      return out;
    };
    split.train_edges = parse_edges(lj.at("train_edges"));
    split.test_pos = parse_edges(lj.at("test_pos"));
    split.test_neg = parse_edges(lj.at("test_neg"));
    art.link_split = std::move(split);
  }
  return art;
}

}  // namespace cimage
