#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "cimage/ci_select.hpp"
#include "cimage/metrics.hpp"
#include "cimage/pipeline.hpp"
#include "cimage/probe.hpp"
#include "json.hpp"

using namespace cimage;
using ordered_json = nlohmann::ordered_json;

namespace {

int cmd_gen_sbm(const std::string& out, std::size_t nodes, std::size_t communities,
                double p_in, double p_out, std::size_t feat_dim, double feat_noise,
                std::uint64_t seed) {
  Graph g = generate_sbm(nodes, communities, p_in, p_out, feat_dim, feat_noise, seed);
  namespace fs = std::filesystem;
  const fs::path manifest_path(out);
  const fs::path dir = manifest_path.parent_path().empty()
                           ? fs::path(".")
                           : manifest_path.parent_path();
  fs::create_directories(dir);
  const std::string stem = manifest_path.stem().string();

  std::ofstream edges(dir / (stem + "_edges.txt"));
  for (const Edge& e : g.edges()) edges << e.u << " " << e.v << "\n";

  std::ofstream features(dir / (stem + "_features.csv"));
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    for (std::size_t j = 0; j < g.feature_dim(); ++j) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", g.features()(i, j));
      features << (j ? "," : "") << buf;
    }
    features << "\n";
  }

  std::ofstream labels(dir / (stem + "_labels.txt"));
  for (int l : *g.labels()) labels << l << "\n";

  ordered_json manifest;
  manifest["edges"] = stem + "_edges.txt";
  manifest["features"] = stem + "_features.csv";
  manifest["labels"] = stem + "_labels.txt";
  manifest["num_classes"] = static_cast<int>(communities);
  std::ofstream(out) << manifest.dump(2) << "\n";
  std::cout << "wrote " << out << " (" << g.num_nodes() << " nodes, "
            << g.num_edges() << " edges)\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& graph_path,
              const std::string& out_dir, const std::string& task,
              double link_train_frac) {
  TrainConfig config = TrainConfig::load(config_path);
  Graph g = load_graph(graph_path);
  RunArtifacts art = train(config, g, graph_path, task == "link", link_train_frac);
  art.save(out_dir);
  std::cout << art.metrics_json;
  return 0;
}

int cmd_eval_node(const std::string& artifacts_dir, const std::string& graph_path,
                  double train_frac, double val_frac, std::uint64_t seed,
                  const std::string& out_path) {
  RunArtifacts art = RunArtifacts::load(artifacts_dir);
  Graph g = load_graph(graph_path);
  if (!g.labels()) throw ConfigError("eval node: the graph manifest has no labels");
  NodeSplit split = split_nodes(g.num_nodes(), train_frac, val_frac, seed);
  const double acc = eval_node_linear_probe(art.embeddings, *g.labels(), split, seed);
  RedundancyReport rr =
      redundancy_check(art.embeddings, art.f1_width(), *g.labels(), split, seed);
  SeparabilityReport sr = separability_check(art, seed);

  ordered_json report;
  report["task"] = "node-eval";
  report["dataset"] = graph_path;
  report["seed"] = seed;
  report["config_hash"] = art.config.hash();
  ordered_json values;
  values["accuracy"] = acc;
  values["acc_f1"] = rr.acc_f1;
  values["acc_f2"] = rr.acc_f2;
  values["acc_both"] = rr.acc_both;
  values["redundancy_gap"] = rr.gap();
  values["separability_reconstructed"] = sr.acc_reconstructed;
  values["separability_raw_f1"] = sr.acc_raw_f1;
  report["values"] = values;
  const std::string text = report.dump(2) + "\n";
  if (!out_path.empty()) std::ofstream(out_path) << text;
  std::cout << text;
  return 0;
}

int cmd_eval_link(const std::string& artifacts_dir, const std::string& graph_path,
                  double train_frac, std::uint64_t seed, const std::string& out_path) {
  RunArtifacts art = RunArtifacts::load(artifacts_dir);
  EdgeList test_pos, test_neg;
  if (art.link_split) {
    test_pos = art.link_split->test_pos;
    test_neg = art.link_split->test_neg;
  } else {
    // artifacts trained without a link split: build one from the graph
    Graph g = load_graph(graph_path);
    LinkEvalSplit split = split_link_eval(g, train_frac, seed);
    test_pos = split.test_pos;
    test_neg = split.test_neg;
  }
  LinkMetrics lm = eval_link(art, test_pos, test_neg);

  ordered_json report;
  report["task"] = "link-eval";
  report["dataset"] = graph_path;
  report["seed"] = seed;
  report["config_hash"] = art.config.hash();
  ordered_json values;
  values["auc"] = lm.auc;
  values["ap"] = lm.ap;
  values["test_edges"] = test_pos.size();
  report["values"] = values;
  const std::string text = report.dump(2) + "\n";
  if (!out_path.empty()) std::ofstream(out_path) << text;
  std::cout << text;
  return 0;
}

int cmd_ci_score(const std::string& artifacts_dir) {
  RunArtifacts art = RunArtifacts::load(artifacts_dir);
  const TrainConfig& cfg = art.config;
  // stats are built in original factor order
  DenseMatrix z(art.embeddings.rows(), art.embeddings.cols());
  std::size_t pos = 0;
  for (std::size_t f : art.column_order) {
    for (std::size_t c = 0; c < cfg.D_ch; ++c)
      for (std::size_t r = 0; r < z.rows(); ++r)
        z(r, f * cfg.D_ch + c) = art.embeddings(r, pos * cfg.D_ch + c);
    ++pos;
  }
  HsicStats stats =
      build_hsic_stats(z, art.pseudo_labels, cfg.labeled_cap, derive_seed(cfg.seed, 3));
  PartitionResult sel = select_partition_with_retry(
      stats, cfg.K, cfg.D_ch, cfg.beta, cfg.zero_tol, cfg.max_beta_retries);

  ordered_json out;
  out["scores"] = sel.partition.scores;
  out["f1"] = sel.partition.f1_factors;
  out["f2"] = sel.partition.f2_factors;
  out["beta_used"] = sel.beta_used;
  out["converged"] = sel.state.converged;
  out["iterations"] = sel.state.iterations_run;
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cimage: conditional-independence-aware masked graph auto-encoder"};
  app.require_subcommand(1);

  // gen-sbm
  auto* gen = app.add_subcommand("gen-sbm", "generate a planted-community graph");
  std::size_t nodes = 1000, communities = 4, feat_dim = 16;
  double p_in = 0.05, p_out = 0.005, feat_noise = 0.3;
  std::uint64_t gen_seed = 42;
  std::string gen_out = "sbm.json";
  gen->add_option("--nodes", nodes, "node count");
  gen->add_option("--communities", communities, "community count");
  gen->add_option("--p-in", p_in, "within-community edge probability");
  gen->add_option("--p-out", p_out, "cross-community edge probability");
  gen->add_option("--feat-dim", feat_dim, "feature dimension");
  gen->add_option("--feat-noise", feat_noise, "feature noise scale");
  gen->add_option("--seed", gen_seed, "random seed");
  gen->add_option("--out", gen_out, "manifest path to write")->required();

  // train
  auto* tr = app.add_subcommand("train", "train on a graph manifest");
  std::string config_path, graph_path, out_dir, task = "node";
  double link_frac = 0.85;
  tr->add_option("--config", config_path, "train config JSON")->required();
  tr->add_option("--graph", graph_path, "graph manifest JSON")->required();
  tr->add_option("--out", out_dir, "artifacts directory")->required();
  tr->add_option("--task", task, "node or link")
      ->check(CLI::IsMember({"node", "link"}));
  tr->add_option("--link-train-frac", link_frac, "link split training fraction");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate stored artifacts");
  ev->require_subcommand(1);
  std::string ev_artifacts, ev_graph, ev_out;
  double ev_train_frac = 0.1, ev_val_frac = 0.1, ev_link_frac = 0.85;
  std::uint64_t ev_seed = 0;
  auto* evn = ev->add_subcommand("node", "linear probe + redundancy + separability");
  evn->add_option("--artifacts", ev_artifacts, "artifacts directory")->required();
  evn->add_option("--graph", ev_graph, "graph manifest JSON")->required();
  evn->add_option("--train-frac", ev_train_frac, "probe training fraction");
  evn->add_option("--val-frac", ev_val_frac, "probe validation fraction");
  evn->add_option("--seed", ev_seed, "probe split seed");
  evn->add_option("--out", ev_out, "also write the report here");
  auto* evl = ev->add_subcommand("link", "AUC / AP on the held-out split");
  evl->add_option("--artifacts", ev_artifacts, "artifacts directory")->required();
  evl->add_option("--graph", ev_graph, "graph manifest JSON")->required();
  evl->add_option("--train-frac", ev_link_frac, "edge split training fraction");
  evl->add_option("--seed", ev_seed, "split seed when artifacts carry none");
  evl->add_option("--out", ev_out, "also write the report here");

  // ci-score
  auto* ci = app.add_subcommand("ci-score", "recompute factor scores and partition");
  std::string ci_artifacts;
  ci->add_option("--artifacts", ci_artifacts, "artifacts directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen_sbm(gen_out, nodes, communities, p_in, p_out, feat_dim,
                         feat_noise, gen_seed);
    if (tr->parsed()) return cmd_train(config_path, graph_path, out_dir, task, link_frac);
    if (ev->parsed()) {
      if (evn->parsed())
        return cmd_eval_node(ev_artifacts, ev_graph, ev_train_frac, ev_val_frac,
                             ev_seed, ev_out);
      return cmd_eval_link(ev_artifacts, ev_graph, ev_link_frac, ev_seed, ev_out);
    }
    if (ci->parsed()) return cmd_ci_score(ci_artifacts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
