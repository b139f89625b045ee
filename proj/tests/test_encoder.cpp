#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cimage/encoder.hpp"
#include "cimage/errors.hpp"
#include "cimage/grad_check.hpp"
#include "cimage/graph.hpp"
#include "cimage/rng.hpp"

using namespace cimage;
using nn::Var;

namespace {

Graph toy_graph(std::size_t n, std::vector<Edge> edges, std::uint64_t seed,
                std::size_t feat_dim = 4) {
  Rng rng(seed);
  return Graph(n, std::move(edges), DenseMatrix::gaussian(n, feat_dim, rng));
}

EncoderConfig small_config(SoftmaxAxis axis = SoftmaxAxis::kFactors) {
  EncoderConfig cfg;
  cfg.num_factors = 3;
  cfg.factor_dim = 2;
  cfg.hidden_dim = 8;
  cfg.routing_iterations = 2;
  cfg.softmax_axis = axis;
  return cfg;
}

}  // namespace

TEST_CASE("project_subspaces: zero features with zero params give zeros") {
  EncoderConfig cfg = small_config();
  nn::ParamSet ps;
  ps.create("enc.w1", 4, cfg.hidden_dim);
  ps.create("enc.b1", 1, cfg.hidden_dim);
  ps.create("enc.w2", cfg.hidden_dim, cfg.width());
  ps.create("enc.b2", 1, cfg.width());
  nn::Tape tape;
  Var l = project_subspaces(tape, ps, DenseMatrix::zeros(5, 4), cfg);
  for (double v : l.value().values()) CHECK(v == 0.0);
}

TEST_CASE("project_subspaces: output width is K*D_ch; equal rows for equal features") {
  EncoderConfig cfg;
  cfg.num_factors = 16;
  cfg.factor_dim = 32;
  cfg.hidden_dim = 16;
  nn::ParamSet ps;
  Rng rng(3);
  init_encoder_params(ps, cfg, 10, rng);
  DenseMatrix x = DenseMatrix::gaussian(4, 10, rng);
  for (std::size_t j = 0; j < 10; ++j) x(2, j) = x(0, j);  // rows 0 and 2 identical
  nn::Tape tape;
  Var l = project_subspaces(tape, ps, x, cfg);
  CHECK(l.cols() == 512);
  for (std::size_t j = 0; j < l.cols(); ++j)
    CHECK(l.value()(0, j) == doctest::Approx(l.value()(2, j)).epsilon(1e-15));
}

TEST_CASE("route_encode: isolated node is its normalized projection") {
  // node 2 is isolated; nodes 0-1 share the only edge
  Graph g = toy_graph(3, {{0, 1}}, 5);
  MaskedGraph masked = mask_edges(g, 0.0, 1);
  for (auto axis : {SoftmaxAxis::kFactors, SoftmaxAxis::kNeighbors}) {
    EncoderConfig cfg = small_config(axis);
    cfg.routing_iterations = 4;
    nn::ParamSet ps;
    Rng rng(11);
    init_encoder_params(ps, cfg, 4, rng);
    nn::Tape tape;
    Var l = project_subspaces(tape, ps, g.features(), cfg);
    Var z = route_encode(l, masked, cfg);
    for (std::size_t f = 0; f < cfg.num_factors; ++f) {
      double norm = 0.0, dot = 0.0, lnorm = 0.0;
      for (std::size_t j = 0; j < cfg.factor_dim; ++j) {
        const double lv = l.value()(2, f * cfg.factor_dim + j);
        const double zv = z.value()(2, f * cfg.factor_dim + j);
        norm += zv * zv;
        dot += lv * zv;
        lnorm += lv * lv;
      }
      CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-12);
      // z parallel to l with positive scale
      CHECK(dot == doctest::Approx(std::sqrt(lnorm)).epsilon(1e-10));
    }
  }
}

TEST_CASE("route_encode: unit norm per (node, factor)") {
  Graph g = generate_sbm(24, 2, 0.4, 0.1, 4, 0.2, 9);
  MaskedGraph masked = mask_edges(g, 0.3, 4);
  for (auto axis : {SoftmaxAxis::kFactors, SoftmaxAxis::kNeighbors}) {
    EncoderConfig cfg = small_config(axis);
    nn::ParamSet ps;
    Rng rng(13);
    init_encoder_params(ps, cfg, 4, rng);
    nn::Tape tape;
    Var z = encode(tape, ps, masked, cfg);
    for (std::size_t v = 0; v < g.num_nodes(); ++v)
      for (std::size_t f = 0; f < cfg.num_factors; ++f) {
        double norm = 0.0;
        for (std::size_t j = 0; j < cfg.factor_dim; ++j) {
          const double zv = z.value()(v, f * cfg.factor_dim + j);
          norm += zv * zv;
        }
        CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-6);
      }
  }
}

TEST_CASE("route_encode: 2-node toy matches the hand-computed oracle") {
  // K=2, D_ch=2, T=1, hand-chosen projections; the expectation below
  // evaluates the softmax-weighted sum and normalization scalar by scalar
  const std::size_t n = 2, k = 2, d = 2;
  DenseMatrix l(n, k * d);
  // node 0: l_{0,0} = (1, 0), l_{0,1} = (0, 2)
  l(0, 0) = 1.0; l(0, 1) = 0.0; l(0, 2) = 0.0; l(0, 3) = 2.0;
  // node 1: l_{1,0} = (0.5, 0.5), l_{1,1} = (1, -1)
  l(1, 0) = 0.5; l(1, 1) = 0.5; l(1, 2) = 1.0; l(1, 3) = -1.0;

  Graph g = toy_graph(n, {{0, 1}}, 3, 2);
  MaskedGraph masked = mask_edges(g, 0.0, 1);
  EncoderConfig cfg;
  cfg.num_factors = k;
  cfg.factor_dim = d;
  cfg.routing_iterations = 1;
  cfg.softmax_axis = SoftmaxAxis::kFactors;

  nn::Tape tape;
  Var z = route_encode(tape.constant(l), masked, cfg);

  auto softmax2 = [](double a, double b) {
    const double m = std::max(a, b);
    const double ea = std::exp(a - m), eb = std::exp(b - m);
    return std::pair<double, double>{ea / (ea + eb), eb / (ea + eb)};
  };
  // neighbor scores use Z^0 = l: s_{u,k} = l_{u,k}^T l_{u,k}
  const double s10 = 0.5 * 0.5 + 0.5 * 0.5;  // node 1, factor 0
  const double s11 = 1.0 * 1.0 + 1.0 * 1.0;  // node 1, factor 1
  auto [p10, p11] = softmax2(s10, s11);
  const double s00 = 1.0, s01 = 4.0;  // node 0 scores
  auto [p00, p01] = softmax2(s00, s01);

  auto check_node_factor = [&](std::size_t v, std::size_t f, double ex, double ey) {
    const double norm = std::sqrt(ex * ex + ey * ey);
    CHECK(std::abs(z.value()(v, f * d) - ex / norm) < 1e-12);
    CHECK(std::abs(z.value()(v, f * d + 1) - ey / norm) < 1e-12);
  };
  // node 0 aggregates neighbor 1: numer = l_{0,k} + p_{1,k} * l_{1,k}
  check_node_factor(0, 0, 1.0 + p10 * 0.5, 0.0 + p10 * 0.5);
  check_node_factor(0, 1, 0.0 + p11 * 1.0, 2.0 + p11 * (-1.0));
  // node 1 aggregates neighbor 0
  check_node_factor(1, 0, 0.5 + p00 * 1.0, 0.5 + p00 * 0.0);
  check_node_factor(1, 1, 1.0 + p01 * 0.0, -1.0 + p01 * 2.0);
}

TEST_CASE("route_encode: permutation equivariance") {
  Graph g = generate_sbm(12, 2, 0.5, 0.2, 4, 0.2, 17);
  EncoderConfig cfg = small_config();
  nn::ParamSet ps;
  Rng rng(19);
  init_encoder_params(ps, cfg, 4, rng);

  // relabel nodes by the reversal permutation
  std::vector<NodeId> perm(g.num_nodes());
  for (std::size_t i = 0; i < perm.size(); ++i)
    perm[i] = static_cast<NodeId>(g.num_nodes() - 1 - i);
  std::vector<Edge> perm_edges;
  for (const Edge& e : g.edges()) perm_edges.emplace_back(perm[e.u], perm[e.v]);
  DenseMatrix perm_feat(g.num_nodes(), g.feature_dim());
  for (std::size_t i = 0; i < g.num_nodes(); ++i)
    for (std::size_t j = 0; j < g.feature_dim(); ++j)
      perm_feat(perm[i], j) = g.features()(i, j);
  Graph gp(g.num_nodes(), perm_edges, perm_feat);

  nn::Tape t1, t2;
  Var z = encode(t1, ps, mask_edges(g, 0.0, 1), cfg);
  Var zp = encode(t2, ps, mask_edges(gp, 0.0, 1), cfg);
  for (std::size_t i = 0; i < g.num_nodes(); ++i)
    for (std::size_t j = 0; j < cfg.width(); ++j)
      CHECK(std::abs(z.value()(i, j) - zp.value()(perm[i], j)) < 1e-9);
}

TEST_CASE("route_encode: fully masked graph still encodes via the self term") {
  Graph g = generate_sbm(12, 2, 0.6, 0.2, 4, 0.2, 19);
  MaskedGraph masked = mask_edges(g, 1.0, 3);  // no visible edges at all
  EncoderConfig cfg = small_config();
  nn::ParamSet ps;
  Rng rng(23);
  init_encoder_params(ps, cfg, 4, rng);
  nn::Tape tape;
  Var l = project_subspaces(tape, ps, g.features(), cfg);
  Var z = route_encode(l, masked, cfg);
  for (std::size_t v = 0; v < g.num_nodes(); ++v)
    for (std::size_t f = 0; f < cfg.num_factors; ++f) {
      double dot = 0.0, lnorm = 0.0;
      for (std::size_t j = 0; j < cfg.factor_dim; ++j) {
        dot += l.value()(v, f * cfg.factor_dim + j) * z.value()(v, f * cfg.factor_dim + j);
        lnorm += l.value()(v, f * cfg.factor_dim + j) * l.value()(v, f * cfg.factor_dim + j);
      }
      CHECK(dot == doctest::Approx(std::sqrt(lnorm)).epsilon(1e-10));
    }
}

TEST_CASE("route_encode: only visible edges matter") {
  Graph g = generate_sbm(16, 2, 0.6, 0.2, 4, 0.2, 23);
  EncoderConfig cfg = small_config();
  nn::ParamSet ps;
  Rng rng(29);
  init_encoder_params(ps, cfg, 4, rng);

  MaskedGraph a = mask_edges(g, 0.5, 7);
  // same visible set, rebuilt from scratch
  MaskedGraph b(g, a.visible_edges(), a.masked_edges(), 0.5);
  nn::Tape t1, t2;
  Var za = encode(t1, ps, a, cfg);
  Var zb = encode(t2, ps, b, cfg);
  CHECK(za.value().values() == zb.value().values());
}

TEST_CASE("route_encode: gradient through routing passes the FD check") {
  Graph g = toy_graph(5, {{0, 1}, {1, 2}, {2, 3}, {0, 4}}, 31);
  MaskedGraph masked = mask_edges(g, 0.0, 1);
  for (auto axis : {SoftmaxAxis::kFactors, SoftmaxAxis::kNeighbors}) {
    EncoderConfig cfg = small_config(axis);
    nn::ParamSet ps;
    Rng rng(37);
    init_encoder_params(ps, cfg, 4, rng);
    auto fn = [&](nn::ParamSet& p, bool want_grad) {
      nn::Tape tape;
      Var z = encode(tape, p, masked, cfg);
      // scalar probe of the latent tensor
      Var loss = mean_all(nn::mul(z, z));
      Var weighted = nn::sum_all(nn::slice_cols(z, 1, 3));
      loss = nn::add(loss, nn::scale(weighted, 0.1));
      if (want_grad) tape.backward(loss);
      return nn::GradCheckEval{loss.scalar(), tape.regime_hash()};
    };
    auto report = nn::grad_check(fn, ps, 60, 41);
    CHECK(report.num_checked > 0);
    CHECK(report.max_rel_error < 1e-4);
  }
}
