#include "cimage/encoder.hpp"

#include <vector>

#include "cimage/errors.hpp"

namespace cimage {

using nn::Var;

void init_encoder_params(nn::ParamSet& params, const EncoderConfig& cfg,
                         std::size_t feature_dim, Rng& rng,
                         const std::string& prefix) {
  if (cfg.num_factors < 2) throw ConfigError("encoder: need at least two factors");
  if (cfg.factor_dim < 1 || cfg.routing_iterations < 1)
    throw ConfigError("encoder: factor_dim and routing_iterations must be >= 1");
  params.create(prefix + ".w1", DenseMatrix::xavier(feature_dim, cfg.hidden_dim, rng));
  params.create(prefix + ".b1", DenseMatrix::zeros(1, cfg.hidden_dim));
  params.create(prefix + ".w2", DenseMatrix::xavier(cfg.hidden_dim, cfg.width(), rng));
  params.create(prefix + ".b2", DenseMatrix::zeros(1, cfg.width()));
}

Var project_subspaces(nn::Tape& tape, nn::ParamSet& params, const DenseMatrix& x,
                      const EncoderConfig& cfg, const std::string& prefix) {
  Var h = nn::relu(nn::linear(tape.constant(x), tape.param(params, prefix + ".w1"),
                              tape.param(params, prefix + ".b1")));
  return nn::linear(h, tape.param(params, prefix + ".w2"),
                    tape.param(params, prefix + ".b2"));
}

namespace {

void visible_csr(const MaskedGraph& masked, std::vector<std::size_t>& offsets,
                 std::vector<std::uint32_t>& targets) {
  const std::size_t n = masked.num_nodes();
  offsets.assign(n + 1, 0);
  for (std::size_t v = 0; v < n; ++v)
    offsets[v + 1] = offsets[v] + masked.visible_degree(static_cast<NodeId>(v));
  targets.assign(offsets.back(), 0);
  for (std::size_t v = 0; v < n; ++v) {
    std::size_t pos = offsets[v];
    for (const NodeId* u = masked.visible_neighbors_begin(static_cast<NodeId>(v));
         u != masked.visible_neighbors_end(static_cast<NodeId>(v)); ++u)
      targets[pos++] = *u;
  }
}

}  // namespace

Var route_encode(Var projections, const MaskedGraph& masked, const EncoderConfig& cfg) {
  const std::size_t n = masked.num_nodes();
  const std::size_t k = cfg.num_factors;
  const std::size_t d = cfg.factor_dim;
  if (projections.rows() != n || projections.cols() != k * d)
    throw ShapeError("route_encode: projections must be N x (K*D_ch)");

  std::vector<std::size_t> offsets;
  std::vector<std::uint32_t> targets;
  visible_csr(masked, offsets, targets);

  std::vector<Var> l_k(k);
  for (std::size_t f = 0; f < k; ++f)
    l_k[f] = nn::slice_cols(projections, f * d, d);

  // routing starts from the raw projections: Z^0_{v,k} = l_{v,k}
  std::vector<Var> z_k = l_k;

  for (std::size_t iter = 0; iter < cfg.routing_iterations; ++iter) {
    // per-node factor affinities s_{u,k} = l_{u,k}^T z_{u,k}
    std::vector<Var> score_cols(k);
    for (std::size_t f = 0; f < k; ++f)
      score_cols[f] = nn::rowwise_sum(nn::mul(l_k[f], z_k[f]));

    std::vector<Var> weight_cols(k);
    if (cfg.softmax_axis == SoftmaxAxis::kFactors) {
      Var scores = nn::concat_cols(score_cols);
      Var probs = nn::softmax_rows(scores);
      for (std::size_t f = 0; f < k; ++f)
        weight_cols[f] = nn::slice_cols(probs, f, 1);
    }

    std::vector<Var> next(k);
    for (std::size_t f = 0; f < k; ++f) {
      Var numer;
      if (cfg.softmax_axis == SoftmaxAxis::kFactors) {
        Var weighted = nn::mul_col(l_k[f], weight_cols[f]);
        numer = nn::add(l_k[f], nn::spmm(offsets, targets, weighted));
      } else {
        // normalize exp(s) over each neighborhood; the per-factor max shift
        // cancels in the ratio and only stabilizes the exponentials
        double mx = -1e300;
        const DenseMatrix& sv = score_cols[f].value();
        for (double v : sv.values()) mx = std::max(mx, v);
        Var e = nn::exp(nn::add_scalar(score_cols[f], -mx));
        Var weighted_sum = nn::spmm(offsets, targets, nn::mul_col(l_k[f], e));
        Var denom = nn::spmm(offsets, targets, e);
        numer = nn::add(l_k[f], nn::safe_div_col(weighted_sum, denom));
      }
      next[f] = nn::l2_normalize_rows(numer);
    }
    z_k = std::move(next);
  }
  return nn::concat_cols(z_k);
}

Var encode(nn::Tape& tape, nn::ParamSet& params, const MaskedGraph& masked,
           const EncoderConfig& cfg, const std::string& prefix) {
  Var l = project_subspaces(tape, params, masked.base().features(), cfg, prefix);
  return route_encode(l, masked, cfg);
}

}  // namespace cimage
