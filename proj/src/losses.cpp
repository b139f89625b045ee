#include "cimage/losses.hpp"

#include "cimage/errors.hpp"

namespace cimage {

using nn::Var;

void init_structure_decoder(nn::ParamSet& params, std::size_t input_width,
                            std::size_t hidden, Rng& rng, const std::string& prefix) {
  params.create(prefix + ".w1", DenseMatrix::xavier(input_width, hidden, rng));
  params.create(prefix + ".b1", DenseMatrix::zeros(1, hidden));
  params.create(prefix + ".w2", DenseMatrix::xavier(hidden, 1, rng));
  params.create(prefix + ".b2", DenseMatrix::zeros(1, 1));
}

void init_factor_decoder(nn::ParamSet& params, std::size_t f1_width,
                         std::size_t f2_width, std::size_t hidden, Rng& rng,
                         const std::string& prefix) {
  params.create(prefix + ".w1", DenseMatrix::xavier(f1_width, hidden, rng));
  params.create(prefix + ".b1", DenseMatrix::zeros(1, hidden));
  params.create(prefix + ".w2", DenseMatrix::xavier(hidden, f2_width, rng));
  params.create(prefix + ".b2", DenseMatrix::zeros(1, f2_width));
}

nn::Var structure_decoder_scores(nn::Tape& tape, nn::ParamSet& params, Var z,
                                 const EdgeList& pairs, const std::string& prefix) {
  std::vector<std::uint32_t> us, vs;
  us.reserve(pairs.size());
  vs.reserve(pairs.size());
  for (const Edge& e : pairs.pairs) {
    us.push_back(e.u);
    vs.push_back(e.v);
  }
  Var zu = nn::gather_rows(z, std::move(us));
  Var zv = nn::gather_rows(z, std::move(vs));
  Var h = nn::relu(nn::linear(nn::mul(zu, zv), tape.param(params, prefix + ".w1"),
                              tape.param(params, prefix + ".b1")));
  Var logits = nn::linear(h, tape.param(params, prefix + ".w2"),
                          tape.param(params, prefix + ".b2"));
  return nn::sigmoid(logits);
}

nn::Var factor_decoder_apply(nn::Tape& tape, nn::ParamSet& params, Var f1,
                             const std::string& prefix) {
  Var h = nn::relu(nn::linear(f1, tape.param(params, prefix + ".w1"),
                              tape.param(params, prefix + ".b1")));
  return nn::linear(h, tape.param(params, prefix + ".w2"),
                    tape.param(params, prefix + ".b2"));
}

nn::Var sce_loss(Var target, Var pred, double tau) {
  if (tau < 1.0) throw ConfigError("sce_loss: tau must be >= 1");
  if (target.rows() != pred.rows() || target.cols() != pred.cols())
    throw ShapeError("sce_loss: target and prediction shapes differ");
  // cosine via guarded row normalization; zero-norm rows yield cos = 0
  Var tn = nn::l2_normalize_rows(target);
  Var pn = nn::l2_normalize_rows(pred);
  Var cos = nn::rowwise_sum(nn::mul(tn, pn));
  // (1 - cos)^tau with the base clamped against -eps cosine overshoot
  Var base = nn::clamp(nn::scale(nn::add_scalar(cos, -1.0), -1.0), 0.0, 2.0);
  return nn::mean_all(nn::pow_const(base, tau));
}

nn::Var structure_loss(nn::Tape& tape, nn::ParamSet& params, Var z,
                       const EdgeList& pos, const EdgeList& neg,
                       const std::string& prefix) {
  if (pos.empty()) throw ConfigError("structure_loss: positive edge set is empty");
  constexpr double kClamp = 1e-7;
  Var p_pos = nn::clamp(structure_decoder_scores(tape, params, z, pos, prefix),
                        kClamp, 1.0 - kClamp);
  Var log_pos = nn::mean_all(nn::log(p_pos));
  Var loss = nn::scale(log_pos, -1.0);
  if (!neg.empty()) {
    Var p_neg = nn::clamp(structure_decoder_scores(tape, params, z, neg, prefix),
                          kClamp, 1.0 - kClamp);
    Var log_neg = nn::mean_all(nn::log(nn::scale(nn::add_scalar(p_neg, -1.0), -1.0)));
    loss = nn::sub(loss, log_neg);
  }
  return loss;
}

nn::Var total_loss(Var st, Var ch, Var cl, double lambda1, double lambda2) {
  if (lambda1 < 0.0 || lambda2 < 0.0)
    throw ConfigError("total_loss: weights must be nonnegative");
  return nn::add(st, nn::add(nn::scale(ch, lambda1), nn::scale(cl, lambda2)));
}

}  // namespace cimage
