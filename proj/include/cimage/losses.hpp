#pragma once

#include <string>
#include <vector>

#include "cimage/graph.hpp"
#include "cimage/param_set.hpp"
#include "cimage/tape.hpp"

namespace cimage {

// Decoder shapes: the factor-reconstruction MLP maps the flattened F1 block
// to the F2 block; the structure MLP scores node pairs from the elementwise
// product of their representations.
struct DecoderConfig {
  std::size_t factor_recon_hidden = 256;
  std::size_t structure_hidden = 32;
};

void init_structure_decoder(nn::ParamSet& params, std::size_t input_width,
                            std::size_t hidden, Rng& rng,
                            const std::string& prefix = "st");

void init_factor_decoder(nn::ParamSet& params, std::size_t f1_width,
                         std::size_t f2_width, std::size_t hidden, Rng& rng,
                         const std::string& prefix = "ch");

// Edge probabilities sigmoid(MLP(z_u ⊙ z_v)) for a batch of pairs; column
// vector of size |pairs|.
nn::Var structure_decoder_scores(nn::Tape& tape, nn::ParamSet& params, nn::Var z,
                                 const EdgeList& pairs,
                                 const std::string& prefix = "st");

// Factor-reconstruction MLP applied to the F1 block.
nn::Var factor_decoder_apply(nn::Tape& tape, nn::ParamSet& params, nn::Var f1,
                             const std::string& prefix = "ch");

// Scaled cosine error: mean over rows of (1 - cos(target, pred))^tau.
// Rows where either side has norm below the guard contribute (1 - 0)^tau.
nn::Var sce_loss(nn::Var target, nn::Var pred, double tau);

// Binary cross-entropy over positive and negative pairs with the decoder
// probabilities clamped to [1e-7, 1 - 1e-7].
nn::Var structure_loss(nn::Tape& tape, nn::ParamSet& params, nn::Var z,
                       const EdgeList& pos, const EdgeList& neg,
                       const std::string& prefix = "st");

// L_st + lambda1 * L_ch + lambda2 * L_cl
nn::Var total_loss(nn::Var st, nn::Var ch, nn::Var cl, double lambda1, double lambda2);

}  // namespace cimage
