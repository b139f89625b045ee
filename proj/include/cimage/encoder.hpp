#pragma once

#include <cstdint>
#include <string>

#include "cimage/graph.hpp"
#include "cimage/param_set.hpp"
#include "cimage/tape.hpp"

namespace cimage {

enum class SoftmaxAxis {
  kFactors,    // each neighbor distributes attention over the K factors
  kNeighbors,  // each (node, factor) normalizes over its neighborhood
};

// Disentangled encoder: a shared one-hidden-layer MLP projects node features
// into K factor sub-spaces of width D_ch, then T rounds of neighborhood
// routing over the visible edges re-mix each factor and re-normalize per
// (node, factor).
struct EncoderConfig {
  std::size_t num_factors = 16;      // K
  std::size_t factor_dim = 32;       // D_ch
  std::size_t hidden_dim = 512;
  std::size_t routing_iterations = 3;  // T
  SoftmaxAxis softmax_axis = SoftmaxAxis::kFactors;

  std::size_t width() const { return num_factors * factor_dim; }
};

// Allocates Xavier-initialized projection parameters under names prefixed
// with `prefix` ("enc.w1", "enc.b1", ...).
void init_encoder_params(nn::ParamSet& params, const EncoderConfig& cfg,
                         std::size_t feature_dim, Rng& rng,
                         const std::string& prefix = "enc");

// Raw factor projections L: N x (K * D_ch), factor k in columns
// [k*D_ch, (k+1)*D_ch).
nn::Var project_subspaces(nn::Tape& tape, nn::ParamSet& params, const DenseMatrix& x,
                          const EncoderConfig& cfg, const std::string& prefix = "enc");

// Routing over the visible edges; every (node, factor) slice of the result
// has unit norm (or is exactly zero under the epsilon guard).
nn::Var route_encode(nn::Var projections, const MaskedGraph& masked,
                     const EncoderConfig& cfg);

// project + route in one call.
nn::Var encode(nn::Tape& tape, nn::ParamSet& params, const MaskedGraph& masked,
               const EncoderConfig& cfg, const std::string& prefix = "enc");

}  // namespace cimage
