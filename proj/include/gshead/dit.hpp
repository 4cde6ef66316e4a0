#pragma once

#include "gshead/tensor.hpp"

namespace gshead {

struct DiTConfig {
  int depth = 2;
  int hidden = 64;
  int heads = 4;
  int mlp_ratio = 4;
  int t_embed_dim = 64;

  void validate() const;
};

// Sinusoidal features of t in [0,1], shape {1, dim}. Deterministic in t.
Tensor timestep_embedding(double t, int dim, DType dtype);

// Creates transformer parameters under `prefix`. Modulation projections are
// zero-initialized so every block starts as the identity.
void init_dit(ParamStore& store, const std::string& prefix, const DiTConfig& cfg, Rng& rng);

// Full self-attention over the joint sequence {L, hidden} with timestep
// conditioning applied uniformly to all tokens.
Tensor dit_forward(const ParamStore& store, const std::string& prefix, const DiTConfig& cfg,
                   const Tensor& sequence, double t);

}  // namespace gshead
