#pragma once

#include "wmft/worldmodel.hpp"

namespace wmft::bench {

// Reference toy configuration: reach2d dimensions, hidden 32, latent 16.
inline ModelDims toy_dims() {
  ModelDims d;
  d.state_dim = 4;
  d.action_dim = 2;
  d.latent_dim = 16;
  d.hidden_dim = 32;
  d.hidden_layers = 2;
  d.num_q = 5;
  return d;
}

inline WorldModel toy_model() {
  Rng rng = make_stream(1, 0);
  return WorldModel(toy_dims(), rng);
}

}  // namespace wmft::bench
