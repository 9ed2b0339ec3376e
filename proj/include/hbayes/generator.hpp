#pragma once

// Synthetic datasets drawn from the generative process of the model, with
// the sampled latents returned as ground truth.

#include <cstdint>
#include <vector>

#include "hbayes/model.hpp"

namespace hbayes {

struct GroundTruth {
  Matrix style_vectors;  // S x d
  Matrix brand_vectors;  // B x d
  Matrix user_vectors;   // U x d
  std::vector<int> style_assignments;
  Vector theta;
  Vector w;
};

struct TruePrecisions {
  double user = 1.0;
  double brand = 1.0;
  double style = 1.0;
  double w = 1.0;
};

struct GeneratedData {
  Dataset dataset;
  GroundTruth truth;
};

// w ~ N(0, 1/delta_w), S_j ~ N(w, 1/delta_s), theta ~ Dir(gamma0),
// z_i ~ Mult(theta), B_i ~ N(S_{z_i}, 1/delta_b), U_k ~ N(0, 1/delta_u);
// per event: user and brand uniform, x ~ N(0, feature_scale^2 I),
// y ~ Bernoulli(sigmoid(x^T (B_b + U_u))).
GeneratedData sample_dataset(const HyperParams& hp, int num_users, int num_brands,
                             int num_events, const TruePrecisions& precisions,
                             double feature_scale, std::uint64_t seed);

}  // namespace hbayes
