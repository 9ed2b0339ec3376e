#pragma once

// Predictive click probabilities and top-K lists from a fitted state.

#include <cstdint>
#include <span>
#include <vector>

#include "hbayes/model.hpp"

namespace hbayes {

struct PredictionScore {
  double mu = 0.0;
  double sigma2 = 0.0;
  double prob = 0.5;
};

struct PredictiveMoments {
  double mu = 0.0;
  double sigma2 = 0.0;
};

PredictiveMoments predictive_moments(std::span<const double> x, const GaussianPosterior& brand,
                                     const GaussianPosterior& user);

// sigmoid(mu / sqrt(1 + pi sigma2 / 8)). Throws InputError for sigma2 < 0.
double predict_prob(double mu, double sigma2);

PredictionScore score(std::span<const double> x, const GaussianPosterior& brand,
                      const GaussianPosterior& user);

// Cold-start factors used for ids the state has never seen.
GaussianPosterior brand_prior(const VariationalState& state);
GaussianPosterior user_prior(const VariationalState& state);

struct Candidate {
  std::int64_t item_id = 0;
  Vector x;
  int brand = 0;
};

struct RankedItem {
  std::int64_t item_id = 0;
  double prob = 0.0;

  bool operator==(const RankedItem&) const = default;
};

// K most probable candidates, ties broken by ascending item id. Brands or
// users outside the state's range are scored with the prior factors.
std::vector<RankedItem> rank_top_k(int user_id, std::span<const Candidate> candidates,
                                   const VariationalState& state, int k);

}  // namespace hbayes
