#include "hbayes/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include "detail.hpp"
#include "hbayes/kernels.hpp"

namespace hbayes {

using detail::view;

PredictiveMoments predictive_moments(std::span<const double> x, const GaussianPosterior& brand,
                                     const GaussianPosterior& user) {
  const auto d = static_cast<std::size_t>(brand.dim());
  if (x.size() != d || static_cast<std::size_t>(user.dim()) != d) {
    throw InputError("predictive_moments: dimension mismatch");
  }
  PredictiveMoments m;
  m.mu = kernels::dot(x, view(brand.mean())) + kernels::dot(x, view(user.mean()));
  m.sigma2 = std::max(0.0, brand.quad_form(x) + user.quad_form(x));
  return m;
}

double predict_prob(double mu, double sigma2) {
  if (!(sigma2 >= 0.0)) throw InputError("predict_prob: negative variance");
  return sigmoid(mu / std::sqrt(1.0 + std::numbers::pi * sigma2 / 8.0));
}

PredictionScore score(std::span<const double> x, const GaussianPosterior& brand,
                      const GaussianPosterior& user) {
  const PredictiveMoments m = predictive_moments(x, brand, user);
  return {m.mu, m.sigma2, predict_prob(m.mu, m.sigma2)};
}

GaussianPosterior brand_prior(const VariationalState& state) {
  const int d = state.feature_dim();
  const Vector weights = state.theta_gamma / state.theta_gamma.sum();
  Vector mean = Vector::Zero(d);
  double variance = 1.0 / state.prec_b.mean();
  for (int j = 0; j < state.num_styles(); ++j) {
    kernels::axpy(weights[j], view(state.styles[j].mean()), detail::view(mean));
    variance += weights[j] * state.styles[j].variance();
  }
  return GaussianPosterior::full(std::move(mean), Matrix::Identity(d, d) * variance);
}

GaussianPosterior user_prior(const VariationalState& state) {
  const int d = state.feature_dim();
  return GaussianPosterior::full(Vector::Zero(d),
                                 Matrix::Identity(d, d) * (1.0 / state.prec_u.mean()));
}

std::vector<RankedItem> rank_top_k(int user_id, std::span<const Candidate> candidates,
                                   const VariationalState& state, int k) {
  if (k < 1) throw InputError("rank_top_k: k must be >= 1");

  std::optional<GaussianPosterior> cold_user;
  const GaussianPosterior* user = nullptr;
  if (user_id >= 0 && user_id < state.num_users()) {
    user = &state.users[user_id];
  } else {
    cold_user = user_prior(state);
    user = &*cold_user;
  }
  std::optional<GaussianPosterior> cold_brand;

  std::vector<RankedItem> ranked;
  ranked.reserve(candidates.size());
  for (const Candidate& c : candidates) {
    const GaussianPosterior* brand = nullptr;
    if (c.brand >= 0 && c.brand < state.num_brands()) {
      brand = &state.brands[c.brand];
    } else {
      if (!cold_brand) cold_brand = brand_prior(state);
      brand = &*cold_brand;
    }
    ranked.push_back({c.item_id, score(view(c.x), *brand, *user).prob});
  }

  auto better = [](const RankedItem& a, const RankedItem& b) {
    if (a.prob != b.prob) return a.prob > b.prob;
    return a.item_id < b.item_id;
  };
  const auto keep = std::min<std::size_t>(static_cast<std::size_t>(k), ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep),
                    ranked.end(), better);
  ranked.resize(keep);
  return ranked;
}

}  // namespace hbayes
