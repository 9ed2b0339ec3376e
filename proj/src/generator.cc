#include "hbayes/generator.hpp"

#include <cmath>
#include <random>

namespace hbayes {

GeneratedData sample_dataset(const HyperParams& hp, int num_users, int num_brands,
                             int num_events, const TruePrecisions& precisions,
                             double feature_scale, std::uint64_t seed) {
  hp.validate();
  if (num_users < 1 || num_brands < 1 || num_events < 1) {
    throw InputError("sample_dataset: counts must be >= 1");
  }
  for (double p : {precisions.user, precisions.brand, precisions.style, precisions.w}) {
    if (!(p > 0.0) || !std::isfinite(p)) throw InputError("sample_dataset: precisions must be > 0");
  }
  if (!(feature_scale >= 0.0)) throw InputError("sample_dataset: feature_scale must be >= 0");

  const int d = hp.feature_dim;
  const int num_styles = hp.num_styles;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian_row = [&](const Vector& center, double precision) {
    const double sd = 1.0 / std::sqrt(precision);
    Vector v(d);
    for (int i = 0; i < d; ++i) v[i] = center[i] + sd * normal(rng);
    return v;
  };

  GeneratedData out;
  GroundTruth& truth = out.truth;
  truth.w = gaussian_row(Vector::Zero(d), precisions.w);

  truth.style_vectors.resize(num_styles, d);
  for (int j = 0; j < num_styles; ++j) {
    truth.style_vectors.row(j) = gaussian_row(truth.w, precisions.style).transpose();
  }

  truth.theta.resize(num_styles);
  for (int j = 0; j < num_styles; ++j) {
    std::gamma_distribution<double> g(hp.gamma0[j], 1.0);
    truth.theta[j] = g(rng);
  }
  if (truth.theta.sum() > 0.0) {
    truth.theta /= truth.theta.sum();
  } else {
    // Every draw underflowed (tiny concentrations); fall back to one vertex.
    truth.theta = Vector::Zero(num_styles);
    truth.theta[std::uniform_int_distribution<int>(0, num_styles - 1)(rng)] = 1.0;
  }

  std::discrete_distribution<int> pick_style(truth.theta.data(),
                                             truth.theta.data() + truth.theta.size());
  truth.style_assignments.resize(num_brands);
  truth.brand_vectors.resize(num_brands, d);
  for (int i = 0; i < num_brands; ++i) {
    const int z = pick_style(rng);
    truth.style_assignments[i] = z;
    const Vector center = truth.style_vectors.row(z).transpose();
    truth.brand_vectors.row(i) = gaussian_row(center, precisions.brand).transpose();
  }

  truth.user_vectors.resize(num_users, d);
  for (int k = 0; k < num_users; ++k) {
    truth.user_vectors.row(k) = gaussian_row(Vector::Zero(d), precisions.user).transpose();
  }

  Dataset& data = out.dataset;
  data.num_users = num_users;
  data.num_brands = num_brands;
  data.feature_dim = d;
  data.events.reserve(num_events);
  std::uniform_int_distribution<int> pick_user(0, num_users - 1);
  std::uniform_int_distribution<int> pick_brand(0, num_brands - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int t = 0; t < num_events; ++t) {
    EventRecord e;
    e.user = pick_user(rng);
    e.brand = pick_brand(rng);
    e.x.resize(d);
    for (int i = 0; i < d; ++i) e.x[i] = feature_scale * normal(rng);
    const double h = e.x.dot(truth.brand_vectors.row(e.brand).transpose() +
                             truth.user_vectors.row(e.user).transpose());
    e.y = unit(rng) < sigmoid(h) ? 1 : 0;
    data.events.push_back(std::move(e));
  }
  return out;
}

}  // namespace hbayes
