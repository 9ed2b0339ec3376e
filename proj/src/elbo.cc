// Closed-form evidence lower bound. See docs/elbo.md for the derivation of
// each term.

#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <numbers>

#include "detail.hpp"
#include "hbayes/kernels.hpp"
#include "hbayes/model.hpp"

namespace hbayes {

namespace elbo_parts {

double bounded_event(int y, double mean_h, double second_moment_h, double xi) {
  const double lam = lambda_of_xi(xi);
  return log_sigmoid(std::abs(xi)) + (y - 0.5) * mean_h - 0.5 * std::abs(xi) -
         lam * (second_moment_h - xi * xi);
}

double gaussian_expected_log_density(int dim, double expected_log_prec, double expected_prec,
                                     double expected_sq_dist) {
  return 0.5 * dim * (expected_log_prec - std::log(2.0 * std::numbers::pi)) -
         0.5 * expected_prec * expected_sq_dist;
}

double gaussian_entropy(int dim, double log_det_cov) {
  return 0.5 * dim * (1.0 + std::log(2.0 * std::numbers::pi)) + 0.5 * log_det_cov;
}

Vector dirichlet_expected_log(const Vector& gamma) {
  const double total = boost::math::digamma(gamma.sum());
  Vector out(gamma.size());
  for (Eigen::Index j = 0; j < gamma.size(); ++j) out[j] = boost::math::digamma(gamma[j]) - total;
  return out;
}

double dirichlet_expected_log_density(const Vector& prior, const Vector& expected_log_theta) {
  double acc = std::lgamma(prior.sum());
  for (Eigen::Index j = 0; j < prior.size(); ++j) {
    acc += -std::lgamma(prior[j]) + (prior[j] - 1.0) * expected_log_theta[j];
  }
  return acc;
}

double dirichlet_entropy(const Vector& gamma) {
  const double total = gamma.sum();
  const auto k = static_cast<double>(gamma.size());
  double acc = -std::lgamma(total) + (total - k) * boost::math::digamma(total);
  for (Eigen::Index j = 0; j < gamma.size(); ++j) {
    acc += std::lgamma(gamma[j]) - (gamma[j] - 1.0) * boost::math::digamma(gamma[j]);
  }
  return acc;
}

double gamma_expected_log_density(double alpha0, double beta0, const GammaPosterior& q) {
  return alpha0 * std::log(beta0) - std::lgamma(alpha0) + (alpha0 - 1.0) * q.expected_log() -
         beta0 * q.mean();
}

double gamma_entropy(const GammaPosterior& q) {
  return q.shape - std::log(q.rate) + std::lgamma(q.shape) +
         (1.0 - q.shape) * boost::math::digamma(q.shape);
}

double categorical_entropy(std::span<const double> probs) {
  double acc = 0.0;
  for (double p : probs) {
    if (p > 0.0) acc -= p * std::log(p);
  }
  return acc;
}

}  // namespace elbo_parts

ElboTerms elbo_terms(const VariationalState& state, const Dataset& data, const HyperParams& hp) {
  using detail::view;
  using namespace elbo_parts;

  state.validate_against(data);
  const int d = state.feature_dim();
  const int num_styles = state.num_styles();
  if (hp.gamma0.size() != num_styles) throw InputError("gamma0 length does not match state");

  ElboTerms terms;

  for (std::size_t t = 0; t < data.size(); ++t) {
    const EventRecord& e = data.events[t];
    const GaussianPosterior& brand = state.brands[e.brand];
    const GaussianPosterior& user = state.users[e.user];
    const auto x = view(e.x);
    const double mean_h = kernels::dot(x, view(brand.mean())) + kernels::dot(x, view(user.mean()));
    const double var_h = brand.quad_form(x) + user.quad_form(x);
    terms.likelihood += bounded_event(e.y, mean_h, mean_h * mean_h + var_h, state.xi[t]);
  }

  const double e_prec_b = state.prec_b.mean();
  const double e_log_prec_b = state.prec_b.expected_log();
  const Vector e_log_theta = dirichlet_expected_log(state.theta_gamma);
  for (int i = 0; i < state.num_brands(); ++i) {
    const GaussianPosterior& brand = state.brands[i];
    for (int j = 0; j < num_styles; ++j) {
      const double mu = state.resp(i, j);
      if (mu == 0.0) continue;
      const GaussianPosterior& style = state.styles[j];
      const double sq = kernels::squared_distance(view(brand.mean()), view(style.mean())) +
                        brand.trace() + style.trace();
      terms.brands += mu * gaussian_expected_log_density(d, e_log_prec_b, e_prec_b, sq);
      terms.assignments += mu * e_log_theta[j];
    }
  }

  const double e_prec_s = state.prec_s.mean();
  const double e_log_prec_s = state.prec_s.expected_log();
  for (const GaussianPosterior& style : state.styles) {
    const double sq = kernels::squared_distance(view(style.mean()), view(state.w.mean())) +
                      style.trace() + state.w.trace();
    terms.styles += gaussian_expected_log_density(d, e_log_prec_s, e_prec_s, sq);
  }

  terms.theta = dirichlet_expected_log_density(hp.gamma0, e_log_theta);

  const double e_prec_u = state.prec_u.mean();
  const double e_log_prec_u = state.prec_u.expected_log();
  for (const GaussianPosterior& user : state.users) {
    const double sq = user.mean().squaredNorm() + user.trace();
    terms.users += gaussian_expected_log_density(d, e_log_prec_u, e_prec_u, sq);
  }

  terms.w = gaussian_expected_log_density(d, state.prec_w.expected_log(), state.prec_w.mean(),
                                          state.w.mean().squaredNorm() + state.w.trace());

  for (const GammaPosterior* q : {&state.prec_u, &state.prec_b, &state.prec_s, &state.prec_w}) {
    terms.precisions += gamma_expected_log_density(hp.alpha0, hp.beta0, *q);
    terms.entropy += gamma_entropy(*q);
  }

  for (const auto* group : {&state.users, &state.brands, &state.styles}) {
    for (const GaussianPosterior& g : *group) terms.entropy += gaussian_entropy(d, g.log_det());
  }
  terms.entropy += gaussian_entropy(d, state.w.log_det());
  for (int i = 0; i < state.num_brands(); ++i) {
    const Vector row = state.resp.row(i).transpose();
    terms.entropy += categorical_entropy(view(row));
  }
  terms.entropy += dirichlet_entropy(state.theta_gamma);

  return terms;
}

double elbo(const VariationalState& state, const Dataset& data, const HyperParams& hp) {
  return elbo_terms(state, data, hp).total();
}

}  // namespace hbayes
