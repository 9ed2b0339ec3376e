#pragma once

// Domain types of the hierarchical style -> brand -> item click model and
// the probability math shared by inference, prediction and evaluation.

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "hbayes/error.hpp"

namespace hbayes {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct HyperParams {
  int num_styles = 1;
  int feature_dim = 1;
  Vector gamma0;  // Dirichlet concentration, length num_styles
  double alpha0 = 1e-2;
  double beta0 = 1e-2;
  int max_iters = 200;
  double rel_tol = 1e-5;

  // gamma0 = 1/S everywhere, vague Gamma priors.
  static HyperParams defaults(int num_styles, int feature_dim);

  void validate() const;
};

struct EventRecord {
  Vector x;
  int brand = 0;
  int user = 0;
  int y = 0;
};

struct Dataset {
  std::vector<EventRecord> events;
  int num_users = 0;
  int num_brands = 0;
  int feature_dim = 0;

  std::size_t size() const { return events.size(); }
  void validate() const;
};

// Mean plus covariance of one latent vector. The covariance is either a
// dense SPD matrix or the compact isotropic form variance * I.
class GaussianPosterior {
 public:
  GaussianPosterior() = default;

  static GaussianPosterior full(Vector mean, Matrix covariance);
  static GaussianPosterior isotropic(Vector mean, double variance);

  int dim() const { return static_cast<int>(mean_.size()); }
  const Vector& mean() const { return mean_; }
  Vector& mean() { return mean_; }

  bool is_isotropic() const { return isotropic_; }
  // Only meaningful for the isotropic form.
  double variance() const { return variance_; }
  // Only meaningful for the full form.
  const Matrix& covariance() const { return covariance_; }

  Matrix dense_covariance() const;
  double trace() const;
  // x^T Sigma x
  double quad_form(std::span<const double> x) const;
  // Throws NumericalError if the covariance is not positive definite.
  double log_det() const;

  // Throws InvariantError on asymmetric / non-PD covariance or non-finite mean.
  void validate() const;

 private:
  Vector mean_;
  Matrix covariance_;
  double variance_ = 0.0;
  bool isotropic_ = false;
};

struct GammaPosterior {
  double shape = 1.0;
  double rate = 1.0;

  double mean() const { return shape / rate; }
  double expected_log() const;  // digamma(shape) - ln(rate)
  void validate() const;
};

struct VariationalState {
  std::vector<GaussianPosterior> users;
  std::vector<GaussianPosterior> brands;
  std::vector<GaussianPosterior> styles;  // isotropic
  GaussianPosterior w;                    // isotropic
  Vector theta_gamma;
  Matrix resp;  // B x S responsibilities, rows on the simplex
  GammaPosterior prec_u, prec_b, prec_s, prec_w;
  Vector xi;  // one per event

  int num_users() const { return static_cast<int>(users.size()); }
  int num_brands() const { return static_cast<int>(brands.size()); }
  int num_styles() const { return static_cast<int>(styles.size()); }
  int feature_dim() const { return w.dim(); }

  void validate() const;
  // validate() plus dimension agreement with the data.
  void validate_against(const Dataset& data) const;
};

double sigmoid(double v);
// ln sigmoid(v), stable for large |v|.
double log_sigmoid(double v);

// (sigmoid(xi) - 1/2) / (2 xi), even in xi, 1/8 at xi = 0.
double lambda_of_xi(double xi);

// Jaakkola-Jordan lower bound on sigmoid(h), tight at h = +-xi.
double jj_lower_bound(double h, double xi);

// Bernoulli-logistic log-likelihood of one event at point estimates.
double event_log_likelihood(const EventRecord& e, std::span<const double> brand_mean,
                            std::span<const double> user_mean);

// Per-factor contributions to the evidence lower bound.
struct ElboTerms {
  double likelihood = 0.0;   // xi-bounded event terms
  double brands = 0.0;       // E[ln p(B | z, S, delta_b)]
  double assignments = 0.0;  // E[ln p(z | theta)]
  double styles = 0.0;       // E[ln p(S | w, delta_s)]
  double theta = 0.0;        // E[ln p(theta | gamma0)]
  double users = 0.0;        // E[ln p(U | delta_u)]
  double w = 0.0;            // E[ln p(w | delta_w)]
  double precisions = 0.0;   // four Gamma priors
  double entropy = 0.0;      // sum of the entropies of every q factor

  double total() const {
    return likelihood + brands + assignments + styles + theta + users + w + precisions + entropy;
  }
};

ElboTerms elbo_terms(const VariationalState& state, const Dataset& data, const HyperParams& hp);
double elbo(const VariationalState& state, const Dataset& data, const HyperParams& hp);

// Closed-form building blocks of the ELBO, exposed for testing.
namespace elbo_parts {

// E_q[ln sigma(xi) + (y - 1/2) h - xi/2 - lambda(xi) (h^2 - xi^2)]
double bounded_event(int y, double mean_h, double second_moment_h, double xi);

// E[ln N(v; m, delta^{-1} I)] given E[ln delta], E[delta], E||v - m||^2.
double gaussian_expected_log_density(int dim, double expected_log_prec, double expected_prec,
                                     double expected_sq_dist);

double gaussian_entropy(int dim, double log_det_cov);

// digamma(gamma_j) - digamma(sum gamma)
Vector dirichlet_expected_log(const Vector& gamma);
double dirichlet_expected_log_density(const Vector& prior, const Vector& expected_log_theta);
double dirichlet_entropy(const Vector& gamma);

double gamma_expected_log_density(double alpha0, double beta0, const GammaPosterior& q);
double gamma_entropy(const GammaPosterior& q);

// -sum p ln p with 0 ln 0 = 0
double categorical_entropy(std::span<const double> probs);

}  // namespace elbo_parts

}  // namespace hbayes
