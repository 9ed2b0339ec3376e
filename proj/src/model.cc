#include "hbayes/model.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <string>

#include "hbayes/kernels.hpp"

namespace hbayes {

HyperParams HyperParams::defaults(int num_styles, int feature_dim) {
  HyperParams hp;
  hp.num_styles = num_styles;
  hp.feature_dim = feature_dim;
  hp.gamma0 = Vector::Constant(num_styles > 0 ? num_styles : 0, 1.0 / std::max(num_styles, 1));
  return hp;
}

void HyperParams::validate() const {
  if (num_styles < 1) throw InputError("num_styles must be >= 1");
  if (feature_dim < 1) throw InputError("feature_dim must be >= 1");
  if (gamma0.size() != num_styles) throw InputError("gamma0 must have num_styles entries");
  for (Eigen::Index j = 0; j < gamma0.size(); ++j) {
    if (!(gamma0[j] > 0.0) || !std::isfinite(gamma0[j])) {
      throw InputError("gamma0 entries must be positive");
    }
  }
  if (!(alpha0 > 0.0) || !std::isfinite(alpha0)) throw InputError("alpha0 must be positive");
  if (!(beta0 > 0.0) || !std::isfinite(beta0)) throw InputError("beta0 must be positive");
  if (max_iters < 0) throw InputError("max_iters must be non-negative");
  if (!(rel_tol > 0.0)) throw InputError("rel_tol must be positive");
}

void Dataset::validate() const {
  if (feature_dim < 1) throw InputError("feature_dim must be >= 1");
  if (num_users < 0 || num_brands < 0) throw InputError("negative entity count");
  for (std::size_t t = 0; t < events.size(); ++t) {
    const EventRecord& e = events[t];
    const std::string where = "event " + std::to_string(t) + ": ";
    if (e.x.size() != feature_dim) throw InputError(where + "feature length mismatch");
    if (!e.x.allFinite()) throw InputError(where + "non-finite feature");
    if (e.brand < 0 || e.brand >= num_brands) throw InputError(where + "brand out of range");
    if (e.user < 0 || e.user >= num_users) throw InputError(where + "user out of range");
    if (e.y != 0 && e.y != 1) throw InputError(where + "label must be 0 or 1");
  }
}

GaussianPosterior GaussianPosterior::full(Vector mean, Matrix covariance) {
  if (covariance.rows() != mean.size() || covariance.cols() != mean.size()) {
    throw InputError("covariance shape does not match mean");
  }
  GaussianPosterior g;
  g.mean_ = std::move(mean);
  g.covariance_ = std::move(covariance);
  g.isotropic_ = false;
  return g;
}

GaussianPosterior GaussianPosterior::isotropic(Vector mean, double variance) {
  GaussianPosterior g;
  g.mean_ = std::move(mean);
  g.variance_ = variance;
  g.isotropic_ = true;
  return g;
}

Matrix GaussianPosterior::dense_covariance() const {
  if (isotropic_) return Matrix::Identity(dim(), dim()) * variance_;
  return covariance_;
}

double GaussianPosterior::trace() const {
  return isotropic_ ? variance_ * dim() : covariance_.trace();
}

double GaussianPosterior::quad_form(std::span<const double> x) const {
  if (isotropic_) return variance_ * kernels::dot(x, x);
  return kernels::quad_form({covariance_.data(), static_cast<std::size_t>(covariance_.size())}, x);
}

double GaussianPosterior::log_det() const {
  if (isotropic_) {
    if (!(variance_ > 0.0)) throw NumericalError("non-positive isotropic variance");
    return dim() * std::log(variance_);
  }
  Eigen::LLT<Matrix> llt(covariance_);
  if (llt.info() != Eigen::Success) throw NumericalError("covariance is not positive definite");
  const auto diag = llt.matrixLLT().diagonal();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < diag.size(); ++i) {
    if (!(diag[i] > 0.0)) throw NumericalError("covariance is not positive definite");
    acc += std::log(diag[i]);
  }
  return 2.0 * acc;
}

void GaussianPosterior::validate() const {
  if (!mean_.allFinite()) throw InvariantError("Gaussian mean is not finite");
  if (isotropic_) {
    if (!(variance_ > 0.0) || !std::isfinite(variance_)) {
      throw InvariantError("isotropic variance must be positive");
    }
    return;
  }
  if (covariance_.rows() != dim() || covariance_.cols() != dim()) {
    throw InvariantError("covariance shape does not match mean");
  }
  if (!covariance_.allFinite()) throw InvariantError("covariance is not finite");
  const double scale = std::max(1.0, covariance_.cwiseAbs().maxCoeff());
  if ((covariance_ - covariance_.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw InvariantError("covariance is not symmetric");
  }
  Eigen::LLT<Matrix> llt(covariance_);
  if (llt.info() != Eigen::Success) throw InvariantError("covariance is not positive definite");
}

double GammaPosterior::expected_log() const {
  return boost::math::digamma(shape) - std::log(rate);
}

void GammaPosterior::validate() const {
  if (!(shape > 0.0) || !std::isfinite(shape)) throw InvariantError("Gamma shape must be positive");
  if (!(rate > 0.0) || !std::isfinite(rate)) throw InvariantError("Gamma rate must be positive");
}

void VariationalState::validate() const {
  const int d = feature_dim();
  if (d < 1) throw InvariantError("state has no feature dimension");
  const int s = num_styles();
  if (s < 1) throw InvariantError("state has no styles");
  auto check_all = [d](const std::vector<GaussianPosterior>& factors, const char* what,
                       bool need_isotropic) {
    for (const GaussianPosterior& g : factors) {
      if (g.dim() != d) throw InvariantError(std::string(what) + " dimension mismatch");
      if (need_isotropic && !g.is_isotropic()) {
        throw InvariantError(std::string(what) + " must use the isotropic form");
      }
      g.validate();
    }
  };
  check_all(users, "user", false);
  check_all(brands, "brand", false);
  check_all(styles, "style", true);
  if (!w.is_isotropic()) throw InvariantError("w must use the isotropic form");
  w.validate();
  if (theta_gamma.size() != s) throw InvariantError("theta_gamma length mismatch");
  for (Eigen::Index j = 0; j < s; ++j) {
    if (!(theta_gamma[j] > 0.0) || !std::isfinite(theta_gamma[j])) {
      throw InvariantError("theta_gamma entries must be positive");
    }
  }
  if (resp.rows() != num_brands() || resp.cols() != s) {
    throw InvariantError("responsibilities shape mismatch");
  }
  for (Eigen::Index i = 0; i < resp.rows(); ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < s; ++j) {
      const double m = resp(i, j);
      if (!(m >= 0.0 && m <= 1.0)) throw InvariantError("responsibility outside [0, 1]");
      row += m;
    }
    if (std::abs(row - 1.0) > 1e-9) throw InvariantError("responsibility row does not sum to 1");
  }
  prec_u.validate();
  prec_b.validate();
  prec_s.validate();
  prec_w.validate();
  for (Eigen::Index t = 0; t < xi.size(); ++t) {
    if (!(xi[t] >= 0.0) || !std::isfinite(xi[t])) throw InvariantError("xi must be non-negative");
  }
}

void VariationalState::validate_against(const Dataset& data) const {
  validate();
  if (num_users() != data.num_users || num_brands() != data.num_brands ||
      feature_dim() != data.feature_dim) {
    throw InputError("state dimensions do not match the dataset");
  }
  if (static_cast<std::size_t>(xi.size()) != data.size()) {
    throw InputError("xi length does not match the number of events");
  }
}

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double log_sigmoid(double v) {
  if (v >= 0.0) return -std::log1p(std::exp(-v));
  return v - std::log1p(std::exp(v));
}

double lambda_of_xi(double xi) {
  if (std::isnan(xi)) throw InputError("lambda_of_xi: xi is NaN");
  const double a = std::abs(xi);
  // tanh(a/2) / (4a) == (sigmoid(a) - 1/2) / (2a); series below 1e-4.
  if (a < 1e-4) return 0.125 - a * a / 96.0;
  return std::tanh(0.5 * a) / (4.0 * a);
}

double jj_lower_bound(double h, double xi) {
  const double lam = lambda_of_xi(xi);
  return std::exp(log_sigmoid(xi) + 0.5 * (h - xi) - lam * (h * h - xi * xi));
}

double event_log_likelihood(const EventRecord& e, std::span<const double> brand_mean,
                            std::span<const double> user_mean) {
  const auto d = static_cast<std::size_t>(e.x.size());
  if (brand_mean.size() != d || user_mean.size() != d) {
    throw InputError("event_log_likelihood: dimension mismatch");
  }
  const std::span<const double> x(e.x.data(), d);
  const double h = kernels::dot(x, brand_mean) + kernels::dot(x, user_mean);
  return e.y == 1 ? log_sigmoid(h) : log_sigmoid(-h);
}

}  // namespace hbayes
