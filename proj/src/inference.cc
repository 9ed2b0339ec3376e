#include "hbayes/inference.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "detail.hpp"
#include "hbayes/kernels.hpp"
#include "parallel.hpp"

namespace hbayes {

using detail::view;

namespace {

Vector lambdas_of(const Vector& xi) {
  Vector out(xi.size());
  for (Eigen::Index t = 0; t < xi.size(); ++t) out[t] = lambda_of_xi(xi[t]);
  return out;
}

std::vector<int> events_where(const Dataset& data, bool by_user, int id) {
  std::vector<int> out;
  for (std::size_t t = 0; t < data.size(); ++t) {
    const EventRecord& e = data.events[t];
    if ((by_user ? e.user : e.brand) == id) out.push_back(static_cast<int>(t));
  }
  return out;
}

// Gaussian factor whose natural parameters are
//   precision = prior_prec * I + sum_t 2 lambda_t x_t x_t^T
//   shift     = prior_shift + sum_t (y_t - 1/2 - 2 lambda_t x_t^T E[other]) x_t
// where "other" is the opposite side (brand for a user, user for a brand).
template <typename OtherMean>
GaussianPosterior likelihood_conjugate_update(const Dataset& data, double prior_prec,
                                              Vector shift, std::span<const int> event_ids,
                                              std::span<const double> lambdas,
                                              OtherMean&& other_mean) {
  const int d = data.feature_dim;
  Matrix precision = Matrix::Identity(d, d) * prior_prec;
  for (int t : event_ids) {
    const EventRecord& e = data.events[t];
    const auto x = view(e.x);
    const double lam = lambdas[t];
    kernels::syr(2.0 * lam, x, detail::view(precision));
    const double coeff = (e.y - 0.5) - 2.0 * lam * kernels::dot(x, view(other_mean(e)));
    kernels::axpy(coeff, x, detail::view(shift));
  }
  Matrix cov = invert_spd(precision);
  Vector mean = cov * shift;
  if (!mean.allFinite()) throw NumericalError("posterior mean is not finite");
  return GaussianPosterior::full(std::move(mean), std::move(cov));
}

}  // namespace

EventIndex EventIndex::build(const Dataset& data) {
  EventIndex index;
  index.by_user.resize(data.num_users);
  index.by_brand.resize(data.num_brands);
  for (std::size_t t = 0; t < data.size(); ++t) {
    const EventRecord& e = data.events[t];
    index.by_user[e.user].push_back(static_cast<int>(t));
    index.by_brand[e.brand].push_back(static_cast<int>(t));
  }
  return index;
}

VariationalState initialize_state(const Dataset& data, const HyperParams& hp, std::uint64_t seed) {
  hp.validate();
  if (data.feature_dim != hp.feature_dim) throw InputError("feature_dim mismatch with data");
  const int d = hp.feature_dim;
  const int num_styles = hp.num_styles;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_vector = [&](double scale) {
    Vector v(d);
    for (int i = 0; i < d; ++i) v[i] = scale * normal(rng);
    return v;
  };

  VariationalState state;
  state.users.reserve(data.num_users);
  for (int k = 0; k < data.num_users; ++k) {
    state.users.push_back(GaussianPosterior::full(random_vector(0.01), Matrix::Identity(d, d)));
  }
  state.brands.reserve(data.num_brands);
  for (int i = 0; i < data.num_brands; ++i) {
    state.brands.push_back(GaussianPosterior::full(random_vector(0.01), Matrix::Identity(d, d)));
  }
  state.styles.reserve(num_styles);
  for (int j = 0; j < num_styles; ++j) {
    state.styles.push_back(GaussianPosterior::isotropic(random_vector(0.1), 1.0));
  }
  state.w = GaussianPosterior::isotropic(Vector::Zero(d), 1.0);
  state.theta_gamma = hp.gamma0;

  // Uniform plus Dirichlet(1) jitter, renormalized.
  std::gamma_distribution<double> unit_gamma(1.0, 1.0);
  state.resp.resize(data.num_brands, num_styles);
  for (int i = 0; i < data.num_brands; ++i) {
    Vector g(num_styles);
    for (int j = 0; j < num_styles; ++j) g[j] = unit_gamma(rng);
    g /= g.sum();
    for (int j = 0; j < num_styles; ++j) state.resp(i, j) = 0.5 * (1.0 / num_styles + g[j]);
  }

  const GammaPosterior prior{hp.alpha0, hp.beta0};
  state.prec_u = state.prec_b = state.prec_s = state.prec_w = prior;
  state.xi = Vector::Ones(static_cast<Eigen::Index>(data.size()));
  return state;
}

Matrix update_responsibilities(const VariationalState& state, const Dataset& data,
                               const HyperParams& hp) {
  (void)data;
  (void)hp;
  const int d = state.feature_dim();
  const int num_styles = state.num_styles();
  const Vector e_log_theta = elbo_parts::dirichlet_expected_log(state.theta_gamma);
  const double e_prec_b = state.prec_b.mean();
  const double constant =
      0.5 * d * state.prec_b.expected_log() - 0.5 * d * std::log(2.0 * std::numbers::pi);

  Matrix resp(state.num_brands(), num_styles);
  Vector log_rho(num_styles);
  for (int i = 0; i < state.num_brands(); ++i) {
    const GaussianPosterior& brand = state.brands[i];
    for (int j = 0; j < num_styles; ++j) {
      const GaussianPosterior& style = state.styles[j];
      const double sq = kernels::squared_distance(view(brand.mean()), view(style.mean())) +
                        brand.trace() + style.trace();
      log_rho[j] = e_log_theta[j] + constant - 0.5 * e_prec_b * sq;
    }
    const double peak = log_rho.maxCoeff();
    const Vector rho = (log_rho.array() - peak).exp().matrix();
    const double norm = rho.sum();
    if (!std::isfinite(peak) || !(norm > 0.0) || !std::isfinite(norm)) {
      throw NumericalError("non-finite responsibilities for brand " + std::to_string(i));
    }
    resp.row(i) = (rho / norm).transpose();
  }
  return resp;
}

Vector update_theta(const Matrix& resp, const HyperParams& hp) {
  if (resp.rows() == 0) return hp.gamma0;
  if (resp.cols() != hp.gamma0.size()) throw InputError("update_theta: style count mismatch");
  return hp.gamma0 + resp.colwise().sum().transpose();
}

GaussianPosterior update_user(int k, const VariationalState& state, const Dataset& data,
                              std::span<const int> user_events, std::span<const double> lambdas) {
  if (k < 0 || k >= state.num_users()) throw InputError("update_user: user out of range");
  return likelihood_conjugate_update(
      data, state.prec_u.mean(), Vector::Zero(data.feature_dim), user_events, lambdas,
      [&](const EventRecord& e) -> const Vector& { return state.brands[e.brand].mean(); });
}

GaussianPosterior update_user(int k, const VariationalState& state, const Dataset& data) {
  const std::vector<int> ids = events_where(data, true, k);
  const Vector lambdas = lambdas_of(state.xi);
  return update_user(k, state, data, ids, view(lambdas));
}

GaussianPosterior update_brand(int i, const VariationalState& state, const Dataset& data,
                               std::span<const int> brand_events,
                               std::span<const double> lambdas) {
  if (i < 0 || i >= state.num_brands()) throw InputError("update_brand: brand out of range");
  const double e_prec_b = state.prec_b.mean();
  // Rows of the responsibilities sum to one, so the prior precision is
  // e_prec_b * I and the prior mean the responsibility-weighted style mean.
  double weight = 0.0;
  Vector shift = Vector::Zero(data.feature_dim);
  for (int j = 0; j < state.num_styles(); ++j) {
    const double mu = state.resp(i, j);
    weight += mu;
    kernels::axpy(e_prec_b * mu, view(state.styles[j].mean()), detail::view(shift));
  }
  return likelihood_conjugate_update(
      data, e_prec_b * weight, std::move(shift), brand_events, lambdas,
      [&](const EventRecord& e) -> const Vector& { return state.users[e.user].mean(); });
}

GaussianPosterior update_brand(int i, const VariationalState& state, const Dataset& data) {
  const std::vector<int> ids = events_where(data, false, i);
  const Vector lambdas = lambdas_of(state.xi);
  return update_brand(i, state, data, ids, view(lambdas));
}

GaussianPosterior update_style(int j, const VariationalState& state) {
  if (j < 0 || j >= state.num_styles()) throw InputError("update_style: style out of range");
  const double e_prec_s = state.prec_s.mean();
  const double e_prec_b = state.prec_b.mean();
  double assigned = 0.0;
  Vector shift = e_prec_s * state.w.mean();
  for (int i = 0; i < state.num_brands(); ++i) {
    const double mu = state.resp(i, j);
    assigned += mu;
    kernels::axpy(e_prec_b * mu, view(state.brands[i].mean()), detail::view(shift));
  }
  const double variance = 1.0 / (e_prec_s + e_prec_b * assigned);
  return GaussianPosterior::isotropic(variance * shift, variance);
}

GaussianPosterior update_w(const VariationalState& state) {
  const double e_prec_s = state.prec_s.mean();
  const double variance = 1.0 / (state.prec_w.mean() + e_prec_s * state.num_styles());
  Vector style_sum = Vector::Zero(state.feature_dim());
  for (const GaussianPosterior& style : state.styles) {
    kernels::axpy(1.0, view(style.mean()), detail::view(style_sum));
  }
  return GaussianPosterior::isotropic(variance * e_prec_s * style_sum, variance);
}

PrecisionPosteriors update_precisions(const VariationalState& state, const Dataset& data,
                                      const HyperParams& hp) {
  (void)data;
  const double d = state.feature_dim();
  PrecisionPosteriors out;

  double user_sq = 0.0;
  for (const GaussianPosterior& user : state.users) {
    user_sq += user.mean().squaredNorm() + user.trace();
  }
  out.user = {hp.alpha0 + 0.5 * d * state.num_users(), hp.beta0 + 0.5 * user_sq};

  double brand_sq = 0.0;
  for (int i = 0; i < state.num_brands(); ++i) {
    const GaussianPosterior& brand = state.brands[i];
    for (int j = 0; j < state.num_styles(); ++j) {
      const double mu = state.resp(i, j);
      if (mu == 0.0) continue;
      const GaussianPosterior& style = state.styles[j];
      brand_sq += mu * (kernels::squared_distance(view(brand.mean()), view(style.mean())) +
                        brand.trace() + style.trace());
    }
  }
  out.brand = {hp.alpha0 + 0.5 * d * state.num_brands(), hp.beta0 + 0.5 * brand_sq};

  double style_sq = 0.0;
  for (const GaussianPosterior& style : state.styles) {
    style_sq += kernels::squared_distance(view(style.mean()), view(state.w.mean())) +
                style.trace() + state.w.trace();
  }
  out.style = {hp.alpha0 + 0.5 * d * state.num_styles(), hp.beta0 + 0.5 * style_sq};

  out.w = {hp.alpha0 + 0.5 * d,
           hp.beta0 + 0.5 * (state.w.mean().squaredNorm() + state.w.trace())};
  return out;
}

Vector update_xi(const VariationalState& state, const Dataset& data) {
  Vector xi(static_cast<Eigen::Index>(data.size()));
  for (std::size_t t = 0; t < data.size(); ++t) {
    const EventRecord& e = data.events[t];
    const GaussianPosterior& brand = state.brands[e.brand];
    const GaussianPosterior& user = state.users[e.user];
    const auto x = view(e.x);
    const double mean_h = kernels::dot(x, view(brand.mean())) + kernels::dot(x, view(user.mean()));
    const double second = mean_h * mean_h + brand.quad_form(x) + user.quad_form(x);
    xi[static_cast<Eigen::Index>(t)] = std::sqrt(std::max(second, 0.0));
  }
  return xi;
}

Matrix invert_spd(const Matrix& precision) {
  const Eigen::Index d = precision.rows();
  if (!precision.allFinite()) throw NumericalError("precision matrix is not finite");
  Eigen::LLT<Matrix> llt(precision);
  double jitter = 1e-10;
  while (llt.info() != Eigen::Success) {
    if (jitter > 1e-6 * (1.0 + 1e-9)) {
      throw NumericalError("precision matrix is not positive definite after jitter");
    }
    llt.compute(precision + jitter * Matrix::Identity(d, d));
    jitter *= 10.0;
  }
  Matrix cov = llt.solve(Matrix::Identity(d, d));
  return 0.5 * (cov + cov.transpose());
}

void run_sweep(VariationalState& state, const Dataset& data, const HyperParams& hp,
               const EventIndex& index, const FitOptions& options) {
  const int threads = options.num_threads;

  state.resp = update_responsibilities(state, data, hp);
  state.theta_gamma = update_theta(state.resp, hp);

  const Vector lambdas = lambdas_of(state.xi);
  // Users depend only on brand means, so they can be written in place.
  detail::parallel_for(state.num_users(), threads, [&](int k) {
    state.users[k] = update_user(k, state, data, index.by_user[k], view(lambdas));
  });
  detail::parallel_for(state.num_brands(), threads, [&](int i) {
    state.brands[i] = update_brand(i, state, data, index.by_brand[i], view(lambdas));
  });
  detail::parallel_for(state.num_styles(), threads,
                       [&](int j) { state.styles[j] = update_style(j, state); });
  state.w = update_w(state);

  const PrecisionPosteriors prec = update_precisions(state, data, hp);
  state.prec_u = prec.user;
  state.prec_b = prec.brand;
  state.prec_s = prec.style;
  state.prec_w = prec.w;

  state.xi = update_xi(state, data);
}

FitResult fit_from(VariationalState initial, const Dataset& data, const HyperParams& hp,
                   const FitOptions& options) {
  hp.validate();
  data.validate();
  if (data.size() == 0) throw InputError("fit: empty dataset");
  initial.validate_against(data);

  FitResult result{std::move(initial), {}};
  if (hp.max_iters == 0) return result;

  const EventIndex index = EventIndex::build(data);
  double previous = elbo(result.state, data, hp);
  for (int iter = 1; iter <= hp.max_iters; ++iter) {
    double current = 0.0;
    try {
      run_sweep(result.state, data, hp, index, options);
      current = elbo(result.state, data, hp);
    } catch (const NumericalError& err) {
      throw NumericalError("sweep " + std::to_string(iter) + ": " + err.what());
    }
    if (!std::isfinite(current)) {
      throw NumericalError("sweep " + std::to_string(iter) + ": ELBO is not finite");
    }
    result.report.elbo_trace.push_back(current);
    result.report.iterations_run = iter;
    if (std::abs(current - previous) / (std::abs(current) + 1e-12) < hp.rel_tol) {
      result.report.converged = true;
      break;
    }
    previous = current;
  }
  return result;
}

std::uint64_t restart_seed(std::uint64_t seed, int restart) {
  if (restart == 0) return seed;
  // splitmix64 step
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(restart);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

VariationalState starting_state(const Dataset& data, const HyperParams& hp, std::uint64_t seed,
                                const FitOptions& options) {
  VariationalState state = initialize_state(data, hp, seed);
  if (options.init == InitStrategy::kRandom || state.num_brands() == 0) return state;
  if (options.warmup_sweeps < 0) throw InputError("warmup_sweeps must be >= 0");

  data.validate();
  const EventIndex index = EventIndex::build(data);
  for (int s = 0; s < options.warmup_sweeps; ++s) run_sweep(state, data, hp, index, options);

  // D^2 seeding over brand posterior means.
  std::mt19937_64 rng(restart_seed(seed, -1));
  const int num_brands = state.num_brands();
  std::vector<double> nearest(num_brands, std::numeric_limits<double>::infinity());
  int pick = std::uniform_int_distribution<int>(0, num_brands - 1)(rng);
  for (int j = 0; j < state.num_styles(); ++j) {
    const Vector& center = state.brands[pick].mean();
    state.styles[j].mean() = center;
    for (int i = 0; i < num_brands; ++i) {
      nearest[i] = std::min(nearest[i], kernels::squared_distance(view(state.brands[i].mean()),
                                                                  view(center)));
    }
    double total = 0.0;
    for (double v : nearest) total += v;
    if (!(total > 0.0)) {
      pick = std::uniform_int_distribution<int>(0, num_brands - 1)(rng);
    } else {
      pick = std::discrete_distribution<int>(nearest.begin(), nearest.end())(rng);
    }
  }
  return state;
}

FitResult fit(const Dataset& data, const HyperParams& hp, std::uint64_t seed,
              const FitOptions& options) {
  if (options.restarts < 1) throw InputError("fit: restarts must be >= 1");
  FitResult best = fit_from(starting_state(data, hp, seed, options), data, hp, options);
  for (int r = 1; r < options.restarts; ++r) {
    FitResult candidate =
        fit_from(starting_state(data, hp, restart_seed(seed, r), options), data, hp, options);
    if (candidate.report.elbo_trace.empty()) continue;
    if (best.report.elbo_trace.empty() ||
        candidate.report.elbo_trace.back() > best.report.elbo_trace.back()) {
      best = std::move(candidate);
    }
  }
  return best;
}

}  // namespace hbayes
