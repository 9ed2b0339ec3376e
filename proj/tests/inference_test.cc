#include "hbayes/inference.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "hbayes/generator.hpp"
#include "test_util.hpp"

using namespace hbayes;
using hbayes::testing::blank_state;
using hbayes::testing::make_dataset;
using hbayes::testing::point_mass;
using hbayes::testing::vec;

namespace {

// lambda(1) = (sigmoid(1) - 1/2) / 2
constexpr double kLambda1 = 0.11552928931500245;

GeneratedData synthetic(std::uint64_t seed, int users = 20, int brands = 15, int styles = 3,
                        int dim = 10, int events = 2000) {
  HyperParams hp = HyperParams::defaults(styles, dim);
  return sample_dataset(hp, users, brands, events, TruePrecisions{}, 1.0, seed);
}

bool is_spd(const GaussianPosterior& g) {
  const Matrix c = g.dense_covariance();
  if (!c.isApprox(c.transpose(), 1e-12)) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(c);
  return eig.eigenvalues().minCoeff() > 0.0;
}

Vector unit_direction(std::mt19937_64& rng, int d) {
  Vector v = hbayes::testing::random_vector(rng, d);
  return v / v.norm();
}

}  // namespace

TEST_CASE("update_responsibilities examples") {
  SUBCASE("single style") {
    Dataset data = make_dataset(1, 3, 2);
    VariationalState s = blank_state(1, 3, 1, 2, 0);
    s.brands[1].mean() = vec({3.0, -1.0});
    const Matrix r = update_responsibilities(s, data, HyperParams::defaults(1, 2));
    for (int i = 0; i < 3; ++i) CHECK(r(i, 0) == 1.0);
  }
  SUBCASE("identical styles give uniform rows") {
    Dataset data = make_dataset(1, 2, 2);
    VariationalState s = blank_state(1, 2, 4, 2, 0);
    s.brands[0].mean() = vec({0.5, 2.0});
    for (auto& style : s.styles) style = GaussianPosterior::isotropic(vec({1.0, -1.0}), 0.3);
    const Matrix r = update_responsibilities(s, data, HyperParams::defaults(4, 2));
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 4; ++j) CHECK(r(i, j) == doctest::Approx(0.25).epsilon(1e-12));
  }
  SUBCASE("two point-mass styles") {
    Dataset data = make_dataset(1, 1, 1);
    VariationalState s = blank_state(1, 1, 2, 1, 0);
    s.brands[0] = point_mass(vec({0.0}));
    s.styles[0] = GaussianPosterior::isotropic(vec({0.0}), 1e-12);
    s.styles[1] = GaussianPosterior::isotropic(vec({2.0}), 1e-12);
    const Matrix r = update_responsibilities(s, data, HyperParams::defaults(2, 1));
    CHECK(r(0, 0) == doctest::Approx(0.8807970779778823).epsilon(1e-9));
    CHECK(r(0, 1) == doctest::Approx(0.11920292202211755).epsilon(1e-9));
  }
  SUBCASE("rows sum to one on random states") {
    std::mt19937_64 rng(4);
    Dataset data = make_dataset(1, 12, 3);
    for (int trial = 0; trial < 50; ++trial) {
      VariationalState s = blank_state(1, 12, 5, 3, 0);
      for (auto& b : s.brands) {
        b = GaussianPosterior::full(hbayes::testing::random_vector(rng, 3, 5.0),
                                    hbayes::testing::random_spd(rng, 3, 0.1));
      }
      for (auto& st : s.styles) {
        st = GaussianPosterior::isotropic(hbayes::testing::random_vector(rng, 3, 5.0), 0.2);
      }
      s.prec_b = {std::uniform_real_distribution<double>(0.1, 50.0)(rng), 0.5};
      s.theta_gamma = hbayes::testing::random_vector(rng, 5).cwiseAbs().array() + 0.01;
      const Matrix r = update_responsibilities(s, data, HyperParams::defaults(5, 3));
      for (int i = 0; i < 12; ++i) {
        REQUIRE(std::abs(r.row(i).sum() - 1.0) <= 1e-9);
        REQUIRE(r.row(i).minCoeff() >= 0.0);
      }
    }
  }
}

TEST_CASE("update_theta examples") {
  HyperParams hp = HyperParams::defaults(3, 2);
  CHECK(update_theta(Matrix(0, 3), hp) == hp.gamma0);
  Matrix resp(2, 3);
  resp << 1.0, 0.0, 0.0, 0.5, 0.5, 0.0;
  const Vector g = update_theta(resp, hp);
  CHECK(g[0] == doctest::Approx(11.0 / 6.0));
  CHECK(g[1] == doctest::Approx(5.0 / 6.0));
  CHECK(g[2] == doctest::Approx(1.0 / 3.0));
  CHECK(g.sum() == doctest::Approx(hp.gamma0.sum() + 2.0));
  // Recomputed from the prior, not accumulated.
  CHECK(update_theta(resp, hp) == g);
}

TEST_CASE("update_user examples") {
  SUBCASE("no events reverts to the prior") {
    Dataset data = make_dataset(2, 1, 3);
    data.events.push_back({vec({1.0, 0.0, 0.0}), 0, 1, 1});
    VariationalState s = blank_state(2, 1, 1, 3, 1);
    s.prec_u = {3.0, 1.5};
    const GaussianPosterior u = update_user(0, s, data);
    CHECK(u.mean().norm() == 0.0);
    CHECK(u.covariance().isApprox(Matrix::Identity(3, 3) * 0.5, 1e-14));
  }
  SUBCASE("d = 1 single event") {
    Dataset data = make_dataset(1, 1, 1);
    data.events.push_back({vec({1.0}), 0, 0, 1});
    VariationalState s = blank_state(1, 1, 1, 1, 1);
    const GaussianPosterior u = update_user(0, s, data);
    const double sigma = 1.0 / (1.0 + 2.0 * kLambda1);
    CHECK(sigma == doctest::Approx(0.812309).epsilon(1e-6));
    CHECK(u.covariance()(0, 0) == doctest::Approx(sigma).epsilon(1e-12));
    CHECK(u.mean()[0] == doctest::Approx(0.5 * sigma).epsilon(1e-12));
    CHECK(u.mean()[0] == doctest::Approx(0.406155).epsilon(1e-6));
  }
  SUBCASE("stronger prior shrinks the mean") {
    const GeneratedData g = synthetic(3, 4, 3, 2, 3, 200);
    VariationalState s = initialize_state(g.dataset, HyperParams::defaults(2, 3), 1);
    for (auto& b : s.brands) b.mean() = Vector::Constant(3, 0.3);
    s.prec_u = {1.0, 1.0};
    for (int k = 0; k < 4; ++k) {
      const double weak = update_user(k, s, g.dataset).mean().norm();
      VariationalState strong = s;
      strong.prec_u = {2.0, 1.0};
      CHECK(update_user(k, strong, g.dataset).mean().norm() < weak);
    }
  }
}

TEST_CASE("update_brand examples") {
  SUBCASE("no events gives the responsibility-weighted style mean") {
    Dataset data = make_dataset(1, 2, 2);
    data.events.push_back({vec({1.0, 0.0}), 1, 0, 1});
    VariationalState s = blank_state(1, 2, 2, 2, 1);
    s.styles[0].mean() = vec({1.0, 2.0});
    s.styles[1].mean() = vec({-3.0, 0.0});
    s.resp.row(0) << 0.25, 0.75;
    s.prec_b = {4.0, 2.0};
    const GaussianPosterior b = update_brand(0, s, data);
    CHECK(b.mean()[0] == doctest::Approx(-2.0));
    CHECK(b.mean()[1] == doctest::Approx(0.5));
    CHECK(b.covariance().isApprox(Matrix::Identity(2, 2) * 0.5, 1e-14));

    s.resp.row(0) << 1.0, 0.0;
    CHECK(update_brand(0, s, data).mean().isApprox(s.styles[0].mean(), 1e-14));
  }
  SUBCASE("d = 1 single event mirrors update_user") {
    Dataset data = make_dataset(1, 1, 1);
    data.events.push_back({vec({1.0}), 0, 0, 1});
    VariationalState s = blank_state(1, 1, 1, 1, 1);
    const GaussianPosterior b = update_brand(0, s, data);
    CHECK(b.covariance()(0, 0) == doctest::Approx(0.812309).epsilon(1e-6));
    CHECK(b.mean()[0] == doctest::Approx(0.406155).epsilon(1e-6));
    CHECK(b.mean()[0] == doctest::Approx(update_user(0, s, data).mean()[0]).epsilon(1e-15));
  }
}

TEST_CASE("update_style examples") {
  VariationalState s = blank_state(1, 1, 2, 2, 0);
  s.prec_s = {2.0, 1.0};
  s.prec_b = {1.0, 1.0};
  s.w.mean() = vec({1.0, 1.0});
  s.brands[0].mean() = vec({4.0, 0.0});
  s.resp.row(0) << 1.0, 0.0;

  const GaussianPosterior assigned = update_style(0, s);
  CHECK(assigned.is_isotropic());
  CHECK(assigned.variance() == doctest::Approx(1.0 / 3.0));
  CHECK(assigned.mean()[0] == doctest::Approx(2.0));
  CHECK(assigned.mean()[1] == doctest::Approx(2.0 / 3.0));

  const GaussianPosterior empty = update_style(1, s);
  CHECK(empty.variance() == doctest::Approx(0.5));
  CHECK(empty.mean().isApprox(s.w.mean(), 1e-14));

  s.prec_b = {1e-300, 1.0};
  CHECK(update_style(0, s).mean().isApprox(s.w.mean(), 1e-12));
}

TEST_CASE("update_w examples") {
  VariationalState s = blank_state(1, 1, 2, 2, 0);
  s.prec_w = {1.0, 1.0};
  s.prec_s = {2.0, 1.0};
  s.styles[0].mean() = vec({0.25, 1.5});
  s.styles[1].mean() = vec({0.75, -0.5});
  const GaussianPosterior w = update_w(s);
  CHECK(w.variance() == doctest::Approx(0.2));
  CHECK(w.mean()[0] == doctest::Approx(0.4));
  CHECK(w.mean()[1] == doctest::Approx(0.4));
  // Mean of the style means shrunk by delta_s S / (delta_w + delta_s S).
  const Vector style_mean = 0.5 * (s.styles[0].mean() + s.styles[1].mean());
  CHECK(w.mean().isApprox(style_mean * (4.0 / 5.0), 1e-14));

  s.prec_s = {1e-300, 1.0};
  const GaussianPosterior prior_only = update_w(s);
  CHECK(prior_only.mean().norm() < 1e-250);
  CHECK(prior_only.variance() == doctest::Approx(1.0));
}

TEST_CASE("update_precisions examples") {
  HyperParams hp = HyperParams::defaults(2, 3);
  hp.alpha0 = 0.5;
  hp.beta0 = 0.25;
  SUBCASE("point masses at zero") {
    Dataset data = make_dataset(4, 5, 3);
    VariationalState s = blank_state(4, 5, 2, 3, 0);
    for (auto& u : s.users) u = point_mass(Vector::Zero(3), 1e-300);
    for (auto& b : s.brands) b = point_mass(Vector::Zero(3), 1e-300);
    for (auto& st : s.styles) st = GaussianPosterior::isotropic(Vector::Zero(3), 1e-300);
    s.w = GaussianPosterior::isotropic(Vector::Zero(3), 1e-300);
    const PrecisionPosteriors p = update_precisions(s, data, hp);
    CHECK(p.user.shape == doctest::Approx(0.5 + 3 * 4 / 2.0));
    CHECK(p.brand.shape == doctest::Approx(0.5 + 3 * 5 / 2.0));
    CHECK(p.style.shape == doctest::Approx(0.5 + 3 * 2 / 2.0));
    CHECK(p.w.shape == doctest::Approx(0.5 + 3 / 2.0));
    for (double rate : {p.user.rate, p.brand.rate, p.style.rate, p.w.rate}) CHECK(rate == 0.25);
  }
  SUBCASE("user second moment") {
    HyperParams hp2 = HyperParams::defaults(1, 2);
    Dataset data = make_dataset(1, 1, 2);
    VariationalState s = blank_state(1, 1, 1, 2, 0);
    s.users[0] = GaussianPosterior::full(vec({1.0, 1.0}), Matrix::Identity(2, 2) * 0.25);
    const PrecisionPosteriors p = update_precisions(s, data, hp2);
    CHECK(p.user.rate - hp2.beta0 == doctest::Approx(1.25));
  }
  SUBCASE("larger second moment lowers the posterior mean") {
    Dataset data = make_dataset(1, 1, 3);
    VariationalState s = blank_state(1, 1, 2, 3, 0);
    const double before = update_precisions(s, data, hp).user.mean();
    s.users[0].mean() = vec({1.0, 2.0, 3.0});
    CHECK(update_precisions(s, data, hp).user.mean() < before);
  }
}

TEST_CASE("update_xi examples") {
  Dataset data = make_dataset(1, 1, 1);
  data.events.push_back({vec({2.0}), 0, 0, 1});
  data.events.push_back({vec({0.0}), 0, 0, 0});
  VariationalState s = blank_state(1, 1, 1, 1, 2);
  s.brands[0] = GaussianPosterior::full(vec({0.25}), Matrix::Constant(1, 1, 0.25));
  s.users[0] = GaussianPosterior::full(vec({0.75}), Matrix::Constant(1, 1, 0.25));
  Vector xi = update_xi(s, data);
  CHECK(xi[0] == doctest::Approx(std::sqrt(6.0)).epsilon(1e-14));
  CHECK(xi[1] == 0.0);
  s.brands[0] = point_mass(vec({0.25}), 0.0);
  s.users[0] = point_mass(vec({-1.75}), 0.0);
  xi = update_xi(s, data);
  CHECK(xi[0] == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("invert_spd") {
  Matrix a(2, 2);
  a << 4.0, 1.0, 1.0, 3.0;
  CHECK((invert_spd(a) * a).isApprox(Matrix::Identity(2, 2), 1e-14));
  // Singular: rescued by jitter.
  const Matrix rescued = invert_spd(Matrix::Zero(2, 2));
  CHECK(rescued.allFinite());
  CHECK(rescued(0, 0) > 1e5);
  Matrix negative = -Matrix::Identity(2, 2);
  CHECK_THROWS_AS(invert_spd(negative), NumericalError);
}

TEST_CASE("each Gaussian update is a local maximizer of the ELBO") {
  const GeneratedData g = synthetic(21, 6, 5, 2, 3, 300);
  const HyperParams hp = HyperParams::defaults(2, 3);
  FitOptions opts;
  HyperParams warm = hp;
  warm.max_iters = 3;
  VariationalState s = fit(g.dataset, warm, 2).state;
  std::mt19937_64 rng(77);

  auto check_perturbations = [&](VariationalState& state, Vector& mean) {
    const double base = elbo(state, g.dataset, hp);
    const Vector original = mean;
    for (int trial = 0; trial < 20; ++trial) {
      mean = original + 0.1 * unit_direction(rng, static_cast<int>(original.size()));
      const double perturbed = elbo(state, g.dataset, hp);
      REQUIRE(perturbed <= base + 1e-9 * std::abs(base));
    }
    mean = original;
  };

  for (int k = 0; k < 3; ++k) {
    s.users[k] = update_user(k, s, g.dataset);
    check_perturbations(s, s.users[k].mean());
  }
  for (int i = 0; i < 3; ++i) {
    s.brands[i] = update_brand(i, s, g.dataset);
    check_perturbations(s, s.brands[i].mean());
  }
  for (int j = 0; j < 2; ++j) {
    s.styles[j] = update_style(j, s);
    check_perturbations(s, s.styles[j].mean());
  }
  s.w = update_w(s);
  check_perturbations(s, s.w.mean());
}

TEST_CASE("fit: ELBO is monotone on synthetic data") {
  const HyperParams hp = HyperParams::defaults(3, 10);
  for (std::uint64_t seed : {1, 2, 3}) {
    const GeneratedData g = synthetic(seed);
    const VariationalState init = initialize_state(g.dataset, hp, seed);
    double previous = elbo(init, g.dataset, hp);
    const FitResult r = fit(g.dataset, hp, seed);
    REQUIRE(r.report.elbo_trace.size() == static_cast<std::size_t>(r.report.iterations_run));
    REQUIRE(r.report.iterations_run > 0);
    for (double value : r.report.elbo_trace) {
      REQUIRE(value >= previous - 1e-6 * std::abs(previous));
      previous = value;
    }
  }
}

TEST_CASE("covariances stay SPD after every sweep") {
  const GeneratedData g = synthetic(5, 8, 6, 3, 4, 400);
  const HyperParams hp = HyperParams::defaults(3, 4);
  VariationalState s = initialize_state(g.dataset, hp, 9);
  const EventIndex index = EventIndex::build(g.dataset);
  for (int sweep = 0; sweep < 25; ++sweep) {
    run_sweep(s, g.dataset, hp, index);
    REQUIRE_NOTHROW(s.validate_against(g.dataset));
    for (const auto& u : s.users) REQUIRE(is_spd(u));
    for (const auto& b : s.brands) REQUIRE(is_spd(b));
    for (const auto& st : s.styles) REQUIRE(is_spd(st));
    REQUIRE(is_spd(s.w));
    for (int i = 0; i < s.num_brands(); ++i) REQUIRE(std::abs(s.resp.row(i).sum() - 1.0) <= 1e-9);
  }
}

TEST_CASE("fit determinism and max_iters = 0") {
  const GeneratedData g = synthetic(7, 6, 5, 2, 4, 300);
  HyperParams hp = HyperParams::defaults(2, 4);
  const FitResult a = fit(g.dataset, hp, 42);
  const FitResult b = fit(g.dataset, hp, 42);
  CHECK(a.report.elbo_trace == b.report.elbo_trace);
  CHECK(a.state.users[0].mean() == b.state.users[0].mean());

  hp.max_iters = 0;
  const FitResult none = fit(g.dataset, hp, 42);
  const VariationalState init = initialize_state(g.dataset, hp, 42);
  CHECK(none.report.elbo_trace.empty());
  CHECK(none.report.iterations_run == 0);
  CHECK_FALSE(none.report.converged);
  CHECK(none.state.brands[2].mean() == init.brands[2].mean());
  CHECK(none.state.resp == init.resp);
  CHECK(none.state.xi == init.xi);
}

TEST_CASE("thread count does not change results") {
  const GeneratedData g = synthetic(8, 12, 9, 3, 5, 600);
  const HyperParams hp = HyperParams::defaults(3, 5);
  FitOptions serial, threaded;
  threaded.num_threads = 3;
  const FitResult a = fit(g.dataset, hp, 3, serial);
  const FitResult b = fit(g.dataset, hp, 3, threaded);
  CHECK(a.report.elbo_trace == b.report.elbo_trace);
  for (int i = 0; i < 9; ++i) CHECK(a.state.brands[i].mean() == b.state.brands[i].mean());
}

TEST_CASE("label switching leaves the ELBO trace unchanged") {
  const GeneratedData g = synthetic(11, 10, 8, 3, 4, 500);
  HyperParams hp = HyperParams::defaults(3, 4);
  hp.max_iters = 40;
  const VariationalState init = initialize_state(g.dataset, hp, 5);
  const int perm[3] = {2, 0, 1};
  VariationalState permuted = init;
  for (int j = 0; j < 3; ++j) {
    permuted.styles[perm[j]] = init.styles[j];
    permuted.resp.col(perm[j]) = init.resp.col(j);
    permuted.theta_gamma[perm[j]] = init.theta_gamma[j];
  }
  const FitResult a = fit_from(init, g.dataset, hp);
  const FitResult b = fit_from(permuted, g.dataset, hp);
  REQUIRE(a.report.elbo_trace.size() == b.report.elbo_trace.size());
  for (std::size_t t = 0; t < a.report.elbo_trace.size(); ++t) {
    CHECK(b.report.elbo_trace[t] ==
          doctest::Approx(a.report.elbo_trace[t]).epsilon(1e-6));
  }
  for (int j = 0; j < 3; ++j) {
    CHECK(b.state.styles[perm[j]].mean().isApprox(a.state.styles[j].mean(), 1e-6));
  }
}

TEST_CASE("restarts keep the best run") {
  const GeneratedData g = synthetic(13, 10, 12, 3, 4, 600);
  HyperParams hp = HyperParams::defaults(3, 4);
  CHECK(restart_seed(17, 0) == 17u);
  CHECK(restart_seed(17, 1) != restart_seed(17, 2));
  FitOptions many;
  many.restarts = 4;
  const FitResult single = fit(g.dataset, hp, 17);
  const FitResult best = fit(g.dataset, hp, 17, many);
  CHECK(best.report.elbo_trace.back() >= single.report.elbo_trace.back());
  for (int r = 0; r < 4; ++r) {
    const FitResult one = fit(g.dataset, hp, restart_seed(17, r));
    CHECK(best.report.elbo_trace.back() >= one.report.elbo_trace.back());
  }
  FitOptions bad;
  bad.restarts = 0;
  CHECK_THROWS_AS(fit(g.dataset, hp, 1, bad), InputError);
}

TEST_CASE("brand-seeded initialization") {
  const GeneratedData g = synthetic(14, 10, 12, 3, 4, 600);
  const HyperParams hp = HyperParams::defaults(3, 4);
  FitOptions opts;
  opts.init = InitStrategy::kBrandSeeded;
  const VariationalState a = starting_state(g.dataset, hp, 3, opts);
  const VariationalState b = starting_state(g.dataset, hp, 3, opts);
  REQUIRE_NOTHROW(a.validate_against(g.dataset));
  for (int j = 0; j < 3; ++j) {
    CHECK(a.styles[j].mean() == b.styles[j].mean());
    bool matches_brand = false;
    for (const auto& brand : a.brands) matches_brand |= (brand.mean() == a.styles[j].mean());
    CHECK(matches_brand);
  }
  const FitResult r = fit(g.dataset, hp, 3, opts);
  CHECK(r.report.iterations_run > 0);
}

TEST_CASE("fit errors") {
  Dataset empty = make_dataset(1, 1, 2);
  CHECK_THROWS_AS(fit(empty, HyperParams::defaults(1, 2), 1), InputError);

  Dataset huge = make_dataset(1, 1, 2);
  huge.events.push_back({vec({1e200, 1e200}), 0, 0, 1});
  huge.events.push_back({vec({-1e200, 1e200}), 0, 0, 0});
  try {
    fit(huge, HyperParams::defaults(1, 2), 1);
    FAIL("expected a numerical error");
  } catch (const NumericalError& err) {
    CHECK(std::string(err.what()).rfind("sweep 1:", 0) == 0);
  }
}
