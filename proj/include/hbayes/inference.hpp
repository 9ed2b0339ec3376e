#pragma once

// Coordinate-ascent variational inference for the hierarchical model.
//
// One sweep updates, in order: responsibilities, q(theta), every q(U_k),
// every q(B_i), every q(S_j), q(w), the four precision Gammas, and the
// per-event bound parameters xi. Each step maximizes the ELBO in its own
// factor with the others fixed, so the ELBO never decreases across a sweep.

#include <cstdint>
#include <span>
#include <vector>

#include "hbayes/model.hpp"

namespace hbayes {

struct FitReport {
  std::vector<double> elbo_trace;
  int iterations_run = 0;
  bool converged = false;
};

enum class InitStrategy {
  // Small random means around the origin (see initialize_state).
  kRandom,
  // kRandom, then `warmup_sweeps` sweeps so brand means reflect the data,
  // then style means re-seeded at brand means picked by D^2 sampling.
  kBrandSeeded,
};

struct FitOptions {
  // User, brand, style and xi updates are independent within their family
  // and may be spread over threads. Results do not depend on this value.
  int num_threads = 1;
  // Independent initializations; the run with the highest final ELBO wins.
  // Restart 0 uses the caller's seed, so restarts = 1 is a plain fit.
  int restarts = 1;
  InitStrategy init = InitStrategy::kRandom;
  int warmup_sweeps = 5;
};

struct FitResult {
  VariationalState state;
  FitReport report;
};

// Events grouped by user and by brand, in dataset order.
struct EventIndex {
  std::vector<std::vector<int>> by_user;
  std::vector<std::vector<int>> by_brand;

  static EventIndex build(const Dataset& data);
};

VariationalState initialize_state(const Dataset& data, const HyperParams& hp, std::uint64_t seed);

Matrix update_responsibilities(const VariationalState& state, const Dataset& data,
                               const HyperParams& hp);

// gamma0 + column sums of the responsibilities.
Vector update_theta(const Matrix& resp, const HyperParams& hp);

GaussianPosterior update_user(int k, const VariationalState& state, const Dataset& data);
GaussianPosterior update_user(int k, const VariationalState& state, const Dataset& data,
                              std::span<const int> user_events, std::span<const double> lambdas);

GaussianPosterior update_brand(int i, const VariationalState& state, const Dataset& data);
GaussianPosterior update_brand(int i, const VariationalState& state, const Dataset& data,
                               std::span<const int> brand_events, std::span<const double> lambdas);

GaussianPosterior update_style(int j, const VariationalState& state);
GaussianPosterior update_w(const VariationalState& state);

struct PrecisionPosteriors {
  GammaPosterior user, brand, style, w;
};

PrecisionPosteriors update_precisions(const VariationalState& state, const Dataset& data,
                                      const HyperParams& hp);

Vector update_xi(const VariationalState& state, const Dataset& data);

// Inverts an SPD precision matrix, adding diagonal jitter 1e-10 .. 1e-6 if
// the factorization fails. Throws NumericalError past that.
Matrix invert_spd(const Matrix& precision);

// One full sweep in place.
void run_sweep(VariationalState& state, const Dataset& data, const HyperParams& hp,
               const EventIndex& index, const FitOptions& options = {});

FitResult fit(const Dataset& data, const HyperParams& hp, std::uint64_t seed,
              const FitOptions& options = {});

// Starting state for `fit` under options.init.
VariationalState starting_state(const Dataset& data, const HyperParams& hp, std::uint64_t seed,
                                const FitOptions& options = {});

// Seed of restart r (restart 0 keeps `seed`).
std::uint64_t restart_seed(std::uint64_t seed, int restart);

// Same loop starting from a caller-supplied state.
FitResult fit_from(VariationalState initial, const Dataset& data, const HyperParams& hp,
                   const FitOptions& options = {});

}  // namespace hbayes
