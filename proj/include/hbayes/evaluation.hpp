#pragma once

// Ranking metrics for implicit feedback and the per-user stratified
// cross-validation harness.

#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hbayes/inference.hpp"
#include "hbayes/model.hpp"

namespace hbayes {

using ItemId = std::int64_t;

// |top-K ∩ relevant| / min(K, |ranked|); 0 for an empty ranked list.
double precision_at_k(std::span<const ItemId> ranked, const std::unordered_set<ItemId>& relevant,
                      int k);

// |top-K ∩ relevant| / |relevant|; 0 when nothing is relevant.
double recall_at_k(std::span<const ItemId> ranked, const std::unordered_set<ItemId>& relevant,
                   int k);

// Binary-gain NDCG. The ideal DCG sorts every judged relevance in
// `relevance` (items missing from it count as 0). Returns 0 if IDCG is 0.
double ndcg_at_k(std::span<const ItemId> ranked, const std::unordered_map<ItemId, int>& relevance,
                 int k);

double adjusted_rand_index(std::span<const int> labels_a, std::span<const int> labels_b);

struct MetricReport {
  int k = 0;
  double precision = 0.0;
  double recall = 0.0;
  double ndcg = 0.0;
  int num_users_evaluated = 0;
};

// Scores one held-out event; larger ranks first. Ties go to the smaller
// event index.
using EventScorer = std::function<double(const EventRecord&)>;
// Builds a scorer from a training split.
using ScorerFactory = std::function<EventScorer(const Dataset& train, int fold)>;

struct CrossValidationOptions {
  int folds = 5;
  std::uint64_t seed = 0;
  std::vector<int> ks{5, 10, 25, 50};
  FitOptions fit;
};

struct CrossValidationReport {
  int folds = 0;
  std::vector<int> ks;
  std::vector<std::vector<MetricReport>> per_fold;  // [fold][k index]
  std::vector<MetricReport> mean;
  std::vector<MetricReport> stddev;  // sample standard deviation over folds
};

// Fold of every event, or -1 for events of users with fewer than `folds`
// events. Each user's events are shuffled and dealt round-robin.
std::vector<int> stratified_folds(const Dataset& data, int folds, std::uint64_t seed);

// Ranks the held-out events of one user and computes every metric.
std::vector<MetricReport> evaluate_user(std::span<const ItemId> ranked,
                                        const std::unordered_set<ItemId>& relevant,
                                        std::span<const int> ks);

CrossValidationReport cross_validate_with(const Dataset& data, const CrossValidationOptions& options,
                                          const ScorerFactory& make_scorer);

// Fits the hierarchical model on every training split and scores by the
// predictive click probability.
ScorerFactory hbayes_scorer(const HyperParams& hp, std::uint64_t seed, const FitOptions& fit = {});

// Training click rate of the event's brand (add-one smoothed).
ScorerFactory popularity_scorer();

CrossValidationReport cross_validate(const Dataset& data, const HyperParams& hp,
                                     const CrossValidationOptions& options);

}  // namespace hbayes
