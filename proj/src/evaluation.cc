#include "hbayes/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <string>

#include "detail.hpp"
#include "hbayes/predictor.hpp"

namespace hbayes {

namespace {

std::size_t hits_in_top_k(std::span<const ItemId> ranked,
                          const std::unordered_set<ItemId>& relevant, int k) {
  const auto cutoff = std::min<std::size_t>(static_cast<std::size_t>(k), ranked.size());
  std::size_t hits = 0;
  for (std::size_t r = 0; r < cutoff; ++r) hits += relevant.count(ranked[r]);
  return hits;
}

void require_k(int k) {
  if (k < 1) throw InputError("metric cutoff k must be >= 1");
}

double choose2(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace

double precision_at_k(std::span<const ItemId> ranked, const std::unordered_set<ItemId>& relevant,
                      int k) {
  require_k(k);
  if (ranked.empty()) return 0.0;
  const auto denom = std::min<std::size_t>(static_cast<std::size_t>(k), ranked.size());
  return static_cast<double>(hits_in_top_k(ranked, relevant, k)) / static_cast<double>(denom);
}

double recall_at_k(std::span<const ItemId> ranked, const std::unordered_set<ItemId>& relevant,
                   int k) {
  require_k(k);
  if (relevant.empty()) return 0.0;
  return static_cast<double>(hits_in_top_k(ranked, relevant, k)) /
         static_cast<double>(relevant.size());
}

double ndcg_at_k(std::span<const ItemId> ranked, const std::unordered_map<ItemId, int>& relevance,
                 int k) {
  require_k(k);
  auto gain_of = [&](ItemId id) {
    const auto it = relevance.find(id);
    return it == relevance.end() ? 0 : (it->second > 0 ? 1 : 0);
  };
  double dcg = 0.0;
  const auto cutoff = std::min<std::size_t>(static_cast<std::size_t>(k), ranked.size());
  for (std::size_t r = 0; r < cutoff; ++r) {
    dcg += gain_of(ranked[r]) / std::log2(static_cast<double>(r) + 2.0);
  }
  std::size_t num_relevant = 0;
  for (const auto& [id, rel] : relevance) num_relevant += rel > 0 ? 1 : 0;
  double idcg = 0.0;
  const auto ideal = std::min<std::size_t>(static_cast<std::size_t>(k), num_relevant);
  for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return idcg > 0.0 ? dcg / idcg : 0.0;
}

double adjusted_rand_index(std::span<const int> labels_a, std::span<const int> labels_b) {
  if (labels_a.size() != labels_b.size()) throw InputError("adjusted_rand_index: size mismatch");
  const auto n = static_cast<double>(labels_a.size());
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> count_a, count_b;
  for (std::size_t i = 0; i < labels_a.size(); ++i) {
    joint[{labels_a[i], labels_b[i]}] += 1.0;
    count_a[labels_a[i]] += 1.0;
    count_b[labels_b[i]] += 1.0;
  }
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [key, c] : joint) index += choose2(c);
  for (const auto& [key, c] : count_a) sum_a += choose2(c);
  for (const auto& [key, c] : count_b) sum_b += choose2(c);
  const double expected = sum_a * sum_b / choose2(n);
  const double max_index = 0.5 * (sum_a + sum_b);
  // Both partitions trivial (all singletons or one block): identical means 1.
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

std::vector<int> stratified_folds(const Dataset& data, int folds, std::uint64_t seed) {
  if (folds < 2) throw InputError("cross-validation needs at least 2 folds");
  std::vector<std::vector<int>> by_user(data.num_users);
  for (std::size_t t = 0; t < data.size(); ++t) {
    by_user[data.events[t].user].push_back(static_cast<int>(t));
  }
  std::vector<int> fold_of(data.size(), -1);
  std::mt19937_64 rng(seed);
  int eligible = 0;
  for (auto& ids : by_user) {
    if (static_cast<int>(ids.size()) < folds) continue;
    ++eligible;
    std::shuffle(ids.begin(), ids.end(), rng);
    for (std::size_t r = 0; r < ids.size(); ++r) fold_of[ids[r]] = static_cast<int>(r) % folds;
  }
  if (eligible == 0) {
    throw InputError("dataset too small for stratification: no user has " +
                     std::to_string(folds) + " events");
  }
  return fold_of;
}

std::vector<MetricReport> evaluate_user(std::span<const ItemId> ranked,
                                        const std::unordered_set<ItemId>& relevant,
                                        std::span<const int> ks) {
  std::unordered_map<ItemId, int> relevance;
  for (ItemId id : ranked) relevance[id] = relevant.count(id) ? 1 : 0;
  std::vector<MetricReport> out;
  out.reserve(ks.size());
  for (int k : ks) {
    out.push_back({k, precision_at_k(ranked, relevant, k), recall_at_k(ranked, relevant, k),
                   ndcg_at_k(ranked, relevance, k), 1});
  }
  return out;
}

CrossValidationReport cross_validate_with(const Dataset& data, const CrossValidationOptions& options,
                                          const ScorerFactory& make_scorer) {
  data.validate();
  if (options.ks.empty()) throw InputError("cross_validate: no cutoffs given");
  for (int k : options.ks) require_k(k);
  const std::vector<int> fold_of = stratified_folds(data, options.folds, options.seed);

  CrossValidationReport report;
  report.folds = options.folds;
  report.ks = options.ks;
  const std::size_t num_k = options.ks.size();

  for (int fold = 0; fold < options.folds; ++fold) {
    Dataset train;
    train.num_users = data.num_users;
    train.num_brands = data.num_brands;
    train.feature_dim = data.feature_dim;
    std::vector<std::vector<int>> held_out(data.num_users);
    for (std::size_t t = 0; t < data.size(); ++t) {
      if (fold_of[t] < 0) continue;
      if (fold_of[t] == fold) {
        held_out[data.events[t].user].push_back(static_cast<int>(t));
      } else {
        train.events.push_back(data.events[t]);
      }
    }
    const EventScorer scorer = make_scorer(train, fold);

    std::vector<MetricReport> totals(num_k);
    for (std::size_t q = 0; q < num_k; ++q) totals[q].k = options.ks[q];
    for (const auto& ids : held_out) {
      std::unordered_set<ItemId> relevant;
      std::vector<std::pair<double, ItemId>> scored;
      for (int t : ids) {
        if (data.events[t].y == 1) relevant.insert(t);
        scored.emplace_back(scorer(data.events[t]), t);
      }
      if (relevant.empty()) continue;
      std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      std::vector<ItemId> ranked;
      ranked.reserve(scored.size());
      for (const auto& entry : scored) ranked.push_back(entry.second);
      const auto user_reports = evaluate_user(ranked, relevant, options.ks);
      for (std::size_t q = 0; q < num_k; ++q) {
        totals[q].precision += user_reports[q].precision;
        totals[q].recall += user_reports[q].recall;
        totals[q].ndcg += user_reports[q].ndcg;
        totals[q].num_users_evaluated += 1;
      }
    }
    for (MetricReport& m : totals) {
      if (m.num_users_evaluated > 0) {
        m.precision /= m.num_users_evaluated;
        m.recall /= m.num_users_evaluated;
        m.ndcg /= m.num_users_evaluated;
      }
    }
    report.per_fold.push_back(std::move(totals));
  }

  report.mean.resize(num_k);
  report.stddev.resize(num_k);
  const double n = options.folds;
  for (std::size_t q = 0; q < num_k; ++q) {
    MetricReport& mean = report.mean[q];
    MetricReport& sd = report.stddev[q];
    mean.k = sd.k = options.ks[q];
    for (const auto& fold : report.per_fold) {
      mean.precision += fold[q].precision / n;
      mean.recall += fold[q].recall / n;
      mean.ndcg += fold[q].ndcg / n;
      mean.num_users_evaluated += fold[q].num_users_evaluated;
    }
    for (const auto& fold : report.per_fold) {
      sd.precision += std::pow(fold[q].precision - mean.precision, 2) / (n - 1.0);
      sd.recall += std::pow(fold[q].recall - mean.recall, 2) / (n - 1.0);
      sd.ndcg += std::pow(fold[q].ndcg - mean.ndcg, 2) / (n - 1.0);
    }
    sd.precision = std::sqrt(sd.precision);
    sd.recall = std::sqrt(sd.recall);
    sd.ndcg = std::sqrt(sd.ndcg);
    sd.num_users_evaluated = mean.num_users_evaluated;
  }
  return report;
}

ScorerFactory hbayes_scorer(const HyperParams& hp, std::uint64_t seed, const FitOptions& fit_opts) {
  return [hp, seed, fit_opts](const Dataset& train, int fold) -> EventScorer {
    auto state = std::make_shared<VariationalState>(
        fit(train, hp, seed + 1 + static_cast<std::uint64_t>(fold), fit_opts).state);
    return [state](const EventRecord& e) {
      return score(detail::view(e.x), state->brands[e.brand], state->users[e.user]).prob;
    };
  };
}

ScorerFactory popularity_scorer() {
  return [](const Dataset& train, int) -> EventScorer {
    auto rates = std::make_shared<std::vector<double>>(train.num_brands, 0.5);
    std::vector<double> clicks(train.num_brands, 0.0), shows(train.num_brands, 0.0);
    for (const EventRecord& e : train.events) {
      clicks[e.brand] += e.y;
      shows[e.brand] += 1.0;
    }
    for (int i = 0; i < train.num_brands; ++i) (*rates)[i] = (clicks[i] + 1.0) / (shows[i] + 2.0);
    return [rates](const EventRecord& e) { return (*rates)[e.brand]; };
  };
}

CrossValidationReport cross_validate(const Dataset& data, const HyperParams& hp,
                                     const CrossValidationOptions& options) {
  return cross_validate_with(data, options, hbayes_scorer(hp, options.seed, options.fit));
}

}  // namespace hbayes
