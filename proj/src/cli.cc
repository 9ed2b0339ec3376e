#include "hbayes/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>

#include "hbayes/evaluation.hpp"
#include "hbayes/generator.hpp"
#include "hbayes/inference.hpp"
#include "hbayes/io.hpp"
#include "hbayes/kernels.hpp"
#include "hbayes/predictor.hpp"

namespace hbayes {
namespace {

struct GenerateArgs {
  int users = 20;
  int brands = 15;
  int styles = 3;
  int events = 2000;
  int dim = 10;
  std::uint64_t seed = 0;
  double feature_scale = 1.0;
  TruePrecisions precisions;
  std::string out;
  std::string truth_out;
};

struct FitArgs {
  int styles = 3;
  int max_iters = 200;
  double tol = 1e-5;
  double alpha0 = 1e-2;
  double beta0 = 1e-2;
  int threads = 1;
  std::uint64_t seed = 0;
};

struct TrainArgs {
  std::string events;
  std::string checkpoint_out;
  std::string trace_out;
  FitArgs fit;
};

struct RankArgs {
  std::string checkpoint;
  std::string events;
  std::string user;
  int k = 10;
  std::string out;
};

struct EvalArgs {
  std::string events;
  int folds = 5;
  std::vector<int> ks{5, 10, 25, 50};
  std::string report_out;
  FitArgs fit;
};

void add_fit_flags(CLI::App* cmd, FitArgs& a) {
  cmd->add_option("--styles", a.styles, "Number of latent styles")->check(CLI::PositiveNumber);
  cmd->add_option("--max-iters", a.max_iters, "Maximum CAVI sweeps")->check(CLI::NonNegativeNumber);
  cmd->add_option("--tol", a.tol, "Relative ELBO change for convergence")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--alpha0", a.alpha0, "Gamma prior shape")->check(CLI::PositiveNumber);
  cmd->add_option("--beta0", a.beta0, "Gamma prior rate")->check(CLI::PositiveNumber);
  cmd->add_option("--threads", a.threads, "Worker threads for the per-factor updates")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed", a.seed, "Random seed");
}

HyperParams hyperparams_for(const FitArgs& a, int feature_dim) {
  HyperParams hp = HyperParams::defaults(a.styles, feature_dim);
  hp.alpha0 = a.alpha0;
  hp.beta0 = a.beta0;
  hp.max_iters = a.max_iters;
  hp.rel_tol = a.tol;
  return hp;
}

int run_generate(const GenerateArgs& a, std::ostream& out) {
  HyperParams hp = HyperParams::defaults(a.styles, a.dim);
  const GeneratedData gen =
      sample_dataset(hp, a.users, a.brands, a.events, a.precisions, a.feature_scale, a.seed);
  save_events(a.out, gen.dataset);
  if (!a.truth_out.empty()) save_ground_truth(a.truth_out, gen.truth);
  out << "wrote " << gen.dataset.size() << " events to " << a.out << '\n';
  return kExitOk;
}

int run_train(const TrainArgs& a, std::ostream& out) {
  const LoadedEvents loaded = load_events(a.events);
  const HyperParams hp = hyperparams_for(a.fit, loaded.dataset.feature_dim);
  FitOptions options;
  options.num_threads = a.fit.threads;
  FitResult result = fit(loaded.dataset, hp, a.fit.seed, options);

  Checkpoint cp;
  cp.hyperparams = hp;
  cp.state = std::move(result.state);
  cp.num_users = loaded.dataset.num_users;
  cp.num_brands = loaded.dataset.num_brands;
  cp.num_styles = hp.num_styles;
  cp.feature_dim = hp.feature_dim;
  cp.user_ids = loaded.user_ids;
  cp.brand_ids = loaded.brand_ids;
  cp.report = result.report;
  save_checkpoint(a.checkpoint_out, cp);
  if (!a.trace_out.empty()) save_trace_csv(a.trace_out, cp.report);
  out << "sweeps " << cp.report.iterations_run << (cp.report.converged ? " (converged)" : "")
      << ", final elbo "
      << (cp.report.elbo_trace.empty() ? 0.0 : cp.report.elbo_trace.back()) << '\n';
  return kExitOk;
}

int run_rank(const RankArgs& a, std::ostream& out) {
  const Checkpoint cp = load_checkpoint(a.checkpoint);
  const LoadedEvents loaded = load_events(a.events);
  if (loaded.dataset.feature_dim != cp.feature_dim) {
    throw InputError("candidate feature dimension does not match the checkpoint");
  }
  auto index_of = [](const std::vector<std::string>& ids, const std::string& id) {
    const auto it = std::find(ids.begin(), ids.end(), id);
    return it == ids.end() ? -1 : static_cast<int>(it - ids.begin());
  };
  const int user = index_of(cp.user_ids, a.user);

  std::vector<Candidate> candidates;
  candidates.reserve(loaded.dataset.size());
  for (std::size_t t = 0; t < loaded.dataset.size(); ++t) {
    const EventRecord& e = loaded.dataset.events[t];
    candidates.push_back({static_cast<ItemId>(t), e.x,
                          index_of(cp.brand_ids, loaded.brand_ids[e.brand])});
  }
  const std::vector<RankedItem> ranked = rank_top_k(user, candidates, cp.state, a.k);

  nlohmann::json doc;
  doc["user"] = a.user;
  doc["cold_start_user"] = user < 0;
  doc["k"] = a.k;
  nlohmann::json items = nlohmann::json::array();
  for (const RankedItem& r : ranked) items.push_back({{"item", r.item_id}, {"prob", r.prob}});
  doc["items"] = items;
  const std::string text = doc.dump(2) + "\n";
  if (a.out == "-") {
    out << text;
  } else {
    std::ofstream file(a.out, std::ios::binary | std::ios::trunc);
    if (!file) throw InputError("cannot open " + a.out + " for writing");
    file << text;
  }
  return kExitOk;
}

int run_eval(const EvalArgs& a, std::ostream& out) {
  const LoadedEvents loaded = load_events(a.events);
  const HyperParams hp = hyperparams_for(a.fit, loaded.dataset.feature_dim);
  CrossValidationOptions options;
  options.folds = a.folds;
  options.seed = a.fit.seed;
  options.ks = a.ks;
  options.fit.num_threads = a.fit.threads;
  const CrossValidationReport report = cross_validate(loaded.dataset, hp, options);
  save_metrics_report(a.report_out, report);
  for (const MetricReport& m : report.mean) {
    out << "K=" << m.k << " precision=" << m.precision << " recall=" << m.recall
        << " ndcg=" << m.ndcg << '\n';
  }
  return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical Bayesian click model: generate, train, rank, evaluate"};
  app.require_subcommand(1);
  std::string isa;
  app.add_option("--isa", isa, "Force the kernel variant")
      ->check(CLI::IsMember({"scalar", "avx2"}));

  GenerateArgs gen;
  CLI::App* generate = app.add_subcommand("generate", "Sample a synthetic event dataset");
  generate->add_option("--users", gen.users)->check(CLI::PositiveNumber);
  generate->add_option("--brands", gen.brands)->check(CLI::PositiveNumber);
  generate->add_option("--styles", gen.styles)->check(CLI::PositiveNumber);
  generate->add_option("--events", gen.events)->check(CLI::PositiveNumber);
  generate->add_option("--dim", gen.dim)->check(CLI::PositiveNumber);
  generate->add_option("--seed", gen.seed);
  generate->add_option("--feature-scale", gen.feature_scale)->check(CLI::NonNegativeNumber);
  generate->add_option("--prec-user", gen.precisions.user)->check(CLI::PositiveNumber);
  generate->add_option("--prec-brand", gen.precisions.brand)->check(CLI::PositiveNumber);
  generate->add_option("--prec-style", gen.precisions.style)->check(CLI::PositiveNumber);
  generate->add_option("--prec-w", gen.precisions.w)->check(CLI::PositiveNumber);
  generate->add_option("--out", gen.out, "Event JSON-Lines output")->required();
  generate->add_option("--truth-out", gen.truth_out, "Ground-truth JSON output");

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "Fit the model and write a checkpoint");
  train_cmd->add_option("--events", train.events)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--checkpoint-out", train.checkpoint_out)->required();
  train_cmd->add_option("--trace-out", train.trace_out, "ELBO trace CSV");
  add_fit_flags(train_cmd, train.fit);

  RankArgs rank;
  CLI::App* rank_cmd = app.add_subcommand("rank", "Top-K candidates for one user");
  rank_cmd->add_option("--checkpoint", rank.checkpoint)->required()->check(CLI::ExistingFile);
  rank_cmd->add_option("--events", rank.events, "Candidate items as event JSON Lines")
      ->required()
      ->check(CLI::ExistingFile);
  rank_cmd->add_option("--user", rank.user)->required();
  rank_cmd->add_option("--k", rank.k)->check(CLI::PositiveNumber);
  rank_cmd->add_option("--out", rank.out, "Output JSON path, '-' for stdout")->required();

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Stratified K-fold ranking evaluation");
  eval_cmd->add_option("--events", eval.events)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--folds", eval.folds)->check(CLI::Range(2, 1000));
  eval_cmd->add_option("--k", eval.ks, "Cutoffs, comma separated")
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--report-out", eval.report_out)->required();
  add_fit_flags(eval_cmd, eval.fit);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsageError;
  }

  try {
    if (!isa.empty()) kernels::set_isa(isa == "avx2" ? kernels::Isa::kAvx2 : kernels::Isa::kScalar);
    if (generate->parsed()) return run_generate(gen, out);
    if (train_cmd->parsed()) return run_train(train, out);
    if (rank_cmd->parsed()) return run_rank(rank, out);
    if (eval_cmd->parsed()) return run_eval(eval, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntimeError;
  }
  return kExitUsageError;
}

}  // namespace hbayes
