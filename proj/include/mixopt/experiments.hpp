#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mixopt/coerm.hpp"
#include "mixopt/core.hpp"
#include "mixopt/domains.hpp"
#include "mixopt/minimax.hpp"
#include "mixopt/rng.hpp"
#include "mixopt/wstar_net.hpp"

namespace mixopt {

// ---------------------------------------------------------------------------
// Grouped-domain experiment
// ---------------------------------------------------------------------------

/// Which domain plays the target in one grouped run.
struct TargetSpec {
  enum class Kind { Group, Mix, CopyOfSource };
  Kind kind = Kind::Group;
  /// Group index (Group), or source index (CopyOfSource).
  int index = 0;

  static TargetSpec group(int g) { return {Kind::Group, g}; }
  static TargetSpec mix() { return {Kind::Mix, 0}; }
  static TargetSpec copy_of(int source) { return {Kind::CopyOfSource, source}; }

  std::string label() const {
    switch (kind) {
      case Kind::Group: return "group_" + std::to_string(index);
      case Kind::Mix: return "mix_0_1";
      case Kind::CopyOfSource: return "copy_of_source_" + std::to_string(index);
    }
    return "?";
  }
};

struct GroupedConfig {
  int groups = 3;
  int domains_per_group = 5;
  int samples_per_domain = 100;
  int target_samples = 100;
  double train_fraction = 0.8;
  double lambda = 0.1;
  GroupedDataOptions data{};

  // Mixture estimation.
  std::size_t minimax_iterations = 2000;
  std::size_t batch_size = 16;
  double beta = 0.5;
  double eta = 0.05;
  double gamma = 0.05;
  double C = 1.0;
  double smoothing = 1e-4;
  double radius = kDefaultRadius;

  // Weighted ERM by GD.
  std::size_t erm_steps = 300;

  void validate() const {
    require(groups >= 1 && domains_per_group >= 1, ErrorKind::Config, "groups and domains_per_group must be positive");
    require(samples_per_domain >= 2 && target_samples >= 2, ErrorKind::Config, "need at least two samples per domain");
    require(train_fraction > 0.0 && train_fraction < 1.0, ErrorKind::Config, "train_fraction must lie in (0, 1)");
    require(lambda > 0.0, ErrorKind::Config, "lambda must be positive");
    require(minimax_iterations >= 1 && batch_size >= 1 && erm_steps >= 1, ErrorKind::Config,
            "iteration counts must be positive");
    require(smoothing > 0.0, ErrorKind::Config, "smoothing must be positive");
  }
};

struct GroupedRun {
  std::uint64_t seed = 0;
  std::string target;
  MixtureWeights alpha = MixtureWeights::uniform(1);
  /// Learned mass per group.
  std::vector<double> group_mass;
  double acc_learned = 0.0;
  double acc_uniform = 0.0;
  double acc_target_only = 0.0;
};

namespace detail {

struct Split {
  Dataset train;
  Dataset test;
};

inline Split split_rows(const Dataset& ds, double train_fraction) {
  const std::size_t n = ds.sample_count();
  const auto n_train = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n))), 1, n - 1);
  std::vector<std::size_t> head(n_train), tail(n - n_train);
  std::iota(head.begin(), head.end(), std::size_t{0});
  std::iota(tail.begin(), tail.end(), n_train);
  return {ds.subset(head), ds.subset(tail)};
}

inline Dataset concat(const Dataset& a, const Dataset& b) {
  Matrix x(a.features().rows() + b.features().rows(), a.features().cols());
  x << a.features(), b.features();
  Vector y(a.labels().size() + b.labels().size());
  y << a.labels(), b.labels();
  return Dataset(std::move(x), std::move(y));
}

inline double accuracy(const LossModel& model, const Eigen::Ref<const Vector>& w, const Dataset& test) {
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < test.features().rows(); ++i)
    if (model.predict(w, test.features().row(i).transpose()) == static_cast<int>(test.labels()(i))) ++hits;
  return static_cast<double>(hits) / static_cast<double>(test.sample_count());
}

}  // namespace detail

/// One seed of the grouped experiment: estimate alpha with the minimax
/// solver, then compare learned-alpha, uniform-alpha and target-only ERM on
/// the held-out part of the target.
inline GroupedRun run_grouped_once(const GroupedConfig& cfg, const TargetSpec& target_spec, std::uint64_t seed) {
  cfg.validate();
  const auto suite = make_grouped_classification(cfg.groups, cfg.domains_per_group, cfg.samples_per_domain, seed, cfg.data);
  const int n_sources = static_cast<int>(suite.domains.size());

  RngStream rng(seed, streams::kTarget);
  Dataset target_raw = [&] {
    switch (target_spec.kind) {
      case TargetSpec::Kind::Group:
        return suite.sample_domain(target_spec.index, static_cast<std::size_t>(cfg.target_samples), rng);
      case TargetSpec::Kind::Mix: {
        require(cfg.groups >= 2, ErrorKind::Config, "a mixed target needs at least two groups");
        const auto half = static_cast<std::size_t>(cfg.target_samples / 2);
        Dataset a = suite.sample_domain(0, half, rng);
        Dataset b = suite.sample_domain(1, static_cast<std::size_t>(cfg.target_samples) - half, rng);
        // Interleave so both halves of the split see both groups.
        Dataset joined = detail::concat(a, b);
        std::vector<std::size_t> order(joined.sample_count());
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng.uniform_index(k)]);
        return joined.subset(order);
      }
      case TargetSpec::Kind::CopyOfSource:
        require(target_spec.index >= 0 && target_spec.index < n_sources, ErrorKind::Config,
                "copied source index out of range");
        return suite.domains[static_cast<std::size_t>(target_spec.index)];
    }
    throw Error(ErrorKind::Internal, "unknown target kind");
  }();

  std::vector<detail::Split> source_splits;
  for (const auto& ds : suite.domains) source_splits.push_back(detail::split_rows(ds, cfg.train_fraction));
  const auto target_split = detail::split_rows(target_raw, cfg.train_fraction);

  std::vector<Dataset> pooled;
  for (const auto& s : source_splits) pooled.push_back(s.train);
  pooled.push_back(target_split.train);
  const auto scaler = Standardizer::fit(pooled);

  const int classes = suite.num_classes;
  std::vector<LossModel> sources;
  for (const auto& s : source_splits) sources.push_back(LossModel::softmax(scaler.apply(s.train), classes, cfg.lambda));
  const LossModel target = LossModel::softmax(scaler.apply(target_split.train), classes, cfg.lambda);
  const Dataset target_test = scaler.apply(target_split.test);

  MinimaxInstance instance{sources, target, cfg.radius};
  MinimaxConfig mm;
  mm.batch_size = cfg.batch_size;
  mm.beta = cfg.beta;
  mm.eta = cfg.eta;
  mm.gamma = cfg.gamma;
  mm.C = cfg.C;
  mm.iterations = cfg.minimax_iterations;
  mm.smoothing = SmoothAbs(cfg.smoothing);
  mm.seed = seed;
  mm.record_every = cfg.minimax_iterations;
  // w = 0 gives every softmax risk the value log(classes), a saddle where
  // both gradients vanish; start the ascent player at the target-only ERM.
  const GdConfig gd = GdConfig::for_suite(sources, cfg.erm_steps, cfg.radius);
  const ModelParams origin = ModelParams::zero(target.dim(), cfg.radius);
  const std::vector<LossModel> target_only{target};
  const auto solo = gd_solve(origin, MixtureWeights::uniform(1), target_only,
                             GdConfig::for_suite(target_only, cfg.erm_steps, cfg.radius));
  const auto estimate = run(instance, mm, init_state(instance, std::nullopt, solo.params));

  GroupedRun out;
  out.seed = seed;
  out.target = target_spec.label();
  out.alpha = estimate.final_state.alpha;
  out.group_mass.assign(static_cast<std::size_t>(cfg.groups), 0.0);
  for (int j = 0; j < n_sources; ++j)
    out.group_mass[static_cast<std::size_t>(suite.group_of[static_cast<std::size_t>(j)])] += out.alpha[j];

  const auto learned = gd_solve(origin, out.alpha, sources, gd);
  const auto uniform = gd_solve(origin, MixtureWeights::uniform(n_sources), sources, gd);

  out.acc_learned = detail::accuracy(target, learned.params.values(), target_test);
  out.acc_uniform = detail::accuracy(target, uniform.params.values(), target_test);
  out.acc_target_only = detail::accuracy(target, solo.params.values(), target_test);
  return out;
}

struct GroupedSummary {
  std::string target;
  double acc_learned = 0.0;
  double acc_uniform = 0.0;
  double acc_target_only = 0.0;
  std::vector<double> group_mass;
  std::size_t seeds = 0;
};

/// Seed-averaged accuracies, one row per target in first-seen order.
inline std::vector<GroupedSummary> summarize(const std::vector<GroupedRun>& runs) {
  std::vector<GroupedSummary> out;
  for (const auto& r : runs) {
    auto it = std::find_if(out.begin(), out.end(), [&](const GroupedSummary& s) { return s.target == r.target; });
    if (it == out.end()) {
      out.push_back({r.target, 0.0, 0.0, 0.0, std::vector<double>(r.group_mass.size(), 0.0), 0});
      it = std::prev(out.end());
    }
    it->acc_learned += r.acc_learned;
    it->acc_uniform += r.acc_uniform;
    it->acc_target_only += r.acc_target_only;
    for (std::size_t g = 0; g < r.group_mass.size(); ++g) it->group_mass[g] += r.group_mass[g];
    ++it->seeds;
  }
  for (auto& s : out) {
    const auto k = static_cast<double>(s.seeds);
    s.acc_learned /= k;
    s.acc_uniform /= k;
    s.acc_target_only /= k;
    for (auto& g : s.group_mass) g /= k;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Learning-vs-solving cost bench
// ---------------------------------------------------------------------------

struct PhaseConfig {
  std::size_t sources = 3;
  Eigen::Index dim = 2;
  double mu = 0.2;
  double L = 1.0;
  /// Training mixtures for the predictor.
  std::size_t n = 50;
  std::size_t outer_steps = 200;
  std::size_t label_steps = 1;
  Eigen::Index width = 64;
  double net_eta = 0.5;
  /// GD steps used per direct solve.
  std::size_t solve_steps = 100;
  std::vector<std::size_t> targets{1, 10, 100, 1000, 10000};
  double radius = kDefaultRadius;

  void validate() const {
    require(sources >= 1 && dim >= 1 && n >= 1 && outer_steps >= 1 && solve_steps >= 1, ErrorKind::Config,
            "phase counts must be positive");
    require(!targets.empty(), ErrorKind::Config, "phase target grid must be non-empty");
    for (auto m : targets) require(m >= 1, ErrorKind::Config, "phase target counts must be positive");
  }
};

struct PhaseRow {
  std::size_t M;
  /// Gradient evaluations of solving all M problems directly.
  std::size_t solve_cost;
  /// Training cost plus one forward pass per target.
  std::size_t learn_cost;
  /// Mean |h(alpha) - w_solve(alpha)|^2 over the M targets.
  double prediction_gap;
};

struct PhaseReport {
  std::vector<PhaseRow> rows;
  std::size_t train_cost = 0;
  std::size_t label_cost = 0;
  std::size_t net_passes = 0;
  std::size_t per_solve_cost = 0;
  /// Smallest M with learn_cost <= solve_cost under the measured linear models.
  std::size_t crossover = 0;
  /// n c / (c - 1) with c the per-solve cost; the accounting that ignores
  /// network training and counts only the n label solves.
  double formula_crossover = 0.0;
};

/// Cost accounting treats one network forward or backward pass as one unit,
/// the same as one source-gradient evaluation.
inline PhaseReport run_phase(const PhaseConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  QuadraticSuiteOptions qo;
  qo.radius = cfg.radius;
  const auto suite = make_quadratic_suite(cfg.sources, cfg.dim, cfg.mu, cfg.L, seed, qo);
  const auto train_alphas = sample_mixtures(cfg.n, static_cast<Eigen::Index>(cfg.sources), seed, streams::kTrainAlphas);

  NetTrainConfig nc;
  nc.width = cfg.width;
  nc.eta = cfg.net_eta;
  nc.outer_steps = cfg.outer_steps;
  nc.label_steps = cfg.label_steps;
  nc.seed = seed;
  nc.radius = cfg.radius;
  const auto trained = train(train_alphas, suite, nc);

  PhaseReport report;
  report.label_cost = trained.label_grad_evals;
  report.net_passes = trained.net_passes;
  report.train_cost = report.label_cost + report.net_passes;
  report.per_solve_cost = cfg.solve_steps * cfg.sources;

  const GdConfig gd = GdConfig::for_suite(suite, cfg.solve_steps, cfg.radius);
  for (std::size_t M : cfg.targets) {
    const auto targets = sample_mixtures(M, static_cast<Eigen::Index>(cfg.sources), seed, streams::kTestAlphas);
    const auto solved = solve_batch(targets, suite, gd);
    double gap = 0.0;
    for (std::size_t i = 0; i < M; ++i) gap += (trained.net.forward(targets[i].values()) - solved.params[i].values()).squaredNorm();
    report.rows.push_back({M, solved.grad_evals, report.train_cost + M, gap / static_cast<double>(M)});
  }

  const double c = static_cast<double>(report.per_solve_cost);
  if (report.per_solve_cost > 1) {
    report.crossover = report.train_cost / (report.per_solve_cost - 1);
    while (report.train_cost + report.crossover > report.crossover * report.per_solve_cost) ++report.crossover;
    report.formula_crossover = static_cast<double>(cfg.n) * c / (c - 1.0);
  }
  return report;
}

}  // namespace mixopt
