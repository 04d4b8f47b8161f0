#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mixopt/experiments.hpp"

using namespace mixopt;

TEST(TargetSpec, Labels) {
  EXPECT_EQ(TargetSpec::group(1).label(), "group_1");
  EXPECT_EQ(TargetSpec::mix().label(), "mix_0_1");
  EXPECT_EQ(TargetSpec::copy_of(4).label(), "copy_of_source_4");
}

TEST(GroupedHelpers, SplitAndAccuracy) {
  Matrix x(10, 1);
  Vector y(10);
  for (int i = 0; i < 10; ++i) {
    x(i, 0) = i;
    y(i) = i % 2;
  }
  const Dataset ds(x, y);
  const auto split = detail::split_rows(ds, 0.8);
  EXPECT_EQ(split.train.sample_count(), 8u);
  EXPECT_EQ(split.test.sample_count(), 2u);
  EXPECT_EQ(split.test.features()(0, 0), 8.0);
  const auto joined = detail::concat(split.train, split.test);
  EXPECT_EQ(joined.features(), ds.features());
  EXPECT_EQ(joined.labels(), ds.labels());

  // A two-class softmax with w = 0 predicts class 0 everywhere (first max wins).
  const auto model = LossModel::softmax(ds, 2, 0.1);
  EXPECT_DOUBLE_EQ(detail::accuracy(model, Vector::Zero(model.dim()), ds), 0.5);
}

TEST(GroupedConfig, Validation) {
  GroupedConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.train_fraction = 1.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = GroupedConfig{};
  cfg.groups = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = GroupedConfig{};
  cfg.groups = 1;
  EXPECT_THROW(run_grouped_once(cfg, TargetSpec::mix(), 1), Error);
  cfg = GroupedConfig{};
  EXPECT_THROW(run_grouped_once(cfg, TargetSpec::copy_of(99), 1), Error);
}

TEST(Grouped, CopyOfSourceConcentratesOnItsGroup) {
  GroupedConfig cfg;
  for (int source : {2, 7, 13}) {
    const auto r = run_grouped_once(cfg, TargetSpec::copy_of(source), 11);
    const auto group = static_cast<std::size_t>(source / cfg.domains_per_group);
    EXPECT_GE(r.group_mass[group], 0.7) << "source " << source;
    double total = 0.0;
    for (double g : r.group_mass) total += g;
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Grouped, SingleGroupStrategiesAgree) {
  GroupedConfig cfg;
  cfg.groups = 1;
  std::vector<GroupedRun> runs;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) runs.push_back(run_grouped_once(cfg, TargetSpec::group(0), seed));
  const auto s = summarize(runs).front();
  EXPECT_EQ(s.seeds, 5u);
  EXPECT_EQ(s.group_mass.size(), 1u);
  EXPECT_DOUBLE_EQ(s.group_mass[0], 1.0);
  // Held-out sets have 20 rows, so one misclassified row moves accuracy by 0.05.
  EXPECT_LE(std::abs(s.acc_learned - s.acc_uniform), 0.05);
  EXPECT_LE(std::abs(s.acc_learned - s.acc_target_only), 0.1);
}

TEST(Grouped, Deterministic) {
  GroupedConfig cfg;
  cfg.minimax_iterations = 300;
  const auto a = run_grouped_once(cfg, TargetSpec::group(2), 4);
  const auto b = run_grouped_once(cfg, TargetSpec::group(2), 4);
  EXPECT_EQ(a.alpha.values(), b.alpha.values());
  EXPECT_EQ(a.acc_learned, b.acc_learned);
}

TEST(Summarize, AveragesPerTargetInFirstSeenOrder) {
  auto run = [](const std::string& target, double acc) {
    GroupedRun r;
    r.target = target;
    r.acc_learned = acc;
    r.acc_uniform = acc / 2;
    r.acc_target_only = 0.0;
    r.group_mass = {acc, 1 - acc};
    return r;
  };
  const auto s = summarize({run("b", 0.2), run("a", 1.0), run("b", 0.6)});
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].target, "b");
  EXPECT_DOUBLE_EQ(s[0].acc_learned, 0.4);
  EXPECT_DOUBLE_EQ(s[0].acc_uniform, 0.2);
  EXPECT_DOUBLE_EQ(s[0].group_mass[1], 0.6);
  EXPECT_EQ(s[0].seeds, 2u);
  EXPECT_EQ(s[1].seeds, 1u);
}

TEST(Phase, CostModelAndCrossover) {
  PhaseConfig cfg;
  const auto r = run_phase(cfg, 1);
  ASSERT_EQ(r.rows.size(), cfg.targets.size());
  EXPECT_EQ(r.per_solve_cost, cfg.solve_steps * cfg.sources);
  EXPECT_EQ(r.label_cost, cfg.outer_steps * cfg.n * cfg.label_steps * cfg.sources);
  EXPECT_EQ(r.net_passes, 2 * cfg.outer_steps * cfg.n);
  EXPECT_EQ(r.train_cost, r.label_cost + r.net_passes);

  // M = 1: solving is cheaper.
  EXPECT_LT(r.rows.front().solve_cost, r.rows.front().learn_cost);
  for (std::size_t k = 0; k < r.rows.size(); ++k) {
    EXPECT_EQ(r.rows[k].solve_cost, r.rows[k].M * r.per_solve_cost);
    EXPECT_EQ(r.rows[k].learn_cost, r.train_cost + r.rows[k].M);
    if (k > 0) {
      EXPECT_GT(r.rows[k].solve_cost, r.rows[k - 1].solve_cost);
      EXPECT_GT(r.rows[k].learn_cost, r.rows[k - 1].learn_cost);
    }
  }
  EXPECT_LT(r.rows.back().learn_cost, r.rows.back().solve_cost);

  // Crossover: smallest M with train + M <= M c, checked by direct search.
  std::size_t brute = 1;
  while (r.train_cost + brute > brute * r.per_solve_cost) ++brute;
  EXPECT_EQ(r.crossover, brute);
  EXPECT_LE(r.crossover, r.rows.back().M);
  const double c = static_cast<double>(r.per_solve_cost);
  EXPECT_DOUBLE_EQ(r.formula_crossover, static_cast<double>(cfg.n) * c / (c - 1));
}

TEST(Phase, RejectsEmptyGrid) {
  PhaseConfig cfg;
  cfg.targets.clear();
  EXPECT_THROW(run_phase(cfg, 1), Error);
  cfg.targets = {0};
  EXPECT_THROW(run_phase(cfg, 1), Error);
}
