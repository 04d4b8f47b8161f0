#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mixopt/online.hpp"
#include "mixopt/wstar_net.hpp"

using namespace mixopt;

namespace {

std::vector<MixtureWeights> near_point(const Vector& base, std::size_t count, double spread, std::uint64_t seed) {
  RngStream rng(seed, 99);
  std::vector<MixtureWeights> out;
  for (std::size_t k = 0; k < count; ++k) {
    Vector v = base;
    for (Eigen::Index j = 0; j < v.size(); ++j) v(j) += spread * rng.uniform01();
    out.emplace_back(project_simplex(v));
  }
  return out;
}

std::vector<MixtureWeights> edge_grid(std::size_t count) {
  // Van der Corput sequence along the 1-simplex (N = 2): it keeps revisiting
  // the largest gap, which forces as many centers as the radius allows.
  std::vector<MixtureWeights> out;
  for (std::size_t k = 1; k <= count; ++k) {
    double s = 0.0, f = 0.5;
    for (std::size_t i = k; i > 0; i /= 2, f /= 2) s += f * static_cast<double>(i % 2);
    Vector v(2);
    v << s, 1.0 - s;
    out.emplace_back(v);
  }
  return out;
}

}  // namespace

TEST(PackingRadius, Examples) {
  EXPECT_EQ(packing_radius(1, 3), 1.0);
  EXPECT_DOUBLE_EQ(packing_radius(4, 1), 0.5);
  EXPECT_DOUBLE_EQ(packing_radius(8, 2), 0.5);
  double prev = 2.0;
  for (std::size_t t = 1; t <= 10000; ++t) {
    const double r = packing_radius(t, 2);
    ASSERT_LE(r, prev);
    prev = r;
  }
  EXPECT_THROW(packing_radius(0, 2), Error);
}

TEST(Observe, FirstRoundsFollowProtocol) {
  const auto suite = make_quadratic_suite(2, 3, 0.3, 1.0, 1);
  OnlineConfig cfg;
  cfg.label_steps = 5000;
  OnlineRegressor<> learner(suite, cfg);
  RngStream coins(1, streams::kOnlineCoins);
  Vector a(2);
  a << 0.3, 0.7;
  const auto first = learner.observe(MixtureWeights(a), coins);
  EXPECT_EQ(first.prediction, Vector::Constant(3, 1.0 / 3.0));
  EXPECT_TRUE(first.created_center);
  EXPECT_TRUE(first.label_drawn);
  EXPECT_EQ(learner.state().centers.size(), 1u);
  const Vector w = learner.state().centers[0].label_sum;
  EXPECT_LE((w - closed_form_wstar(suite, MixtureWeights(a)).params.values()).norm(), 1e-8);

  Vector b(2);
  b << 0.31, 0.69;
  const auto second = learner.observe(MixtureWeights(b), coins);
  EXPECT_EQ(second.prediction, w);
  EXPECT_FALSE(second.created_center);
  EXPECT_EQ(second.active_center, 0u);
  EXPECT_DOUBLE_EQ(second.radius, packing_radius(2, 2));

  // Far point: new center at the point itself, prediction still from the old ball.
  const auto third = learner.observe(MixtureWeights::vertex(2, 0), coins);
  EXPECT_TRUE(third.created_center);
  EXPECT_EQ(third.active_center, 1u);
  EXPECT_EQ(learner.state().centers[1].point, MixtureWeights::vertex(2, 0).values());
  EXPECT_EQ(learner.state().centers[1].created_at, 3u);
  EXPECT_LE((third.prediction - (learner.state().centers[0].label_sum / 2.0)).norm(), 1e-15);
}

TEST(Observe, ColdStartDimensionIsConfigurable) {
  const auto suite = make_quadratic_suite(2, 3, 0.3, 1.0, 2);
  OnlineConfig cfg;
  cfg.cold_start_dim = 4;
  OnlineRegressor<> learner(suite, cfg);
  EXPECT_EQ(learner.cold_start(), Vector::Constant(3, 0.25));
}

TEST(Observe, PredictionIsRunningMeanInsideOneBall) {
  const auto suite = make_quadratic_suite(3, 2, 0.3, 1.0, 3);
  OnlineConfig cfg;
  cfg.label_steps = 2000;
  Vector base(3);
  base << 0.2, 0.3, 0.5;
  const auto stream = near_point(base, 60, 1e-4, 3);
  OnlineRegressor<> learner(suite, cfg);
  RngStream coins(3, streams::kOnlineCoins);
  Vector sum = Vector::Zero(2);
  const auto c = suite_constants(suite, kDefaultRadius);
  const double tol = 2 * std::pow(1.0 - c.strong_convexity / c.smoothness, 2000.0) * kDefaultRadius + 1e-12;
  for (std::size_t t = 0; t < stream.size(); ++t) {
    const auto out = learner.observe(stream[t], coins);
    if (t > 0) {
      EXPECT_LE((out.prediction - sum / static_cast<double>(t)).norm(), tol) << "t=" << t;
      EXPECT_FALSE(out.created_center);
    }
    sum += closed_form_wstar(suite, stream[t]).params.values();
  }
  EXPECT_EQ(learner.state().centers.size(), 1u);
}

TEST(RunStream, NoLabelsWhenPIsZero) {
  const auto suite = make_quadratic_suite(2, 2, 0.3, 1.0, 4);
  OnlineConfig cfg;
  cfg.p = 0.0;
  const auto alphas = sample_mixtures(10, 2, 4);
  const auto r = run_stream(alphas, suite, cfg, 4);
  EXPECT_EQ(r.label_count, 0u);
  for (std::size_t t = 0; t < alphas.size(); ++t) {
    const Vector truth = closed_form_wstar(suite, alphas[t]).params.values();
    EXPECT_EQ(r.losses[t], (Vector::Constant(2, 0.5) - truth).squaredNorm());
    EXPECT_FALSE(r.rows[t].label_drawn);
  }

  // Strict-listing mode averages in zero vectors instead.
  cfg.store_zero_labels = true;
  OnlineRegressor<> strict(suite, cfg);
  RngStream coins(4, streams::kOnlineCoins);
  strict.observe(alphas[0], coins);
  Vector near = alphas[0].values();
  const auto out = strict.observe(MixtureWeights(near), coins);
  EXPECT_EQ(out.prediction, Vector::Zero(2));
  EXPECT_EQ(strict.state().labels_drawn, 0u);
  EXPECT_EQ(strict.state().centers[0].label_count, 2u);
}

TEST(RunStream, LabelCountIsBinomial) {
  const auto suite = make_quadratic_suite(2, 2, 0.3, 1.0, 5);
  OnlineConfig cfg;
  cfg.label_steps = 5;
  const auto alphas = sample_mixtures(2000, 2, 5);
  for (double p : {0.25, 0.5, 0.9}) {
    cfg.p = p;
    const auto r = run_stream(alphas, suite, cfg, 5);
    const double mean = 2000 * p, sd = std::sqrt(2000 * p * (1 - p));
    EXPECT_GE(static_cast<double>(r.label_count), mean - 3 * sd) << "p=" << p;
    EXPECT_LE(static_cast<double>(r.label_count), mean + 3 * sd) << "p=" << p;
    std::size_t drawn = 0;
    for (const auto& row : r.rows) drawn += row.label_drawn ? 1 : 0;
    EXPECT_EQ(drawn, r.label_count);
    EXPECT_EQ(r.rows.back().label_count_total, r.label_count);
  }
}

TEST(RunStream, DeterministicGivenSeed) {
  const auto suite = make_quadratic_suite(2, 2, 0.3, 1.0, 6);
  OnlineConfig cfg;
  cfg.p = 0.5;
  cfg.label_steps = 10;
  const auto alphas = sample_mixtures(300, 2, 6);
  const auto a = run_stream(alphas, suite, cfg, 6);
  const auto b = run_stream(alphas, suite, cfg, 6);
  const auto c = run_stream(alphas, suite, cfg, 7);
  EXPECT_EQ(a.losses, b.losses);
  EXPECT_EQ(a.label_count, b.label_count);
  EXPECT_NE(a.losses, c.losses);
}

TEST(RunStream, PredictionsBounded) {
  const auto suite = make_quadratic_suite(3, 2, 0.3, 1.0, 7);
  OnlineConfig cfg;
  cfg.p = 0.7;
  cfg.label_steps = 20;
  OnlineRegressor<> learner(suite, cfg);
  RngStream coins(7, streams::kOnlineCoins);
  const double bound = std::max(learner.cold_start().norm(), cfg.radius);
  for (const auto& a : sample_mixtures(500, 3, 7)) ASSERT_LE(learner.observe(a, coins).prediction.norm(), bound + 1e-12);
}

TEST(RunStream, JoinedBallsRespectLipschitzApproximation) {
  const auto suite = make_quadratic_suite(2, 3, 0.3, 1.0, 8);
  const auto c = suite_constants(suite, kDefaultRadius);
  const double kappa = std::sqrt(2.0) * c.gradient_bound / c.strong_convexity;
  OnlineConfig cfg;
  cfg.label_steps = 1;
  OnlineRegressor<> learner(suite, cfg);
  RngStream coins(8, streams::kOnlineCoins);
  std::size_t joined = 0;
  for (const auto& a : sample_mixtures(1000, 2, 8)) {
    const auto out = learner.observe(a, coins);
    if (out.created_center) continue;
    const auto& center = learner.state().centers[out.active_center];
    const double gap = (closed_form_wstar(suite, MixtureWeights(center.point)).params.values() -
                        closed_form_wstar(suite, a).params.values())
                           .norm();
    EXPECT_LE(gap, kappa * out.radius + 1e-12);
    ++joined;
  }
  EXPECT_GT(joined, 500u);
}

TEST(RunStream, WithinBallRegretIsLogarithmic) {
  const auto suite = make_quadratic_suite(3, 2, 0.3, 1.0, 9);
  OnlineConfig cfg;
  cfg.label_steps = 3000;
  Vector base(3);
  base << 0.5, 0.25, 0.25;
  const auto stream = near_point(base, 200, 1e-3, 9);
  OnlineRegressor<> learner(suite, cfg);
  RngStream coins(9, streams::kOnlineCoins);
  std::vector<Vector> labels;
  std::vector<Vector> predictions;
  for (const auto& a : stream) {
    predictions.push_back(learner.observe(a, coins).prediction);
    labels.push_back(closed_form_wstar(suite, a).params.values());
  }
  ASSERT_EQ(learner.state().centers.size(), 1u);
  Vector mean = Vector::Zero(2);
  for (const auto& y : labels) mean += y;
  mean /= static_cast<double>(labels.size());
  double regret = 0.0;
  double diameter = 0.0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    regret += (predictions[t] - labels[t]).squaredNorm() - (mean - labels[t]).squaredNorm();
    diameter = std::max(diameter, (learner.cold_start() - labels[t]).norm());
    for (std::size_t s = 0; s < t; ++s) diameter = std::max(diameter, (labels[s] - labels[t]).norm());
  }
  EXPECT_LE(regret, 4.0 * diameter * diameter * (1.0 + std::log(static_cast<double>(labels.size()))));
}

TEST(PackingAudit, AcceptsValidAndRejectsConstructedViolation) {
  PackingState single;
  single.simplex_dim = 2;
  single.t = 1;
  single.centers.push_back({Vector::Zero(2), Vector::Zero(1), 0, 1, 1.0});
  EXPECT_EQ(packing_audit(single).centers, 1u);

  PackingState bad = single;
  Vector p(2);
  p << 0.1, 0.0;
  bad.t = 2;
  bad.centers.push_back({p, Vector::Zero(1), 0, 2, 0.5});
  try {
    packing_audit(bad);
    FAIL() << "expected a packing violation";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvariantFailure);
  }
}

TEST(PackingAudit, CenterCountSublinearOnEdgeStream) {
  const auto suite = make_quadratic_suite(2, 2, 0.3, 1.0, 10);
  OnlineConfig cfg;
  cfg.p = 0.0;
  const auto small = run_stream(edge_grid(512), suite, cfg, 10, 128);
  const auto large = run_stream(edge_grid(4096), suite, cfg, 10, 1024);
  const double frac_small = static_cast<double>(small.audits.back().centers) / 512.0;
  const double frac_large = static_cast<double>(large.audits.back().centers) / 4096.0;
  EXPECT_LT(frac_large, frac_small);
  // Centers are pairwise farther apart than eps_T on a segment of length
  // sqrt(2), so at most sqrt(2)/eps_T + 1 of them fit.
  for (const auto& r : {small, large}) {
    const auto& audit = r.audits.back();
    EXPECT_LE(static_cast<double>(audit.centers), std::sqrt(2.0) / audit.final_radius + 1.0);
    EXPECT_LE(audit.centers, static_cast<std::size_t>(std::ceil(audit.scale)));
  }
}

TEST(StreamCsv, Columns) {
  const auto suite = make_quadratic_suite(2, 2, 0.3, 1.0, 11);
  OnlineConfig cfg;
  cfg.p = 0.5;
  cfg.label_steps = 3;
  const auto r = run_stream(sample_mixtures(20, 2, 11), suite, cfg, 11);
  const std::string path = ::testing::TempDir() + "/stream.csv";
  write_stream_csv(r, path, "config_hash=1");
  const auto ds = load_csv(path, {"loss", {"t", "eps_t", "Z_t", "label_count_total"}});
  ASSERT_EQ(ds.sample_count(), 20u);
  EXPECT_EQ(ds.features()(19, 3), static_cast<double>(r.label_count));
  EXPECT_EQ(ds.labels()(4), r.losses[4]);
}
