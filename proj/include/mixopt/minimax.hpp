#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mixopt/core.hpp"
#include "mixopt/domains.hpp"
#include "mixopt/format.hpp"
#include "mixopt/rng.hpp"

namespace mixopt {

/// One target domain and N source domains sharing a parameter space W.
struct MinimaxInstance {
  std::vector<LossModel> sources;
  LossModel target;
  double radius = kDefaultRadius;

  std::size_t source_count() const noexcept { return sources.size(); }
  Eigen::Index dim() const noexcept { return target.dim(); }

  /// Diagonal of M = diag(1/m_1, ..., 1/m_N).
  Vector inverse_sample_counts() const {
    Vector m(static_cast<Eigen::Index>(sources.size()));
    for (std::size_t j = 0; j < sources.size(); ++j)
      m(static_cast<Eigen::Index>(j)) = 1.0 / static_cast<double>(sources[j].sample_count());
    return m;
  }

  void validate() const {
    require(!sources.empty(), ErrorKind::InvalidInput, "minimax instance needs at least one source");
    require(radius > 0.0, ErrorKind::InvalidInput, "domain radius must be positive");
    for (const auto& s : sources)
      require(s.dim() == target.dim(), ErrorKind::DimensionMismatch,
              "source and target disagree on parameter dimension");
  }
};

struct MinimaxConfig {
  std::size_t batch_size = 1;
  double beta = 0.1;
  /// Step size of the alpha (descent) update.
  double eta = 1e-2;
  /// Step size of the w (ascent) update. Zero freezes w.
  double gamma = 1e-2;
  double C = 1.0;
  std::size_t iterations = 1000;
  SmoothAbs smoothing{};
  std::uint64_t seed = 0;
  /// Objective and gap are evaluated every this many steps.
  std::size_t record_every = 1;

  void validate() const {
    require(batch_size >= 1, ErrorKind::Config, "batch_size must be at least 1");
    require(beta > 0.0 && beta <= 1.0, ErrorKind::Config, "beta must lie in (0, 1]");
    require(eta > 0.0 && std::isfinite(eta), ErrorKind::Config, "eta must be positive");
    require(gamma >= 0.0 && std::isfinite(gamma), ErrorKind::Config, "gamma must be nonnegative");
    require(C > 0.0 && std::isfinite(C), ErrorKind::Config, "C must be positive");
    require(record_every >= 1, ErrorKind::Config, "record_every must be at least 1");
  }
};

/// Smoothness/strong-convexity constants of F and the step sizes they imply.
struct TheoremSchedule {
  CurvatureConstants loss;
  double smoothness;        // L = max{4 G_f^2 L_g + 2 G_g L_f, 2C/m_min}
  double strong_convexity;  // mu = 2C/m_max
  double eta;               // mu / L^2
  double gamma;             // mu^3 / (N G_g^2 G_f^2 L^2)
};

inline TheoremSchedule theorem_schedule(const MinimaxInstance& instance, double C, const SmoothAbs& g) {
  instance.validate();
  std::vector<LossModel> all = instance.sources;
  all.push_back(instance.target);
  const auto loss = suite_constants(all, instance.radius);
  const Vector m_inv = instance.inverse_sample_counts();
  const double gg = g.lipschitz();
  const double lg = g.smoothness();
  const double L = std::max(4.0 * loss.gradient_bound * loss.gradient_bound * lg + 2.0 * gg * loss.smoothness,
                            2.0 * C * m_inv.maxCoeff());
  const double mu = 2.0 * C * m_inv.minCoeff();
  const auto n = static_cast<double>(instance.source_count());
  const double gf2 = loss.gradient_bound * loss.gradient_bound;
  return {loss, L, mu, mu / (L * L), mu * mu * mu / (n * gg * gg * gf2 * L * L)};
}

/// Config with eta and gamma taken from the theorem schedule.
inline MinimaxConfig default_config(const MinimaxInstance& instance, double C = 1.0,
                                    const SmoothAbs& g = SmoothAbs{}) {
  const auto schedule = theorem_schedule(instance, C, g);
  MinimaxConfig cfg;
  cfg.C = C;
  cfg.smoothing = g;
  cfg.eta = schedule.eta;
  cfg.gamma = schedule.gamma;
  return cfg;
}

struct MinimaxState {
  MixtureWeights alpha;
  ModelParams w;
  ModelParams w_prev;
  /// Tracking estimates of f_T(w) - f_j(w), one per source.
  Vector z;
  std::size_t t = 0;
};

/// Risk discrepancies f_T(w) - f_j(w) on the full data.
inline Vector discrepancies(const MinimaxInstance& instance, const Eigen::Ref<const Vector>& w) {
  const double target = instance.target.risk(w);
  Vector d(static_cast<Eigen::Index>(instance.source_count()));
  for (std::size_t j = 0; j < instance.source_count(); ++j)
    d(static_cast<Eigen::Index>(j)) = target - instance.sources[j].risk(w);
  return d;
}

/// Starts at alpha (uniform by default) and w^0 = w^{-1} (origin by default)
/// with z_j^0 = f_T(w^{-1}) - f_j(w^{-1}).
inline MinimaxState init_state(const MinimaxInstance& instance, std::optional<MixtureWeights> alpha0 = {},
                               std::optional<ModelParams> w0 = {}) {
  instance.validate();
  const auto n = static_cast<Eigen::Index>(instance.source_count());
  MixtureWeights alpha = alpha0.value_or(MixtureWeights::uniform(n));
  require(alpha.size() == n, ErrorKind::DimensionMismatch, "initial alpha has the wrong length");
  ModelParams w = w0.value_or(ModelParams::zero(instance.dim(), instance.radius));
  require(w.size() == instance.dim(), ErrorKind::DimensionMismatch, "initial w has the wrong length");
  Vector z = discrepancies(instance, w.values());
  ModelParams w_prev = w;
  return {std::move(alpha), std::move(w), std::move(w_prev), std::move(z), 0};
}

/// Independent minibatch streams for the target and every source.
struct MinimaxStreams {
  RngStream target;
  std::vector<RngStream> sources;

  MinimaxStreams(std::uint64_t seed, std::size_t n_sources)
      : target(seed, streams::kMinibatchTarget) {
    sources.reserve(n_sources);
    for (std::size_t j = 0; j < n_sources; ++j) sources.emplace_back(seed, streams::kMinibatchSourceBase + j);
  }
};

/// One iteration of stochastic corrected gradient descent-ascent.
///
/// The z-update evaluates w^t and w^{t-1} on the same minibatch. The w-step
/// uses z^{t+1}; the alpha-step uses the pre-update z^t. w is updated by
/// projected ascent, alpha by projected descent, both from the pre-step
/// iterates.
inline MinimaxState step(const MinimaxState& state, const MinimaxInstance& instance, const MinimaxConfig& config,
                         MinimaxStreams& rng) {
  const std::size_t n = instance.source_count();
  require(rng.sources.size() == n, ErrorKind::DimensionMismatch, "stream count does not match source count");
  const Vector& w = state.w.values();
  const Vector& w_prev = state.w_prev.values();
  const double beta = config.beta;
  const auto& g = config.smoothing;

  const Batch target_batch = sample_batch(instance.target, config.batch_size, rng.target);
  const double target_now = instance.target.risk_on(w, target_batch);
  const double target_before = instance.target.risk_on(w_prev, target_batch);
  const Vector target_grad = instance.target.gradient_on(w, target_batch);

  Vector z_next(static_cast<Eigen::Index>(n));
  Vector g_w = Vector::Zero(w.size());
  for (std::size_t j = 0; j < n; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const auto& source = instance.sources[j];
    const Batch batch = sample_batch(source, config.batch_size, rng.sources[j]);
    const double now = target_now - source.risk_on(w, batch);
    const double before = target_before - source.risk_on(w_prev, batch);
    z_next(jj) = (1.0 - beta) * (state.z(jj) + now - before) + beta * now;
    const double a = state.alpha[jj];
    if (a != 0.0) g_w += a * g.deriv(z_next(jj)) * (target_grad - source.gradient_on(w, batch));
  }

  ModelParams w_next = config.gamma == 0.0 ? state.w : project_ball(w + config.gamma * g_w, instance.radius);

  const Vector m_inv = instance.inverse_sample_counts();
  Vector g_alpha(static_cast<Eigen::Index>(n));
  for (Eigen::Index j = 0; j < g_alpha.size(); ++j) g_alpha(j) = g.value(state.z(j));
  g_alpha += 2.0 * config.C * m_inv.cwiseProduct(state.alpha.values());
  MixtureWeights alpha_next = project_simplex(state.alpha.values() - config.eta * g_alpha);

  return {std::move(alpha_next), std::move(w_next), state.w, std::move(z_next), state.t + 1};
}

/// F(alpha, w) = sum_j alpha_j g(f_T(w) - f_j(w)) + C alpha^T M alpha, full batch.
inline double objective(const MinimaxInstance& instance, const MixtureWeights& alpha,
                        const Eigen::Ref<const Vector>& w, double C, const SmoothAbs& g) {
  instance.validate();
  require(alpha.size() == static_cast<Eigen::Index>(instance.source_count()), ErrorKind::DimensionMismatch,
          "alpha length does not match source count");
  const Vector d = discrepancies(instance, w);
  const Vector m_inv = instance.inverse_sample_counts();
  double total = 0.0;
  for (Eigen::Index j = 0; j < d.size(); ++j) total += alpha[j] * g.value(d(j));
  return total + C * alpha.values().cwiseProduct(m_inv).dot(alpha.values());
}

/// The unrelaxed objective with |.| and the square-root sample penalty.
/// Reporting only; the optimizer works on the relaxed form.
inline double unrelaxed_objective(const MinimaxInstance& instance, const MixtureWeights& alpha,
                                  const Eigen::Ref<const Vector>& w, double C) {
  const Vector d = discrepancies(instance, w);
  const Vector m_inv = instance.inverse_sample_counts();
  double total = 0.0;
  for (Eigen::Index j = 0; j < d.size(); ++j) total += alpha[j] * std::abs(d(j));
  return total + C * std::sqrt(alpha.values().cwiseProduct(m_inv).dot(alpha.values()));
}

struct ObjectiveGradients {
  Vector alpha;
  Vector w;
};

/// Exact full-batch gradients of F.
inline ObjectiveGradients objective_gradients(const MinimaxInstance& instance, const MixtureWeights& alpha,
                                              const Eigen::Ref<const Vector>& w, double C, const SmoothAbs& g) {
  const Vector d = discrepancies(instance, w);
  const Vector m_inv = instance.inverse_sample_counts();
  ObjectiveGradients out;
  out.alpha = Vector(d.size());
  for (Eigen::Index j = 0; j < d.size(); ++j) out.alpha(j) = g.value(d(j));
  out.alpha += 2.0 * C * m_inv.cwiseProduct(alpha.values());
  const Vector target_grad = instance.target.gradient(w);
  out.w = Vector::Zero(w.size());
  for (std::size_t j = 0; j < instance.source_count(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    if (alpha[jj] == 0.0) continue;
    out.w += alpha[jj] * g.deriv(d(jj)) * (target_grad - instance.sources[j].gradient(w));
  }
  return out;
}

struct StationaryGap {
  Vector alpha_component;
  Vector w_component;
  double squared_norm = 0.0;
};

/// Displacement of one exact projected descent-ascent step, scaled by the steps.
inline StationaryGap stationary_gap(const MinimaxInstance& instance, const MixtureWeights& alpha,
                                    const Eigen::Ref<const Vector>& w, double eta, double gamma, double C,
                                    const SmoothAbs& g) {
  require(eta > 0.0 && gamma > 0.0, ErrorKind::InvalidInput, "stationary gap needs positive step sizes");
  const auto grads = objective_gradients(instance, alpha, w, C, g);
  StationaryGap gap;
  gap.alpha_component = (alpha.values() - project_simplex(alpha.values() - eta * grads.alpha).values()) / eta;
  gap.w_component = (w - project_ball(w + gamma * grads.w, instance.radius).values()) / gamma;
  gap.squared_norm = gap.alpha_component.squaredNorm() + gap.w_component.squaredNorm();
  return gap;
}

struct TrajectoryPoint {
  std::size_t t;
  double objective;
  double gap_sq;
  Vector alpha;
};

struct MinimaxRun {
  std::vector<TrajectoryPoint> trajectory;
  MinimaxState final_state;
  /// Mean gap^2 over the recorded points.
  double mean_gap_sq = 0.0;
  double first_quartile_gap_sq = 0.0;
  double last_quartile_gap_sq = 0.0;
};

namespace detail {
inline double mean_gap(const std::vector<TrajectoryPoint>& points, std::size_t begin, std::size_t end) {
  if (begin >= end) return 0.0;
  double total = 0.0;
  for (std::size_t k = begin; k < end; ++k) total += points[k].gap_sq;
  return total / static_cast<double>(end - begin);
}
}  // namespace detail

/// Runs `config.iterations` steps from `start` (default init_state), recording
/// the full-batch objective and stationary gap every `record_every` steps and
/// at the final step.
inline MinimaxRun run(const MinimaxInstance& instance, const MinimaxConfig& config,
                      std::optional<MinimaxState> start = {}) {
  instance.validate();
  config.validate();
  MinimaxRun result{{}, start ? *start : init_state(instance), 0.0, 0.0, 0.0};
  if (config.iterations == 0) return result;
  require(config.gamma > 0.0, ErrorKind::Config, "gamma must be positive for a recorded run");

  MinimaxStreams rng(config.seed, instance.source_count());
  MinimaxState& state = result.final_state;
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    state = step(state, instance, config, rng);
    if (it % config.record_every == 0 || it == config.iterations) {
      const auto gap = stationary_gap(instance, state.alpha, state.w.values(), config.eta, config.gamma, config.C,
                                      config.smoothing);
      result.trajectory.push_back({state.t, objective(instance, state.alpha, state.w.values(), config.C,
                                                      config.smoothing),
                                   gap.squared_norm, state.alpha.values()});
    }
  }
  const auto& pts = result.trajectory;
  const std::size_t q = std::max<std::size_t>(1, pts.size() / 4);
  result.mean_gap_sq = detail::mean_gap(pts, 0, pts.size());
  result.first_quartile_gap_sq = detail::mean_gap(pts, 0, q);
  result.last_quartile_gap_sq = detail::mean_gap(pts, pts.size() - q, pts.size());
  return result;
}

inline void write_trajectory_csv(const MinimaxRun& run, const std::string& path, const std::string& comment = {}) {
  const Eigen::Index n = run.final_state.alpha.size();
  std::vector<std::string> columns{"t", "objective", "gap_sq"};
  for (Eigen::Index j = 0; j < n; ++j) columns.push_back("alpha_" + std::to_string(j));
  CsvWriter out(path, columns, comment);
  for (const auto& p : run.trajectory) {
    out.cell(p.t).cell(p.objective).cell(p.gap_sq);
    for (Eigen::Index j = 0; j < n; ++j) out.cell(p.alpha(j));
    out.end_row();
  }
}

}  // namespace mixopt
