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

struct GdConfig {
  double step = 1.0;
  std::size_t steps = 100;
  /// Stop early once the weighted gradient norm drops below this value.
  std::optional<double> tolerance;
  double radius = kDefaultRadius;

  void validate() const {
    require(step > 0.0 && std::isfinite(step), ErrorKind::Config, "GD step must be positive");
    require(radius > 0.0, ErrorKind::Config, "domain radius must be positive");
  }

  /// gamma = 1/L_f with L_f the largest smoothness constant in the suite.
  static GdConfig for_suite(std::span<const LossModel> suite, std::size_t steps, double radius = kDefaultRadius) {
    return {1.0 / suite_constants(suite, radius).smoothness, steps, std::nullopt, radius};
  }
};

struct GdResult {
  ModelParams params;
  std::size_t steps_taken = 0;
  /// One evaluation per (source, step).
  std::size_t grad_evals = 0;
};

/// K steps of projected GD on f_alpha(w) = sum_j alpha_j f_j(w) from v0.
inline GdResult gd_solve(const ModelParams& v0, const MixtureWeights& alpha, std::span<const LossModel> suite,
                         const GdConfig& cfg) {
  cfg.validate();
  check_suite(suite, alpha);
  require(v0.size() == suite.front().dim(), ErrorKind::DimensionMismatch, "start point has the wrong dimension");
  Vector v = v0.values();
  GdResult result{v0, 0, 0};
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    const Vector g = weighted_gradient(suite, alpha, v);
    result.grad_evals += suite.size();
    if (cfg.tolerance && g.norm() <= *cfg.tolerance) break;
    v = project_ball(v - cfg.step * g, cfg.radius).values();
    ++result.steps_taken;
  }
  result.params = ModelParams(std::move(v), cfg.radius);
  return result;
}

struct BatchSolution {
  std::vector<ModelParams> params;
  std::size_t grad_evals = 0;
};

/// Solves every weighted ERM independently from a cold start at the origin.
inline BatchSolution solve_batch(const std::vector<MixtureWeights>& alphas, std::span<const LossModel> suite,
                                 const GdConfig& cfg) {
  require(!alphas.empty(), ErrorKind::InvalidInput, "solve_batch needs at least one mixture");
  require(!suite.empty(), ErrorKind::InvalidInput, "empty loss suite");
  const ModelParams origin = ModelParams::zero(suite.front().dim(), cfg.radius);
  BatchSolution out;
  out.params.reserve(alphas.size());
  for (const auto& alpha : alphas) {
    auto r = gd_solve(origin, alpha, suite, cfg);
    out.grad_evals += r.grad_evals;
    out.params.push_back(std::move(r.params));
  }
  return out;
}

inline void write_batch_csv(const std::vector<MixtureWeights>& alphas, const BatchSolution& sol,
                            std::size_t grad_evals_per_solve, const std::string& path,
                            const std::string& comment = {}) {
  require(alphas.size() == sol.params.size(), ErrorKind::DimensionMismatch, "alphas and solutions differ in count");
  const Eigen::Index n = alphas.front().size();
  const Eigen::Index d = sol.params.front().size();
  std::vector<std::string> columns;
  for (Eigen::Index j = 0; j < n; ++j) columns.push_back("alpha_" + std::to_string(j));
  for (Eigen::Index k = 0; k < d; ++k) columns.push_back("w_" + std::to_string(k));
  columns.emplace_back("grad_evals");
  CsvWriter out(path, columns, comment);
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    for (Eigen::Index j = 0; j < n; ++j) out.cell(alphas[i][j]);
    for (Eigen::Index k = 0; k < d; ++k) out.cell(sol.params[i].values()(k));
    out.cell(grad_evals_per_solve);
    out.end_row();
  }
}

struct LipschitzAudit {
  double max_ratio = 0.0;
  /// kappa* = sqrt(N) G_f / mu_f.
  double bound = 0.0;
  std::size_t pairs = 0;
  std::size_t violations = 0;
  /// True if some sampled w*(alpha) sat on the boundary of W.
  bool saw_boundary = false;

  double margin() const { return bound - max_ratio; }
};

/// Samples uniform simplex pairs and compares |w*(a) - w*(a')| / |a - a'|
/// against kappa*. Uses the closed-form minimizer, so quadratics only.
inline LipschitzAudit lipschitz_audit(std::span<const LossModel> suite, std::size_t pairs, std::uint64_t seed,
                                      double radius = kDefaultRadius) {
  require(!suite.empty(), ErrorKind::InvalidInput, "empty loss suite");
  const auto constants = suite_constants(suite, radius);
  const auto n = static_cast<Eigen::Index>(suite.size());
  LipschitzAudit audit;
  audit.bound = std::sqrt(static_cast<double>(n)) * constants.gradient_bound / constants.strong_convexity;
  RngStream rng(seed, streams::kAudit);
  auto draw = [&] {
    const auto v = rng.dirichlet_ones(static_cast<std::size_t>(n));
    return MixtureWeights(Eigen::Map<const Vector>(v.data(), n));
  };
  for (std::size_t k = 0; k < pairs; ++k) {
    const MixtureWeights a = draw();
    const MixtureWeights b = draw();
    const double da = (a.values() - b.values()).norm();
    if (da == 0.0) continue;
    const auto wa = closed_form_wstar(suite, a, radius);
    const auto wb = closed_form_wstar(suite, b, radius);
    audit.saw_boundary = audit.saw_boundary || wa.constrained || wb.constrained;
    const double ratio = (wa.params.values() - wb.params.values()).norm() / da;
    audit.max_ratio = std::max(audit.max_ratio, ratio);
    if (ratio > audit.bound) ++audit.violations;
    ++audit.pairs;
  }
  return audit;
}

}  // namespace mixopt
