#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mixopt/coerm.hpp"
#include "mixopt/core.hpp"
#include "mixopt/domains.hpp"
#include "mixopt/format.hpp"
#include "mixopt/rng.hpp"

namespace mixopt {

/// Ball radius at round t >= 1: t^{-1/(1+N)}.
inline double packing_radius(std::size_t t, std::size_t simplex_dim) {
  require(t >= 1, ErrorKind::InvalidInput, "rounds are numbered from 1");
  require(simplex_dim >= 1, ErrorKind::InvalidInput, "simplex dimension must be positive");
  return std::pow(static_cast<double>(t), -1.0 / (1.0 + static_cast<double>(simplex_dim)));
}

struct Center {
  Vector point;
  Vector label_sum;
  std::size_t label_count = 0;
  std::size_t created_at = 0;
  double radius_at_creation = 0.0;
};

/// Brute-force nearest center; ties go to the lowest index.
struct LinearScanIndex {
  struct Hit {
    std::size_t index;
    double distance;
  };

  static Hit nearest(const std::vector<Center>& centers, const Eigen::Ref<const Vector>& x) {
    Hit best{0, std::numeric_limits<double>::infinity()};
    for (std::size_t s = 0; s < centers.size(); ++s) {
      const double dist = (centers[s].point - x).norm();
      if (dist < best.distance) best = {s, dist};
    }
    return best;
  }
};

struct OnlineConfig {
  /// Probability of acquiring a label each round.
  double p = 1.0;
  /// GD steps used to compute each label.
  std::size_t label_steps = 100;
  /// Label GD step; zero means 1/L_f of the suite.
  double label_step = 0.0;
  double radius = kDefaultRadius;
  /// d' in the cold-start prediction (1/d') 1; zero means the label dimension.
  std::size_t cold_start_dim = 0;
  /// Store a zero label when the coin comes up tails instead of skipping.
  bool store_zero_labels = false;

  void validate() const {
    require(p >= 0.0 && p <= 1.0, ErrorKind::Config, "p must lie in [0, 1]");
    require(label_step >= 0.0 && std::isfinite(label_step), ErrorKind::Config, "label_step must be nonnegative");
    require(radius > 0.0, ErrorKind::Config, "radius must be positive");
  }
};

struct PackingState {
  std::vector<Center> centers;
  std::size_t t = 0;
  std::size_t simplex_dim = 0;
  Eigen::Index label_dim = 0;
  std::size_t labels_drawn = 0;
};

struct RoundOutcome {
  Vector prediction;
  std::size_t active_center = 0;
  bool created_center = false;
  bool label_drawn = false;
  double radius = 0.0;
};

/// Label-efficient nonparametric online regression over the simplex.
///
/// Each round predicts with the label mean of the nearest center (the
/// cold-start vector when it has none), joins that ball if the point lies
/// within the current radius or opens a new ball at the point otherwise,
/// and with probability p computes a GD label for the point and adds it to
/// the joined ball.
template <class Index = LinearScanIndex>
class OnlineRegressor {
 public:
  OnlineRegressor(std::span<const LossModel> suite, const OnlineConfig& config)
      : suite_(suite), config_(config) {
    config_.validate();
    require(!suite_.empty(), ErrorKind::InvalidInput, "empty loss suite");
    gd_ = GdConfig::for_suite(suite_, config_.label_steps, config_.radius);
    if (config_.label_step > 0.0) gd_.step = config_.label_step;
    state_.simplex_dim = suite_.size();
    state_.label_dim = suite_.front().dim();
  }

  RoundOutcome observe(const MixtureWeights& alpha, RngStream& coins) {
    require(alpha.size() == static_cast<Eigen::Index>(state_.simplex_dim), ErrorKind::DimensionMismatch,
            "stream point has the wrong dimension");
    const std::size_t t = ++state_.t;
    const double eps = packing_radius(t, state_.simplex_dim);
    const Vector& x = alpha.values();
    auto& centers = state_.centers;

    RoundOutcome out;
    out.radius = eps;
    if (centers.empty()) {
      centers.push_back(new_center(x, t, eps));
      out.created_center = true;
    }
    const auto hit = Index::nearest(centers, x);
    const Center& active = centers[hit.index];
    out.prediction = active.label_count == 0 ? cold_start() : Vector(active.label_sum / static_cast<double>(active.label_count));

    std::size_t joined = hit.index;
    if (hit.distance > eps) {
      centers.push_back(new_center(x, t, eps));
      joined = centers.size() - 1;
      out.created_center = true;
    }
    out.active_center = joined;

    out.label_drawn = coins.bernoulli(config_.p);
    if (out.label_drawn) {
      const auto label = gd_solve(ModelParams::zero(state_.label_dim, config_.radius), alpha, suite_, gd_);
      centers[joined].label_sum += label.params.values();
      ++centers[joined].label_count;
      ++state_.labels_drawn;
    } else if (config_.store_zero_labels) {
      ++centers[joined].label_count;
    }
    return out;
  }

  const PackingState& state() const noexcept { return state_; }
  const OnlineConfig& config() const noexcept { return config_; }

  Vector cold_start() const {
    const std::size_t dp = config_.cold_start_dim ? config_.cold_start_dim : static_cast<std::size_t>(state_.label_dim);
    return Vector::Constant(state_.label_dim, 1.0 / static_cast<double>(dp));
  }

 private:
  Center new_center(const Vector& x, std::size_t t, double eps) const {
    return {x, Vector::Zero(state_.label_dim), 0, t, eps};
  }

  std::span<const LossModel> suite_;
  OnlineConfig config_;
  GdConfig gd_;
  PackingState state_;
};

struct PackingAudit {
  std::size_t centers = 0;
  double final_radius = 0.0;
  /// eps_T^{-N}; the packing bound is C_N times this.
  double scale = 0.0;
  /// centers / scale, the smallest C_N consistent with this run.
  double fitted_constant = 0.0;
};

/// Checks that every center lies farther than its creation-time radius from
/// all earlier centers. Throws InvariantFailure on a violation.
inline PackingAudit packing_audit(const PackingState& state) {
  const auto& c = state.centers;
  for (std::size_t b = 1; b < c.size(); ++b) {
    for (std::size_t a = 0; a < b; ++a) {
      const double dist = (c[a].point - c[b].point).norm();
      if (!(dist > c[b].radius_at_creation))
        throw Error(ErrorKind::InvariantFailure,
                    "packing violated: centers " + std::to_string(a) + " and " + std::to_string(b) + " are " +
                        format_double(dist) + " apart, radius at creation " + format_double(c[b].radius_at_creation));
    }
  }
  PackingAudit audit;
  audit.centers = c.size();
  if (state.t >= 1 && state.simplex_dim >= 1) {
    audit.final_radius = packing_radius(state.t, state.simplex_dim);
    audit.scale = std::pow(audit.final_radius, -static_cast<double>(state.simplex_dim));
    audit.fitted_constant = static_cast<double>(audit.centers) / audit.scale;
  }
  return audit;
}

struct StreamRow {
  std::size_t t;
  double eps;
  std::size_t active_center;
  bool created;
  bool label_drawn;
  double loss;
  std::size_t label_count_total;
};

struct StreamResult {
  std::vector<StreamRow> rows;
  std::vector<double> losses;
  /// Sum of losses; the comparator w* has zero loss, so this is the regret.
  double cumulative_regret = 0.0;
  std::size_t label_count = 0;
  PackingState final_state;
  std::vector<PackingAudit> audits;

  /// (1/T') sum_{t <= T'} loss_t.
  double average_loss(std::size_t upto) const {
    require(upto >= 1 && upto <= losses.size(), ErrorKind::InvalidInput, "average_loss horizon out of range");
    double s = 0.0;
    for (std::size_t t = 0; t < upto; ++t) s += losses[t];
    return s / static_cast<double>(upto);
  }
};

/// Plays the protocol on a fixed stream with the quadratic w* as oracle for
/// the loss. `audit_every > 0` runs the packing audit at those rounds and at
/// the end.
inline StreamResult run_stream(const std::vector<MixtureWeights>& alphas, std::span<const LossModel> suite,
                               const OnlineConfig& config, std::uint64_t seed, std::size_t audit_every = 0) {
  OnlineRegressor<> learner(suite, config);
  RngStream coins(seed, streams::kOnlineCoins);
  StreamResult result;
  result.losses.reserve(alphas.size());
  for (const auto& alpha : alphas) {
    const auto out = learner.observe(alpha, coins);
    const Vector truth = closed_form_wstar(suite, alpha, config.radius).params.values();
    const double loss = (out.prediction - truth).squaredNorm();
    result.losses.push_back(loss);
    result.cumulative_regret += loss;
    const auto& st = learner.state();
    result.rows.push_back({st.t, out.radius, out.active_center, out.created_center, out.label_drawn, loss, st.labels_drawn});
    if (audit_every > 0 && st.t % audit_every == 0) result.audits.push_back(packing_audit(st));
  }
  result.final_state = learner.state();
  result.label_count = result.final_state.labels_drawn;
  if (audit_every > 0) result.audits.push_back(packing_audit(result.final_state));
  return result;
}

inline void write_stream_csv(const StreamResult& result, const std::string& path, const std::string& comment = {}) {
  CsvWriter out(path, {"t", "eps_t", "active_center", "created", "Z_t", "loss", "label_count_total"}, comment);
  for (const auto& r : result.rows)
    out.cell(r.t).cell(r.eps).cell(r.active_center).cell(r.created ? 1 : 0).cell(r.label_drawn ? 1 : 0).cell(r.loss).cell(r.label_count_total).end_row();
}

}  // namespace mixopt
