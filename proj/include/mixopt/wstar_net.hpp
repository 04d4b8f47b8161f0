#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mixopt/coerm.hpp"
#include "mixopt/core.hpp"
#include "mixopt/domains.hpp"
#include "mixopt/format.hpp"
#include "mixopt/rng.hpp"

namespace mixopt {

/// Vector-valued two-layer ReLU network h: R^N -> R^d,
///   h_j(x) = a_j^T (U^j x)_+,
/// with one m x N hidden matrix per output coordinate and a fixed output
/// layer of +-1/sqrt(m) entries. Output sums are exact (order independent),
/// so cancelling units contribute exactly zero.
class TwoLayerNet {
 public:
  TwoLayerNet(std::vector<Matrix> hidden, std::vector<Vector> output)
      : hidden_(std::move(hidden)), output_(std::move(output)) {
    require(!hidden_.empty() && hidden_.size() == output_.size(), ErrorKind::InvalidInput,
            "network needs one hidden matrix and one output vector per coordinate");
    const Eigen::Index m = hidden_.front().rows();
    const Eigen::Index n = hidden_.front().cols();
    require(m >= 2 && m % 2 == 0, ErrorKind::InvalidInput, "network width must be even");
    require(n >= 1, ErrorKind::InvalidInput, "network input dimension must be positive");
    const double scale = 1.0 / std::sqrt(static_cast<double>(m));
    for (std::size_t j = 0; j < hidden_.size(); ++j) {
      require(hidden_[j].rows() == m && hidden_[j].cols() == n && output_[j].size() == m,
              ErrorKind::DimensionMismatch, "network layers disagree on shape");
      Eigen::Index positive = 0;
      for (Eigen::Index r = 0; r < m; ++r) {
        const double a = output_[j](r);
        require(a == scale || a == -scale, ErrorKind::InvalidInput, "output weights must be +-1/sqrt(m)");
        positive += a > 0.0 ? 1 : 0;
      }
      require(positive == m / 2, ErrorKind::InvalidInput, "output weights need m/2 entries of each sign");
    }
  }

  Eigen::Index width() const noexcept { return hidden_.front().rows(); }
  Eigen::Index input_dim() const noexcept { return hidden_.front().cols(); }
  Eigen::Index output_dim() const noexcept { return static_cast<Eigen::Index>(hidden_.size()); }

  const Matrix& hidden(Eigen::Index j) const { return hidden_[static_cast<std::size_t>(j)]; }
  Matrix& hidden(Eigen::Index j) { return hidden_[static_cast<std::size_t>(j)]; }
  const Vector& output_weights(Eigen::Index j) const { return output_[static_cast<std::size_t>(j)]; }

  /// Pre-activation u_r^T x, accumulated left to right.
  static double preactivation(const Matrix& U, Eigen::Index r, const Eigen::Ref<const Vector>& x) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k) s += U(r, k) * x(k);
    return s;
  }

  double forward_coordinate(Eigen::Index j, const Eigen::Ref<const Vector>& x) const {
    const Matrix& U = hidden(j);
    const Vector& a = output_weights(j);
    ExactSum acc;
    for (Eigen::Index r = 0; r < U.rows(); ++r) {
      const double pre = preactivation(U, r, x);
      if (pre > 0.0) acc.add(a(r) * pre);
    }
    return acc.result();
  }

  Vector forward(const Eigen::Ref<const Vector>& x) const {
    require(x.size() == input_dim(), ErrorKind::DimensionMismatch,
            "network input has " + std::to_string(x.size()) + " entries, expected " + std::to_string(input_dim()));
    Vector out(output_dim());
    for (Eigen::Index j = 0; j < output_dim(); ++j) out(j) = forward_coordinate(j, x);
    return out;
  }

  Vector forward(const MixtureWeights& alpha) const { return forward(alpha.values()); }

  /// Gradient of 1/2 |h(x) - target|^2 w.r.t. every U^j, given the residual
  /// h(x) - target. Row r of U^j gets a_j(r) 1{u_r^T x > 0} residual_j x^T.
  std::vector<Matrix> hidden_grad(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& residual) const {
    require(x.size() == input_dim() && residual.size() == output_dim(), ErrorKind::DimensionMismatch,
            "hidden_grad input or residual has the wrong length");
    std::vector<Matrix> grads;
    grads.reserve(hidden_.size());
    for (Eigen::Index j = 0; j < output_dim(); ++j) {
      const Matrix& U = hidden(j);
      Matrix g = Matrix::Zero(U.rows(), U.cols());
      for (Eigen::Index r = 0; r < U.rows(); ++r)
        if (preactivation(U, r, x) > 0.0) g.row(r) = (output_weights(j)(r) * residual(j)) * x.transpose();
      grads.push_back(std::move(g));
    }
    return grads;
  }

  friend bool operator==(const TwoLayerNet& a, const TwoLayerNet& b) {
    return a.hidden_ == b.hidden_ && a.output_ == b.output_;
  }

 private:
  std::vector<Matrix> hidden_;
  std::vector<Vector> output_;
};

/// Symmetric initialization: the first m/2 rows of every U^j are i.i.d.
/// standard Gaussian, the last m/2 copy them, and a_j is +1/sqrt(m) on the
/// first half and -1/sqrt(m) on the second, so h is identically zero.
inline TwoLayerNet init_net(Eigen::Index width, Eigen::Index input_dim, Eigen::Index output_dim, std::uint64_t seed) {
  require(width >= 2 && width % 2 == 0, ErrorKind::InvalidInput, "network width must be even");
  require(input_dim >= 1 && output_dim >= 1, ErrorKind::InvalidInput, "network dimensions must be positive");
  RngStream rng(seed, streams::kNetInit);
  const Eigen::Index half = width / 2;
  const double scale = 1.0 / std::sqrt(static_cast<double>(width));
  std::vector<Matrix> hidden;
  std::vector<Vector> output;
  for (Eigen::Index j = 0; j < output_dim; ++j) {
    Matrix U(width, input_dim);
    for (Eigen::Index r = 0; r < half; ++r)
      for (Eigen::Index k = 0; k < input_dim; ++k) U(r, k) = rng.normal();
    U.bottomRows(half) = U.topRows(half);
    Vector a(width);
    a.head(half).setConstant(scale);
    a.tail(half).setConstant(-scale);
    hidden.push_back(std::move(U));
    output.push_back(std::move(a));
  }
  return TwoLayerNet(std::move(hidden), std::move(output));
}

/// n i.i.d. draws from Dirichlet(1, ..., 1).
inline std::vector<MixtureWeights> sample_mixtures(std::size_t n, Eigen::Index dim, std::uint64_t seed,
                                                   std::uint64_t stream = streams::kTrainAlphas) {
  RngStream rng(seed, stream);
  std::vector<MixtureWeights> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = rng.dirichlet_ones(static_cast<std::size_t>(dim));
    out.emplace_back(Eigen::Map<const Vector>(v.data(), dim));
  }
  return out;
}

/// Monte-Carlo estimate of E |h(alpha) - w*(alpha)|^2 under Dirichlet(1),
/// with the closed-form quadratic minimizer as ground truth.
template <class Predictor>
double excess_risk(const Predictor& predictor, std::span<const LossModel> suite, std::size_t n_test,
                   std::uint64_t seed, double radius = kDefaultRadius) {
  require(n_test >= 1, ErrorKind::InvalidInput, "excess risk needs at least one test point");
  const auto tests = sample_mixtures(n_test, static_cast<Eigen::Index>(suite.size()), seed, streams::kTestAlphas);
  double total = 0.0;
  for (const auto& alpha : tests) {
    const Vector truth = closed_form_wstar(suite, alpha, radius).params.values();
    total += (Vector(predictor(alpha)) - truth).squaredNorm();
  }
  return total / static_cast<double>(n_test);
}

inline double excess_risk(const TwoLayerNet& net, std::span<const LossModel> suite, std::size_t n_test,
                          std::uint64_t seed, double radius = kDefaultRadius) {
  return excess_risk([&](const MixtureWeights& a) { return net.forward(a); }, suite, n_test, seed, radius);
}

struct NetTrainConfig {
  Eigen::Index width = 512;
  /// Outer (network) step size; the convergence analysis needs eta <= 1/2.
  double eta = 0.5;
  std::size_t outer_steps = 1000;
  /// K: label-refinement GD steps per outer iteration.
  std::size_t label_steps = 1;
  /// Label-refinement step; zero means 1/L_f of the suite.
  double label_step = 0.0;
  std::uint64_t seed = 0;
  double radius = kDefaultRadius;
  /// Trace row every this many outer steps (0 disables the trace).
  std::size_t trace_every = 0;
  /// Test mixtures for the trace's excess risk (quadratic suites only).
  std::size_t trace_test_size = 0;

  void validate() const {
    require(width >= 2 && width % 2 == 0, ErrorKind::Config, "width must be even");
    require(eta > 0.0 && eta <= 0.5, ErrorKind::Config, "eta must lie in (0, 1/2]");
    require(label_step >= 0.0 && std::isfinite(label_step), ErrorKind::Config, "label_step must be nonnegative");
    require(radius > 0.0, ErrorKind::Config, "radius must be positive");
  }
};

struct TraceRow {
  std::size_t t;
  double empirical_risk;
  /// Mean |w_i^t - w*(alpha_i)|; NaN when no closed form is available.
  double label_gap_mean;
  /// NaN when not evaluated.
  double test_excess_risk;
};

struct TrainResult {
  TwoLayerNet net;
  std::vector<ModelParams> labels;
  std::vector<TraceRow> trace;
  std::size_t label_grad_evals = 0;
  /// Per-sample forward+backward network passes.
  std::size_t net_passes = 0;
};

/// Bilevel GD: each outer iteration takes one full-batch step on
/// (1/n) sum_i |h(alpha_i) - w_i|^2 and then refines every label w_i by K
/// projected-GD steps warm-started at its current value. Labels start at
/// the origin.
inline TrainResult train(const std::vector<MixtureWeights>& alphas, std::span<const LossModel> suite,
                         const NetTrainConfig& cfg) {
  cfg.validate();
  require(!alphas.empty(), ErrorKind::InvalidInput, "training needs at least one mixture");
  require(!suite.empty(), ErrorKind::InvalidInput, "empty loss suite");
  const auto n_in = static_cast<Eigen::Index>(suite.size());
  const Eigen::Index d = suite.front().dim();
  for (const auto& a : alphas) check_suite(suite, a);

  const bool closed_form = std::all_of(suite.begin(), suite.end(), [](const LossModel& m) { return m.as_quadratic(); });
  GdConfig gd = GdConfig::for_suite(suite, cfg.label_steps, cfg.radius);
  if (cfg.label_step > 0.0) gd.step = cfg.label_step;

  const std::size_t n = alphas.size();
  TrainResult result{init_net(cfg.width, n_in, d, cfg.seed), {}, {}, 0, 0};
  result.labels.assign(n, ModelParams::zero(d, cfg.radius));
  std::vector<Vector> truth;
  if (closed_form)
    for (const auto& a : alphas) truth.push_back(closed_form_wstar(suite, a, cfg.radius).params.values());

  TwoLayerNet& net = result.net;
  const Eigen::Index m = net.width();
  const double grad_scale = 2.0 / static_cast<double>(n);
  std::vector<Matrix> grads(static_cast<std::size_t>(d), Matrix::Zero(m, n_in));

  auto trace_row = [&](std::size_t t, double risk) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    TraceRow row{t, risk, nan, nan};
    if (closed_form) {
      double gap = 0.0;
      for (std::size_t i = 0; i < n; ++i) gap += (result.labels[i].values() - truth[i]).norm();
      row.label_gap_mean = gap / static_cast<double>(n);
      if (cfg.trace_test_size > 0) row.test_excess_risk = excess_risk(net, suite, cfg.trace_test_size, cfg.seed, cfg.radius);
    }
    result.trace.push_back(row);
  };

  Matrix inputs(static_cast<Eigen::Index>(n), n_in);  // row i = alpha_i
  for (std::size_t i = 0; i < n; ++i) inputs.row(static_cast<Eigen::Index>(i)) = alphas[i].values().transpose();
  Matrix gated(m, static_cast<Eigen::Index>(n));

  for (std::size_t t = 0; t < cfg.outer_steps; ++t) {
    // gated(r, i) = a_r 1{u_r^T alpha_i > 0} (h_j(alpha_i) - w_i(j)), per output j.
    double risk = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const Matrix& U = net.hidden(j);
      const Vector& a = net.output_weights(j);
      for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const Vector& x = alphas[i].values();
        ExactSum acc;
        for (Eigen::Index r = 0; r < m; ++r) {
          const double pre = TwoLayerNet::preactivation(U, r, x);
          const bool active = pre > 0.0;
          if (active) acc.add(a(r) * pre);
          gated(r, ii) = active ? a(r) : 0.0;
        }
        const double res = acc.result() - result.labels[i].values()(j);
        gated.col(ii) *= res;
        risk += res * res;
      }
      grads[static_cast<std::size_t>(j)].noalias() = gated * inputs;
    }
    risk /= static_cast<double>(n);
    if (cfg.trace_every > 0 && t % cfg.trace_every == 0) trace_row(t, risk);

    for (Eigen::Index j = 0; j < d; ++j) net.hidden(j) -= (cfg.eta * grad_scale) * grads[static_cast<std::size_t>(j)];
    result.net_passes += 2 * n;

    for (std::size_t i = 0; i < n; ++i) {
      auto refined = gd_solve(result.labels[i], alphas[i], suite, gd);
      result.label_grad_evals += refined.grad_evals;
      result.labels[i] = std::move(refined.params);
    }
  }
  if (cfg.trace_every > 0) {
    double risk = 0.0;
    for (std::size_t i = 0; i < n; ++i) risk += (net.forward(alphas[i]) - result.labels[i].values()).squaredNorm();
    trace_row(cfg.outer_steps, risk / static_cast<double>(n));
  }
  return result;
}

inline void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path,
                            const std::string& comment = {}) {
  CsvWriter out(path, {"t", "empirical_risk", "label_gap_mean", "test_excess_risk"}, comment);
  for (const auto& row : trace) out.cell(row.t).cell(row.empirical_risk).cell(row.label_gap_mean).cell(row.test_excess_risk).end_row();
}

// ---------------------------------------------------------------------------
// Checkpoints: {d, m, N, a: [[...]], U: [[[...]]]}
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const TwoLayerNet& net) {
  nlohmann::json j;
  j["d"] = net.output_dim();
  j["m"] = net.width();
  j["N"] = net.input_dim();
  j["a"] = nlohmann::json::array();
  j["U"] = nlohmann::json::array();
  for (Eigen::Index o = 0; o < net.output_dim(); ++o) {
    const Vector& a = net.output_weights(o);
    j["a"].push_back(std::vector<double>(a.data(), a.data() + a.size()));
    nlohmann::json rows = nlohmann::json::array();
    const Matrix& U = net.hidden(o);
    for (Eigen::Index r = 0; r < U.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(U.cols()));
      for (Eigen::Index k = 0; k < U.cols(); ++k) row[static_cast<std::size_t>(k)] = U(r, k);
      rows.push_back(std::move(row));
    }
    j["U"].push_back(std::move(rows));
  }
  return j;
}

inline TwoLayerNet net_from_json(const nlohmann::json& j) {
  try {
    const auto d = j.at("d").get<Eigen::Index>();
    const auto m = j.at("m").get<Eigen::Index>();
    const auto n = j.at("N").get<Eigen::Index>();
    require(static_cast<Eigen::Index>(j.at("a").size()) == d && static_cast<Eigen::Index>(j.at("U").size()) == d,
            ErrorKind::InvalidInput, "checkpoint layer count does not match d");
    std::vector<Matrix> hidden;
    std::vector<Vector> output;
    for (Eigen::Index o = 0; o < d; ++o) {
      const auto a = j.at("a").at(static_cast<std::size_t>(o)).get<std::vector<double>>();
      require(static_cast<Eigen::Index>(a.size()) == m, ErrorKind::InvalidInput, "checkpoint output layer has the wrong width");
      output.emplace_back(Eigen::Map<const Vector>(a.data(), m));
      const auto& rows = j.at("U").at(static_cast<std::size_t>(o));
      require(static_cast<Eigen::Index>(rows.size()) == m, ErrorKind::InvalidInput, "checkpoint hidden layer has the wrong width");
      Matrix U(m, n);
      for (Eigen::Index r = 0; r < m; ++r) {
        const auto row = rows.at(static_cast<std::size_t>(r)).get<std::vector<double>>();
        require(static_cast<Eigen::Index>(row.size()) == n, ErrorKind::InvalidInput, "checkpoint row has the wrong length");
        for (Eigen::Index k = 0; k < n; ++k) U(r, k) = row[static_cast<std::size_t>(k)];
      }
      hidden.push_back(std::move(U));
    }
    return TwoLayerNet(std::move(hidden), std::move(output));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidInput, std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const TwoLayerNet& net, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path);
  out << to_json(net).dump(1) << '\n';
}

inline TwoLayerNet load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidInput, path + ": " + e.what());
  }
  return net_from_json(j);
}

}  // namespace mixopt
