#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "mixopt/core.hpp"
#include "mixopt/error.hpp"
#include "mixopt/format.hpp"
#include "mixopt/rng.hpp"

namespace mixopt {

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// Rows of features with one label per row (class index or real target).
class Dataset {
 public:
  Dataset() = default;

  Dataset(Matrix features, Vector labels)
      : features_(std::move(features)), labels_(std::move(labels)) {
    require(features_.rows() == labels_.size(), ErrorKind::DimensionMismatch,
            "dataset has " + std::to_string(features_.rows()) + " feature rows but " +
                std::to_string(labels_.size()) + " labels");
  }

  const Matrix& features() const noexcept { return features_; }
  const Vector& labels() const noexcept { return labels_; }
  std::size_t sample_count() const noexcept { return static_cast<std::size_t>(labels_.size()); }
  Eigen::Index feature_count() const noexcept { return features_.cols(); }
  bool empty() const noexcept { return labels_.size() == 0; }

  /// Rows selected by index, in the given order.
  Dataset subset(std::span<const std::size_t> rows) const {
    Matrix x(static_cast<Eigen::Index>(rows.size()), features_.cols());
    Vector y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto r = static_cast<Eigen::Index>(rows[k]);
      x.row(static_cast<Eigen::Index>(k)) = features_.row(r);
      y(static_cast<Eigen::Index>(k)) = labels_(r);
    }
    return Dataset(std::move(x), std::move(y));
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.features_ == b.features_ && a.labels_ == b.labels_;
  }

 private:
  Matrix features_;
  Vector labels_;
};

/// Per-feature affine map to zero mean and unit variance, fitted on pooled data.
struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer fit(std::span<const Dataset> datasets) {
    require(!datasets.empty(), ErrorKind::EmptyDataset, "cannot standardize zero datasets");
    const Eigen::Index p = datasets.front().feature_count();
    Vector sum = Vector::Zero(p);
    Vector sq = Vector::Zero(p);
    double n = 0.0;
    for (const auto& ds : datasets) {
      require(ds.feature_count() == p, ErrorKind::DimensionMismatch, "feature count differs between datasets");
      sum += ds.features().colwise().sum().transpose();
      sq += ds.features().array().square().colwise().sum().matrix().transpose();
      n += static_cast<double>(ds.sample_count());
    }
    require(n > 0.0, ErrorKind::EmptyDataset, "cannot standardize empty datasets");
    Standardizer s;
    s.mean = sum / n;
    Vector var = (sq / n).array() - s.mean.array().square();
    s.scale = var.array().max(0.0).sqrt().matrix();
    for (Eigen::Index k = 0; k < p; ++k)
      if (s.scale(k) <= 1e-12) s.scale(k) = 1.0;
    return s;
  }

  Dataset apply(const Dataset& ds) const {
    Matrix x = ds.features();
    x.rowwise() -= mean.transpose();
    x = x.array().rowwise() / scale.transpose().array();
    return Dataset(std::move(x), ds.labels());
  }
};

// ---------------------------------------------------------------------------
// Loss models
// ---------------------------------------------------------------------------

enum class LossKind { Quadratic, Logistic, Softmax };

inline std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Quadratic: return "quadratic";
    case LossKind::Logistic: return "logistic";
    case LossKind::Softmax: return "softmax";
  }
  return "unknown";
}

/// f(w) = 1/2 (w - c)^T A (w - c). `nominal_samples` stands in for m_j.
struct QuadraticLoss {
  Matrix A;
  Vector center;
  std::size_t nominal_samples = 100;
};

/// Mean binary log-loss on labels {0, 1} plus (lambda/2)|w|^2.
/// Parameters are (weights, bias); the bias is the last coordinate.
struct LogisticLoss {
  Dataset data;
  double lambda = 0.1;
};

/// Mean multiclass cross-entropy plus (lambda/2)|w|^2. Parameters are a
/// row-major classes x (features + 1) matrix, bias last in each row.
struct SoftmaxLoss {
  Dataset data;
  int classes = 2;
  double lambda = 0.1;
};

using Batch = std::vector<std::size_t>;

class LossModel {
 public:
  static LossModel quadratic(Matrix A, Vector center, std::size_t nominal_samples = 100) {
    require(A.rows() == A.cols() && A.rows() == center.size(), ErrorKind::DimensionMismatch,
            "quadratic loss needs a square matrix matching the center dimension");
    require(nominal_samples >= 1, ErrorKind::InvalidInput, "nominal sample count must be positive");
    require((A - A.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + A.cwiseAbs().maxCoeff()),
            ErrorKind::InvalidInput, "quadratic loss matrix must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(A, Eigen::EigenvaluesOnly);
    require(eig.eigenvalues().minCoeff() > 0.0, ErrorKind::InvalidInput,
            "quadratic loss matrix must be positive definite");
    return LossModel(QuadraticLoss{std::move(A), std::move(center), nominal_samples});
  }

  static LossModel logistic(Dataset data, double lambda = 0.1) {
    require(lambda > 0.0, ErrorKind::InvalidInput, "logistic loss needs lambda > 0");
    require(!data.empty(), ErrorKind::EmptyDataset, "logistic loss needs a non-empty dataset");
    for (Eigen::Index i = 0; i < data.labels().size(); ++i) {
      const double y = data.labels()(i);
      require(y == 0.0 || y == 1.0, ErrorKind::InvalidInput, "logistic labels must be 0 or 1");
    }
    return LossModel(LogisticLoss{std::move(data), lambda});
  }

  static LossModel softmax(Dataset data, int classes, double lambda = 0.1) {
    require(lambda > 0.0, ErrorKind::InvalidInput, "softmax loss needs lambda > 0");
    require(classes >= 2, ErrorKind::InvalidInput, "softmax loss needs at least two classes");
    require(!data.empty(), ErrorKind::EmptyDataset, "softmax loss needs a non-empty dataset");
    for (Eigen::Index i = 0; i < data.labels().size(); ++i) {
      const double y = data.labels()(i);
      require(y >= 0.0 && y < classes && y == std::floor(y), ErrorKind::InvalidInput,
              "softmax labels must be class indices in [0, classes)");
    }
    return LossModel(SoftmaxLoss{std::move(data), classes, lambda});
  }

  LossKind kind() const noexcept { return static_cast<LossKind>(impl_.index()); }

  const QuadraticLoss* as_quadratic() const noexcept { return std::get_if<QuadraticLoss>(&impl_); }
  const LogisticLoss* as_logistic() const noexcept { return std::get_if<LogisticLoss>(&impl_); }
  const SoftmaxLoss* as_softmax() const noexcept { return std::get_if<SoftmaxLoss>(&impl_); }

  /// The dataset behind a data-driven loss, or nullptr for quadratics.
  const Dataset* dataset() const noexcept {
    if (auto* l = as_logistic()) return &l->data;
    if (auto* s = as_softmax()) return &s->data;
    return nullptr;
  }

  bool has_data() const noexcept { return dataset() != nullptr; }

  /// Parameter dimension d.
  Eigen::Index dim() const noexcept {
    if (auto* q = as_quadratic()) return q->center.size();
    if (auto* l = as_logistic()) return l->data.feature_count() + 1;
    const auto* s = as_softmax();
    return static_cast<Eigen::Index>(s->classes) * (s->data.feature_count() + 1);
  }

  /// m_j: rows of the dataset, or the nominal count of a quadratic.
  std::size_t sample_count() const noexcept {
    if (auto* q = as_quadratic()) return q->nominal_samples;
    return dataset()->sample_count();
  }

  double lambda() const noexcept {
    if (auto* l = as_logistic()) return l->lambda;
    if (auto* s = as_softmax()) return s->lambda;
    return 0.0;
  }

  double risk(const Eigen::Ref<const Vector>& w) const {
    check_dim(w);
    if (auto* q = as_quadratic()) return quadratic_value(*q, w);
    const std::size_t n = sample_count();
    return data_risk(w, n, [](std::size_t k) { return k; });
  }

  Vector gradient(const Eigen::Ref<const Vector>& w) const {
    check_dim(w);
    if (auto* q = as_quadratic()) return q->A * (w - q->center);
    const std::size_t n = sample_count();
    return data_gradient(w, n, [](std::size_t k) { return k; });
  }

  /// Minibatch estimate; quadratics ignore the batch.
  double risk_on(const Eigen::Ref<const Vector>& w, std::span<const std::size_t> batch) const {
    check_dim(w);
    if (auto* q = as_quadratic()) return quadratic_value(*q, w);
    check_batch(batch);
    return data_risk(w, batch.size(), [&](std::size_t k) { return batch[k]; });
  }

  Vector gradient_on(const Eigen::Ref<const Vector>& w, std::span<const std::size_t> batch) const {
    check_dim(w);
    if (auto* q = as_quadratic()) return q->A * (w - q->center);
    check_batch(batch);
    return data_gradient(w, batch.size(), [&](std::size_t k) { return batch[k]; });
  }

  /// Predicted class (softmax), predicted {0,1} label (logistic), for one feature row.
  int predict(const Eigen::Ref<const Vector>& w, const Eigen::Ref<const Vector>& x) const {
    check_dim(w);
    if (const auto* l = as_logistic()) {
      const Eigen::Index p = l->data.feature_count();
      return w.head(p).dot(x) + w(p) > 0.0 ? 1 : 0;
    }
    const auto* s = as_softmax();
    require(s != nullptr, ErrorKind::InvalidInput, "quadratic losses do not predict labels");
    const Eigen::Index p = s->data.feature_count();
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < s->classes; ++k) {
      const auto row = w.segment(static_cast<Eigen::Index>(k) * (p + 1), p + 1);
      const double score = row.head(p).dot(x) + row(p);
      if (score > best_score) {
        best_score = score;
        best = k;
      }
    }
    return best;
  }

 private:
  using Impl = std::variant<QuadraticLoss, LogisticLoss, SoftmaxLoss>;

  explicit LossModel(Impl impl) : impl_(std::move(impl)) {}

  void check_dim(const Eigen::Ref<const Vector>& w) const {
    require(w.size() == dim(), ErrorKind::DimensionMismatch,
            "parameter dimension " + std::to_string(w.size()) + " does not match loss dimension " +
                std::to_string(dim()));
  }

  void check_batch(std::span<const std::size_t> batch) const {
    require(!batch.empty(), ErrorKind::EmptyDataset, "minibatch is empty");
    const std::size_t n = sample_count();
    for (auto i : batch)
      require(i < n, ErrorKind::InvalidInput, "minibatch index out of range");
  }

  static double quadratic_value(const QuadraticLoss& q, const Eigen::Ref<const Vector>& w) {
    const Vector r = w - q.center;
    return 0.5 * r.dot(q.A * r);
  }

  static double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

  static double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
  }

  template <class IndexFn>
  double data_risk(const Eigen::Ref<const Vector>& w, std::size_t count, IndexFn index) const {
    double total = 0.0;
    if (const auto* l = as_logistic()) {
      const Eigen::Index p = l->data.feature_count();
      for (std::size_t k = 0; k < count; ++k) {
        const auto i = static_cast<Eigen::Index>(index(k));
        const double z = l->data.features().row(i).dot(w.head(p)) + w(p);
        total += softplus(z) - l->data.labels()(i) * z;
      }
    } else {
      const auto* s = as_softmax();
      const Eigen::Index p = s->data.feature_count();
      const auto weights = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          w.data(), s->classes, p + 1);
      Vector logits(s->classes);
      for (std::size_t k = 0; k < count; ++k) {
        const auto i = static_cast<Eigen::Index>(index(k));
        logits = weights.leftCols(p) * s->data.features().row(i).transpose() + weights.col(p);
        const double peak = logits.maxCoeff();
        const double lse = peak + std::log((logits.array() - peak).exp().sum());
        total += lse - logits(static_cast<Eigen::Index>(s->data.labels()(i)));
      }
    }
    return total / static_cast<double>(count) + 0.5 * lambda() * w.squaredNorm();
  }

  template <class IndexFn>
  Vector data_gradient(const Eigen::Ref<const Vector>& w, std::size_t count, IndexFn index) const {
    Vector g = Vector::Zero(w.size());
    if (const auto* l = as_logistic()) {
      const Eigen::Index p = l->data.feature_count();
      for (std::size_t k = 0; k < count; ++k) {
        const auto i = static_cast<Eigen::Index>(index(k));
        const double z = l->data.features().row(i).dot(w.head(p)) + w(p);
        const double r = sigmoid(z) - l->data.labels()(i);
        g.head(p) += r * l->data.features().row(i).transpose();
        g(p) += r;
      }
    } else {
      const auto* s = as_softmax();
      const Eigen::Index p = s->data.feature_count();
      const auto weights = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          w.data(), s->classes, p + 1);
      auto grad = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          g.data(), s->classes, p + 1);
      Vector logits(s->classes);
      for (std::size_t k = 0; k < count; ++k) {
        const auto i = static_cast<Eigen::Index>(index(k));
        const auto x = s->data.features().row(i);
        logits = weights.leftCols(p) * x.transpose() + weights.col(p);
        Vector prob = (logits.array() - logits.maxCoeff()).exp().matrix();
        prob /= prob.sum();
        prob(static_cast<Eigen::Index>(s->data.labels()(i))) -= 1.0;
        grad.leftCols(p) += prob * x;
        grad.col(p) += prob;
      }
    }
    g /= static_cast<double>(count);
    g += lambda() * w;
    return g;
  }

  Impl impl_;
};

/// Uniform minibatch of size B drawn with replacement. Quadratics need no
/// samples and get an empty batch.
inline Batch sample_batch(const LossModel& model, std::size_t batch_size, RngStream& rng) {
  require(batch_size >= 1, ErrorKind::InvalidInput, "batch size must be at least one");
  if (!model.has_data()) return {};
  const std::size_t n = model.sample_count();
  require(n >= 1, ErrorKind::EmptyDataset, "cannot sample from an empty dataset");
  Batch batch(batch_size);
  for (auto& i : batch) i = rng.uniform_index(n);
  return batch;
}

/// Every row exactly once (the full batch).
inline Batch full_batch(const LossModel& model) {
  Batch batch(model.has_data() ? model.sample_count() : 0);
  std::iota(batch.begin(), batch.end(), std::size_t{0});
  return batch;
}

// ---------------------------------------------------------------------------
// Curvature constants
// ---------------------------------------------------------------------------

struct CurvatureConstants {
  double gradient_bound;  // G_f
  double smoothness;      // L_f
  double strong_convexity;  // mu_f

  double condition_number() const { return smoothness / strong_convexity; }
};

namespace detail {
inline double max_augmented_sq_norm(const Dataset& ds) {
  return (ds.features().rowwise().squaredNorm().array() + 1.0).maxCoeff();
}
}  // namespace detail

/// Gradient bound over the ball of radius `radius`, smoothness and strong
/// convexity. Exact for quadratics; analytic upper/lower bounds otherwise.
inline CurvatureConstants estimate_constants(const LossModel& model, double radius) {
  require(radius > 0.0, ErrorKind::InvalidInput, "domain radius must be positive");
  if (const auto* q = model.as_quadratic()) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(q->A, Eigen::EigenvaluesOnly);
    const double lmin = eig.eigenvalues().minCoeff();
    const double lmax = eig.eigenvalues().maxCoeff();
    return {lmax * (radius + q->center.norm()), lmax, lmin};
  }
  const double lambda = model.lambda();
  const double xsq = detail::max_augmented_sq_norm(*model.dataset());
  if (model.kind() == LossKind::Logistic)
    return {std::sqrt(xsq) + lambda * radius, 0.25 * xsq + lambda, lambda};
  // Softmax Hessian block diag(p) - pp^T has spectral norm at most 1/2.
  return {std::sqrt(2.0 * xsq) + lambda * radius, 0.5 * xsq + lambda, lambda};
}

/// Worst-case constants over a family: max G_f, max L_f, min mu_f.
inline CurvatureConstants suite_constants(std::span<const LossModel> suite, double radius) {
  require(!suite.empty(), ErrorKind::InvalidInput, "empty loss suite");
  CurvatureConstants out = estimate_constants(suite.front(), radius);
  for (const auto& model : suite.subspan(1)) {
    const auto c = estimate_constants(model, radius);
    out.gradient_bound = std::max(out.gradient_bound, c.gradient_bound);
    out.smoothness = std::max(out.smoothness, c.smoothness);
    out.strong_convexity = std::min(out.strong_convexity, c.strong_convexity);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weighted risks and the quadratic ground truth
// ---------------------------------------------------------------------------

inline void check_suite(std::span<const LossModel> suite, const MixtureWeights& alpha) {
  require(!suite.empty(), ErrorKind::InvalidInput, "empty loss suite");
  require(alpha.size() == static_cast<Eigen::Index>(suite.size()), ErrorKind::DimensionMismatch,
          "mixture weights have " + std::to_string(alpha.size()) + " entries for " +
              std::to_string(suite.size()) + " sources");
  const Eigen::Index d = suite.front().dim();
  for (const auto& m : suite)
    require(m.dim() == d, ErrorKind::DimensionMismatch, "sources disagree on parameter dimension");
}

/// f_alpha(w) = sum_j alpha_j f_j(w).
inline double weighted_risk(std::span<const LossModel> suite, const MixtureWeights& alpha,
                            const Eigen::Ref<const Vector>& w) {
  double total = 0.0;
  for (std::size_t j = 0; j < suite.size(); ++j) {
    const double a = alpha[static_cast<Eigen::Index>(j)];
    if (a != 0.0) total += a * suite[j].risk(w);
  }
  return total;
}

inline Vector weighted_gradient(std::span<const LossModel> suite, const MixtureWeights& alpha,
                                const Eigen::Ref<const Vector>& w) {
  Vector g = Vector::Zero(w.size());
  for (std::size_t j = 0; j < suite.size(); ++j) {
    const double a = alpha[static_cast<Eigen::Index>(j)];
    if (a != 0.0) g += a * suite[j].gradient(w);
  }
  return g;
}

struct WStarSolution {
  ModelParams params;
  /// True when the unconstrained minimizer left W and projected GD was used.
  bool constrained = false;
};

/// Minimizer of the alpha-weighted sum of quadratics over the ball W.
inline WStarSolution closed_form_wstar(std::span<const LossModel> suite, const MixtureWeights& alpha,
                                       double radius = kDefaultRadius) {
  check_suite(suite, alpha);
  const Eigen::Index d = suite.front().dim();
  Matrix H = Matrix::Zero(d, d);
  Vector rhs = Vector::Zero(d);
  for (std::size_t j = 0; j < suite.size(); ++j) {
    const auto* q = suite[j].as_quadratic();
    require(q != nullptr, ErrorKind::InvalidInput, "closed-form w* needs quadratic losses");
    const double a = alpha[static_cast<Eigen::Index>(j)];
    H += a * q->A;
    rhs += a * (q->A * q->center);
  }
  Eigen::LLT<Matrix> llt(H);
  require(llt.info() == Eigen::Success, ErrorKind::Internal, "weighted quadratic system is singular");
  Vector w = llt.solve(rhs);
  if (w.norm() <= radius) return {ModelParams(std::move(w), radius), false};

  // Boundary solution: projected GD with step 1/L until the iterate settles.
  Eigen::SelfAdjointEigenSolver<Matrix> eig(H, Eigen::EigenvaluesOnly);
  const double step = 1.0 / eig.eigenvalues().maxCoeff();
  Vector v = project_ball(w, radius).values();
  for (int it = 0; it < 10'000'000; ++it) {
    Vector next = project_ball(v - step * (H * v - rhs), radius).values();
    const double move = (next - v).norm();
    v = std::move(next);
    if (move <= 1e-12) break;
  }
  return {ModelParams(std::move(v), radius), true};
}

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

struct QuadraticSuiteOptions {
  double radius = kDefaultRadius;
  std::size_t nominal_samples = 100;
  /// Upper bound on |c_j|; defaults to radius * mu / (2 L), which keeps every
  /// w*(alpha) strictly inside W.
  std::optional<double> center_scale;
};

/// N random quadratics with spectra inside [mu, L] and centers inside W.
/// For d >= 2 the extreme eigenvalues are pinned to mu and L exactly.
inline std::vector<LossModel> make_quadratic_suite(std::size_t n_sources, Eigen::Index dim, double mu,
                                                   double L, std::uint64_t seed,
                                                   const QuadraticSuiteOptions& options = {},
                                                   std::uint64_t stream = streams::kQuadraticSuite) {
  require(n_sources >= 1 && dim >= 1, ErrorKind::InvalidInput, "suite needs N >= 1 and d >= 1");
  require(mu > 0.0 && mu <= L, ErrorKind::InvalidInput, "curvature must satisfy 0 < mu <= L");
  RngStream rng(seed, stream);
  const double max_center = options.center_scale.value_or(0.5 * options.radius * mu / L);
  std::vector<LossModel> suite;
  suite.reserve(n_sources);
  for (std::size_t j = 0; j < n_sources; ++j) {
    Matrix g(dim, dim);
    for (Eigen::Index r = 0; r < dim; ++r)
      for (Eigen::Index c = 0; c < dim; ++c) g(r, c) = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(g);
    const Matrix Q = qr.householderQ();
    Vector spectrum(dim);
    for (Eigen::Index k = 0; k < dim; ++k) spectrum(k) = rng.uniform(mu, L);
    if (dim >= 2) {
      spectrum(0) = mu;
      spectrum(dim - 1) = L;
    }
    Matrix A = Q * spectrum.asDiagonal() * Q.transpose();
    A = 0.5 * (A + A.transpose()).eval();

    Vector direction(dim);
    for (Eigen::Index k = 0; k < dim; ++k) direction(k) = rng.normal();
    if (direction.norm() == 0.0) direction(0) = 1.0;
    Vector center = direction.normalized() * (max_center * rng.uniform01());
    suite.push_back(LossModel::quadratic(std::move(A), std::move(center), options.nominal_samples));
  }
  return suite;
}

struct GroupedDataOptions {
  Eigen::Index feature_dim = 6;
  /// Spread of the per-slot class means.
  double class_separation = 3.0;
  /// Spread of the per-group offset added to every class mean of that group.
  double group_offset = 0.6;
  /// Per-domain mean shift.
  double domain_shift = 0.3;
  double noise = 2.0;
};

/// Domains split into groups with disjoint class sets. Class slot i of every
/// group sits near the same feature location, so pooling across groups
/// confuses classes while domains within a group agree.
struct GroupedSuite {
  std::vector<Dataset> domains;
  std::vector<int> group_of;
  std::vector<std::vector<int>> group_classes;
  int num_classes = 0;
  Matrix class_means;  // num_classes x feature_dim
  GroupedDataOptions options;

  /// A fresh domain from group g (new domain shift, new samples).
  Dataset sample_domain(int g, std::size_t samples, RngStream& rng) const {
    require(g >= 0 && g < static_cast<int>(group_classes.size()), ErrorKind::InvalidInput,
            "group index out of range");
    const Eigen::Index p = class_means.cols();
    Vector shift(p);
    for (Eigen::Index k = 0; k < p; ++k) shift(k) = options.domain_shift * rng.normal();
    const auto& classes = group_classes[static_cast<std::size_t>(g)];
    Matrix x(static_cast<Eigen::Index>(samples), p);
    Vector y(static_cast<Eigen::Index>(samples));
    for (std::size_t s = 0; s < samples; ++s) {
      const int label = classes[rng.uniform_index(classes.size())];
      const auto r = static_cast<Eigen::Index>(s);
      for (Eigen::Index k = 0; k < p; ++k)
        x(r, k) = class_means(label, k) + shift(k) + options.noise * rng.normal();
      y(r) = label;
    }
    return Dataset(std::move(x), std::move(y));
  }
};

/// Class lists per group: the 0-2 / 3-5 / 6-9 layout for three groups,
/// consecutive triples otherwise.
inline std::vector<std::vector<int>> default_group_classes(int groups) {
  if (groups == 3) return {{0, 1, 2}, {3, 4, 5}, {6, 7, 8, 9}};
  std::vector<std::vector<int>> out;
  for (int g = 0; g < groups; ++g) out.push_back({3 * g, 3 * g + 1, 3 * g + 2});
  return out;
}

inline GroupedSuite make_grouped_classification(int groups, int domains_per_group, int samples_per_domain,
                                                std::uint64_t seed, const GroupedDataOptions& options = {}) {
  require(groups >= 1 && domains_per_group >= 1 && samples_per_domain >= 1, ErrorKind::InvalidInput,
          "grouped classification counts must be positive");
  RngStream rng(seed, streams::kGroupedData);
  GroupedSuite suite;
  suite.options = options;
  suite.group_classes = default_group_classes(groups);
  std::size_t slots = 0;
  for (const auto& cls : suite.group_classes) {
    slots = std::max(slots, cls.size());
    suite.num_classes = std::max(suite.num_classes, *std::max_element(cls.begin(), cls.end()) + 1);
  }
  const Eigen::Index p = options.feature_dim;
  Matrix slot_means(static_cast<Eigen::Index>(slots), p);
  for (Eigen::Index s = 0; s < slot_means.rows(); ++s)
    for (Eigen::Index k = 0; k < p; ++k) slot_means(s, k) = options.class_separation * rng.normal();

  suite.class_means = Matrix::Zero(suite.num_classes, p);
  for (int g = 0; g < groups; ++g) {
    Vector offset(p);
    for (Eigen::Index k = 0; k < p; ++k) offset(k) = options.group_offset * rng.normal();
    const auto& cls = suite.group_classes[static_cast<std::size_t>(g)];
    for (std::size_t s = 0; s < cls.size(); ++s)
      suite.class_means.row(cls[s]) = slot_means.row(static_cast<Eigen::Index>(s)) + offset.transpose();
  }
  for (int g = 0; g < groups; ++g) {
    for (int k = 0; k < domains_per_group; ++k) {
      suite.domains.push_back(suite.sample_domain(g, static_cast<std::size_t>(samples_per_domain), rng));
      suite.group_of.push_back(g);
    }
  }
  return suite;
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

struct CsvSchema {
  std::string label_column = "label";
  /// Empty means every non-label column, in file order.
  std::vector<std::string> feature_columns;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace detail

/// Reads a header-row CSV. Lines starting with '#' are comments.
inline Dataset load_csv(const std::string& path, const CsvSchema& schema = {}) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    for (auto& h : detail::split_csv_line(line)) header.push_back(detail::trim(h));
    break;
  }
  require(!header.empty(), ErrorKind::EmptyDataset, path + ": missing header row");

  auto column_of = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    require(it != header.end(), ErrorKind::InvalidInput, path + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t label_col = column_of(schema.label_column);
  std::vector<std::size_t> feature_cols;
  if (schema.feature_columns.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (c != label_col) feature_cols.push_back(c);
  } else {
    for (const auto& name : schema.feature_columns) feature_cols.push_back(column_of(name));
  }

  std::vector<double> values;
  std::vector<double> labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    require(cells.size() == header.size(), ErrorKind::InvalidInput,
            path + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                " fields, found " + std::to_string(cells.size()));
    auto parse = [&](std::size_t c) {
      const std::string cell = detail::trim(cells[c]);
      const auto parsed = parse_double(cell);
      require(parsed.has_value(), ErrorKind::InvalidInput,
              path + ":" + std::to_string(line_no) + ": non-numeric field '" + cell + "' in column '" +
                  header[c] + "'");
      return *parsed;
    };
    labels.push_back(parse(label_col));
    for (auto c : feature_cols) values.push_back(parse(c));
  }
  require(!labels.empty(), ErrorKind::EmptyDataset, path + ": no data rows");

  const auto n = static_cast<Eigen::Index>(labels.size());
  const auto p = static_cast<Eigen::Index>(feature_cols.size());
  Matrix x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), n, p);
  Vector y = Eigen::Map<const Vector>(labels.data(), n);
  return Dataset(std::move(x), std::move(y));
}

/// Writes `label,f0,...` with shortest round-trip number formatting.
inline void write_csv(const Dataset& ds, const std::string& path, const std::string& comment = {}) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path);
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "label";
  for (Eigen::Index k = 0; k < ds.feature_count(); ++k) out << ",f" << k;
  out << '\n';
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(ds.sample_count()); ++i) {
    out << format_double(ds.labels()(i));
    for (Eigen::Index k = 0; k < ds.feature_count(); ++k) out << ',' << format_double(ds.features()(i, k));
    out << '\n';
  }
}

}  // namespace mixopt
