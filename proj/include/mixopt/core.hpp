#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mixopt/error.hpp"

namespace mixopt {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Default L2 radius of the parameter domain W.
inline constexpr double kDefaultRadius = 10.0;
inline constexpr double kSimplexTolerance = 1e-9;
inline constexpr double kBallTolerance = 1e-9;

inline bool all_finite(const Eigen::Ref<const Vector>& v) { return v.allFinite(); }

/// A point on the probability simplex.
class MixtureWeights {
 public:
  explicit MixtureWeights(Vector values) : values_(std::move(values)) {
    require(values_.size() >= 1, ErrorKind::InvalidInput, "mixture weights need at least one entry");
    require(all_finite(values_), ErrorKind::InvalidInput, "mixture weights must be finite");
    require(values_.minCoeff() >= 0.0, ErrorKind::InvalidInput, "mixture weights must be nonnegative");
    require(std::abs(values_.sum() - 1.0) <= kSimplexTolerance, ErrorKind::InvalidInput,
            "mixture weights must sum to one");
  }

  static MixtureWeights uniform(Eigen::Index n) {
    return MixtureWeights(Vector::Constant(n, 1.0 / static_cast<double>(n)));
  }

  static MixtureWeights vertex(Eigen::Index n, Eigen::Index j) {
    Vector v = Vector::Zero(n);
    v(j) = 1.0;
    return MixtureWeights(std::move(v));
  }

  const Vector& values() const noexcept { return values_; }
  Eigen::Index size() const noexcept { return values_.size(); }
  double operator[](Eigen::Index j) const { return values_(j); }

  friend bool operator==(const MixtureWeights& a, const MixtureWeights& b) {
    return a.values_ == b.values_;
  }

 private:
  Vector values_;
};

/// A hypothesis parameter vector inside the L2 ball of radius `domain_radius`.
class ModelParams {
 public:
  ModelParams(Vector values, double domain_radius)
      : values_(std::move(values)), radius_(domain_radius) {
    require(radius_ > 0.0, ErrorKind::InvalidInput, "domain radius must be positive");
    require(all_finite(values_), ErrorKind::InvalidInput, "model parameters must be finite");
    require(values_.norm() <= radius_ + kBallTolerance, ErrorKind::InvalidInput,
            "model parameters lie outside the parameter domain");
  }

  static ModelParams zero(Eigen::Index d, double domain_radius) {
    return ModelParams(Vector::Zero(d), domain_radius);
  }

  const Vector& values() const noexcept { return values_; }
  double domain_radius() const noexcept { return radius_; }
  Eigen::Index size() const noexcept { return values_.size(); }

 private:
  Vector values_;
  double radius_;
};

/// Euclidean projection onto the probability simplex (sort-and-threshold).
inline MixtureWeights project_simplex(const Eigen::Ref<const Vector>& v) {
  require(v.size() >= 1, ErrorKind::InvalidInput, "cannot project an empty vector onto the simplex");
  require(all_finite(v), ErrorKind::InvalidInput, "simplex projection input must be finite");
  const auto n = static_cast<std::size_t>(v.size());
  std::vector<double> sorted(v.data(), v.data() + n);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());

  double cumulative = 0.0;
  double threshold = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    cumulative += sorted[k];
    const double candidate = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (sorted[k] - candidate > 0.0) threshold = candidate;
  }
  Vector out = (v.array() - threshold).max(0.0).matrix();
  // Rounding in the threshold can leave the sum a few ulps away from one.
  out /= out.sum();
  return MixtureWeights(std::move(out));
}

/// Projection onto the centered L2 ball of the given radius.
inline ModelParams project_ball(const Eigen::Ref<const Vector>& v, double radius) {
  require(radius > 0.0, ErrorKind::InvalidInput, "ball radius must be positive");
  require(all_finite(v), ErrorKind::InvalidInput, "ball projection input must be finite");
  const double norm = v.norm();
  if (norm <= radius) return ModelParams(Vector(v), radius);
  return ModelParams(Vector(v * (radius / norm)), radius);
}

/// Smooth surrogate of |x|: sqrt(x^2 + c).
class SmoothAbs {
 public:
  static constexpr double kDefaultC = 1e-4;

  explicit SmoothAbs(double c = kDefaultC) : c_(c) {
    require(c > 0.0 && std::isfinite(c), ErrorKind::InvalidInput, "smoothing constant must be positive");
  }

  double c() const noexcept { return c_; }
  double value(double x) const { return std::sqrt(x * x + c_); }
  double deriv(double x) const { return x / std::sqrt(x * x + c_); }
  double second_deriv(double x) const {
    const double s = x * x + c_;
    return c_ / (s * std::sqrt(s));
  }
  /// Lipschitz constant of the value (G_g).
  double lipschitz() const noexcept { return 1.0; }
  /// Lipschitz constant of the derivative (L_g).
  double smoothness() const { return 1.0 / std::sqrt(c_); }

 private:
  double c_;
};

inline double smooth_abs(double x, const SmoothAbs& g) {
  require(std::isfinite(x), ErrorKind::InvalidInput, "smooth_abs input must be finite");
  return g.value(x);
}

inline double smooth_abs_deriv(double x, const SmoothAbs& g) {
  require(std::isfinite(x), ErrorKind::InvalidInput, "smooth_abs input must be finite");
  return g.deriv(x);
}

/// Correctly rounded sum of finite doubles (Shewchuk partials, as in fsum).
///
/// The result does not depend on the order of the terms, and a multiset of
/// cancelling pairs sums to exactly zero.
class ExactSum {
 public:
  void add(double x) {
    std::size_t i = 0;
    for (std::size_t k = 0; k < count_; ++k) {
      double y = partials_[k];
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials_[i++] = lo;
      x = hi;
    }
    count_ = i;
    partials_[count_++] = x;
  }

  double result() const {
    if (count_ == 0) return 0.0;
    std::size_t n = count_;
    double hi = partials_[--n];
    double lo = 0.0;
    while (n > 0) {
      const double x = hi;
      const double y = partials_[--n];
      hi = x + y;
      const double yr = hi - x;
      lo = y - yr;
      if (lo != 0.0) break;
    }
    // Round-half-even correction across the remaining partials.
    if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
      const double y = lo * 2.0;
      const double x = hi + y;
      const double yr = x - hi;
      if (y == yr) hi = x;
    }
    return hi;
  }

 private:
  // Non-overlapping partials of finite doubles never exceed ~40 entries.
  std::array<double, 64> partials_{};
  std::size_t count_ = 0;
};

inline double exact_sum(std::span<const double> values) {
  ExactSum acc;
  for (double v : values) acc.add(v);
  return acc.result();
}

}  // namespace mixopt
