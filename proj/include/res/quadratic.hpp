#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "res/objective.hpp"

namespace res {

/// Randomized quadratic f(w, theta) = 1/2 w'(A + A diag(theta))w + b'w with
/// A diagonal positive definite and theta uniform on [-theta0, theta0]^n.
///
/// The average function is F(w) = 1/2 w'Aw + b'w, minimized at the solution
/// of A w = -b.
class QuadraticProblem {
 public:
  using sample_type = Vector;
  using batch_type = SampleBatch<Vector>;

  QuadraticProblem(Vector a_diag, Vector b, double theta0,
                   std::optional<std::uint64_t> seed = std::nullopt)
      : a_(std::move(a_diag)), b_(std::move(b)), theta0_(theta0), seed_(seed) {
    if (a_.size() < 1) throw std::invalid_argument("QuadraticProblem: dimension must be >= 1");
    if (b_.size() != a_.size())
      throw std::invalid_argument("QuadraticProblem: diagonal and b differ in length");
    if (!(a_.array() > 0.0).all())
      throw std::invalid_argument("QuadraticProblem: diagonal entries must be positive");
    if (!(theta0_ >= 0.0 && theta0_ < 1.0))
      throw std::invalid_argument("QuadraticProblem: theta0 must lie in [0, 1)");
  }

  Eigen::Index dimension() const noexcept { return a_.size(); }
  const Vector& diagonal() const noexcept { return a_; }
  const Vector& linear_term() const noexcept { return b_; }
  double theta0() const noexcept { return theta0_; }
  /// Seed used by generate_quadratic, if the problem came from there.
  std::optional<std::uint64_t> seed() const noexcept { return seed_; }

  batch_type draw_batch(std::size_t L, Rng& rng) const {
    detail::require_batch(L);
    batch_type batch;
    batch.token = rng.next_u64();
    batch.samples.reserve(L);
    for (std::size_t l = 0; l < L; ++l) {
      Vector theta(dimension());
      for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = rng.uniform(-theta0_, theta0_);
      batch.samples.push_back(std::move(theta));
    }
    return batch;
  }

  double sample_value(const Vector& w, const Vector& theta) const {
    detail::require_dimension(w, dimension(), "sample_value");
    const Vector h = a_.array() * (1.0 + theta.array());
    return 0.5 * (h.array() * w.array().square()).sum() + b_.dot(w);
  }

  Vector sample_gradient(const Vector& w, const Vector& theta) const {
    detail::require_dimension(w, dimension(), "sample_gradient");
    return (a_.array() * (1.0 + theta.array()) * w.array()).matrix() + b_;
  }

  /// (1/L) sum_l grad f(w, theta_l).
  Vector stochastic_gradient(const Vector& w, const batch_type& batch) const {
    detail::require_dimension(w, dimension(), "stochastic_gradient");
    return (instantaneous_hessian_diagonal(batch).array() * w.array()).matrix() + b_;
  }

  /// Diagonal of the Hessian of the batch-averaged function.
  Vector instantaneous_hessian_diagonal(const batch_type& batch) const {
    if (batch.size() == 0) throw std::invalid_argument("empty batch");
    Vector mean_theta = Vector::Zero(dimension());
    for (const auto& theta : batch.samples) mean_theta += theta;
    mean_theta /= static_cast<double>(batch.size());
    return a_.array() * (1.0 + mean_theta.array());
  }

  double exact_objective(const Vector& w) const {
    detail::require_dimension(w, dimension(), "exact_objective");
    return 0.5 * (a_.array() * w.array().square()).sum() + b_.dot(w);
  }

  Vector exact_gradient(const Vector& w) const {
    detail::require_dimension(w, dimension(), "exact_gradient");
    return (a_.array() * w.array()).matrix() + b_;
  }

  /// Stationary point of F: solves A w = -b.
  Vector optimum() const { return (-b_.array() / a_.array()).matrix(); }

  double optimal_value() const { return exact_objective(optimum()); }

  double condition_number() const { return a_.maxCoeff() / a_.minCoeff(); }

  CurvatureBounds curvature_bounds() const {
    return {(1.0 - theta0_) * a_.minCoeff(), (1.0 + theta0_) * a_.maxCoeff(), std::nullopt};
  }

 private:
  Vector a_;
  Vector b_;
  double theta0_;
  std::optional<std::uint64_t> seed_;
};

/// Distribution of the diagonal entries of A.
struct DiagonalLaw {
  enum class Kind { powers_of_ten, uniform };
  Kind kind = Kind::powers_of_ten;
  int xi = 0;

  /// Each a_ii uniform over {1, 10^-1, ..., 10^-xi}.
  static DiagonalLaw powers_of_ten(int xi) {
    if (xi < 0) throw std::invalid_argument("DiagonalLaw: xi must be >= 0");
    return {Kind::powers_of_ten, xi};
  }
  /// Each a_ii uniform on (0, 1]; draws below 1e-12 are rejected.
  static DiagonalLaw uniform() { return {Kind::uniform, 0}; }
};

/// Random quadratic instance. b is uniform on [0, 1]^n.
inline QuadraticProblem generate_quadratic(Eigen::Index n, DiagonalLaw law, double theta0,
                                           std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("generate_quadratic: n must be >= 1");
  Rng rng(seed);
  Vector a(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (law.kind == DiagonalLaw::Kind::powers_of_ten) {
      const auto k = static_cast<int>(rng.index(static_cast<std::uint64_t>(law.xi) + 1));
      a[i] = std::pow(10.0, -k);
    } else {
      double x;
      do {
        x = rng.uniform_open_zero();
      } while (x < 1e-12);
      a[i] = x;
    }
  }
  Vector b(n);
  for (Eigen::Index i = 0; i < n; ++i) b[i] = rng.canonical();
  return QuadraticProblem(std::move(a), std::move(b), theta0, seed);
}

}  // namespace res
