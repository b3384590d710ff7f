#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

#include "res/objective.hpp"

namespace res {

enum class LossKind { hinge, squared_hinge, log };

inline std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::hinge: return "hinge";
    case LossKind::squared_hinge: return "squared_hinge";
    case LossKind::log: return "log";
  }
  return "unknown";
}

inline LossKind parse_loss_kind(std::string_view name) {
  if (name == "hinge") return LossKind::hinge;
  if (name == "squared_hinge") return LossKind::squared_hinge;
  if (name == "log") return LossKind::log;
  throw std::invalid_argument("unknown loss kind '" + std::string(name) + "'");
}

/// Labelled points stored column-wise: features(:, i) is x_i, labels[i] is y_i.
struct TrainingSet {
  Matrix features;
  Vector labels;

  TrainingSet() = default;
  TrainingSet(Matrix x, Vector y) : features(std::move(x)), labels(std::move(y)) { validate(); }

  Eigen::Index dimension() const noexcept { return features.rows(); }
  Eigen::Index size() const noexcept { return features.cols(); }

  void validate() const {
    if (features.cols() != labels.size())
      throw std::invalid_argument("TrainingSet: feature and label counts differ");
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
      if (labels[i] != 1.0 && labels[i] != -1.0)
        throw std::invalid_argument("TrainingSet: label at row " + std::to_string(i) +
                                    " is not in {-1, +1}");
    }
  }
};

namespace detail {

/// l(z) for margin z = y x'w.
inline double loss_value(LossKind kind, double z) {
  switch (kind) {
    case LossKind::hinge: return std::max(0.0, 1.0 - z);
    case LossKind::squared_hinge: {
      const double r = std::max(0.0, 1.0 - z);
      return r * r;
    }
    case LossKind::log:
      // log(1 + e^{-z}) without overflow
      return z > 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
  }
  return 0.0;
}

/// dl/dz. The hinge kink at z = 1 takes the zero subgradient.
inline double loss_slope(LossKind kind, double z) {
  switch (kind) {
    case LossKind::hinge: return z < 1.0 ? -1.0 : 0.0;
    case LossKind::squared_hinge: return -2.0 * std::max(0.0, 1.0 - z);
    case LossKind::log:
      return z > 0.0 ? -std::exp(-z) / (1.0 + std::exp(-z)) : -1.0 / (1.0 + std::exp(z));
  }
  return 0.0;
}

}  // namespace detail

/// Regularized linear SVM, f(w, (x, y)) = lambda/2 |w|^2 + l(y x'w), with
/// samples drawn uniformly with replacement from the training set.
class SvmProblem {
 public:
  using sample_type = std::size_t;
  using batch_type = SampleBatch<std::size_t>;

  SvmProblem(std::shared_ptr<const TrainingSet> data, double lambda,
             LossKind loss = LossKind::squared_hinge)
      : data_(std::move(data)), lambda_(lambda), loss_(loss) {
    if (!data_ || data_->size() < 1)
      throw std::invalid_argument("SvmProblem: training set must contain at least one pair");
    if (data_->dimension() < 1) throw std::invalid_argument("SvmProblem: dimension must be >= 1");
    if (!(lambda_ > 0.0)) throw std::invalid_argument("SvmProblem: lambda must be positive");
    data_->validate();
  }

  SvmProblem(TrainingSet data, double lambda, LossKind loss = LossKind::squared_hinge)
      : SvmProblem(std::make_shared<const TrainingSet>(std::move(data)), lambda, loss) {}

  Eigen::Index dimension() const noexcept { return data_->dimension(); }
  const TrainingSet& training_set() const noexcept { return *data_; }
  double lambda() const noexcept { return lambda_; }
  LossKind loss() const noexcept { return loss_; }

  batch_type draw_batch(std::size_t L, Rng& rng) const {
    detail::require_batch(L);
    batch_type batch;
    batch.token = rng.next_u64();
    batch.samples.reserve(L);
    const auto N = static_cast<std::uint64_t>(data_->size());
    for (std::size_t l = 0; l < L; ++l) batch.samples.push_back(rng.index(N));
    return batch;
  }

  double sample_value(const Vector& w, std::size_t i) const {
    detail::require_dimension(w, dimension(), "sample_value");
    return 0.5 * lambda_ * w.squaredNorm() + detail::loss_value(loss_, margin(w, i));
  }

  Vector sample_gradient(const Vector& w, std::size_t i) const {
    detail::require_dimension(w, dimension(), "sample_gradient");
    const double y = data_->labels[static_cast<Eigen::Index>(i)];
    const double slope = detail::loss_slope(loss_, margin(w, i));
    return lambda_ * w + (slope * y) * data_->features.col(static_cast<Eigen::Index>(i));
  }

  Vector stochastic_gradient(const Vector& w, const batch_type& batch) const {
    detail::require_dimension(w, dimension(), "stochastic_gradient");
    if (batch.size() == 0) throw std::invalid_argument("empty batch");
    Vector g = Vector::Zero(dimension());
    for (const std::size_t i : batch.samples) {
      const auto col = static_cast<Eigen::Index>(i);
      const double y = data_->labels[col];
      g += (detail::loss_slope(loss_, margin(w, i)) * y) * data_->features.col(col);
    }
    g /= static_cast<double>(batch.size());
    g += lambda_ * w;
    return g;
  }

  /// Full empirical objective lambda/2 |w|^2 + (1/N) sum_i l(y_i x_i'w).
  /// O(N n); meant for reporting, not for use inside an optimizer loop.
  double exact_objective(const Vector& w) const {
    detail::require_dimension(w, dimension(), "exact_objective");
    const Vector z = (data_->features.transpose() * w).cwiseProduct(data_->labels);
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) total += detail::loss_value(loss_, z[i]);
    return 0.5 * lambda_ * w.squaredNorm() + total / static_cast<double>(z.size());
  }

  /// m_tilde = lambda. The upper bound uses the largest squared feature norm.
  /// Plain hinge has no curvature beyond lambda and violates the lower-bound
  /// assumption in spirit; the bounds are reported as lambda for both ends.
  CurvatureBounds curvature_bounds() const {
    const double max_sq = data_->features.colwise().squaredNorm().maxCoeff();
    switch (loss_) {
      case LossKind::squared_hinge: return {lambda_, lambda_ + 2.0 * max_sq, std::nullopt};
      case LossKind::log: return {lambda_, lambda_ + 0.25 * max_sq, std::nullopt};
      case LossKind::hinge: break;
    }
    return {lambda_, lambda_, std::nullopt};
  }

 private:
  double margin(const Vector& w, std::size_t i) const {
    const auto col = static_cast<Eigen::Index>(i);
    return data_->labels[col] * data_->features.col(col).dot(w);
  }

  std::shared_ptr<const TrainingSet> data_;
  double lambda_;
  LossKind loss_;
};

/// Two-class synthetic data: N/2 points labelled -1 with coordinates uniform
/// on [-0.8, 0.2], then N/2 labelled +1 with coordinates uniform on [-0.2, 0.8].
inline TrainingSet generate_svm_data(Eigen::Index n, Eigen::Index N, Rng& rng) {
  if (n < 1) throw std::invalid_argument("generate_svm_data: n must be >= 1");
  if (N < 2 || N % 2 != 0)
    throw std::invalid_argument("generate_svm_data: N must be even and positive, got " +
                                std::to_string(N));
  Matrix x(n, N);
  Vector y(N);
  const Eigen::Index half = N / 2;
  for (Eigen::Index i = 0; i < N; ++i) {
    const bool negative = i < half;
    const double lo = negative ? -0.8 : -0.2;
    for (Eigen::Index k = 0; k < n; ++k) x(k, i) = rng.uniform(lo, lo + 1.0);
    y[i] = negative ? -1.0 : 1.0;
  }
  return TrainingSet(std::move(x), std::move(y));
}

inline TrainingSet generate_svm_data(Eigen::Index n, Eigen::Index N, std::uint64_t seed) {
  Rng rng(seed);
  return generate_svm_data(n, N, rng);
}

/// Fraction of pairs with sign(w'x) = y. w'x = 0 counts as a miss.
inline double classify_accuracy(const Vector& w, const TrainingSet& test) {
  if (test.size() < 1) throw std::invalid_argument("classify_accuracy: empty test set");
  detail::require_dimension(w, test.dimension(), "classify_accuracy");
  const Vector scores = test.features.transpose() * w;
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (scores[i] * test.labels[i] > 0.0) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace res
