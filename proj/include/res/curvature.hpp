#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "res/errors.hpp"
#include "res/objective.hpp"

#if !defined(RES_CHECK_INVARIANTS) && !defined(NDEBUG)
#define RES_CHECK_INVARIANTS 1
#endif

namespace res {

/// Below this squared step length the curvature update is skipped.
inline constexpr double kMinStepSquaredNorm = 1e-24;
/// The update is skipped unless v'r_tilde > kMinCurvatureRatio * |v|^2.
inline constexpr double kMinCurvatureRatio = 1e-10;
/// Largest acceptable condition estimate of B when forming B^-1.
inline constexpr double kMaxConditionEstimate = 1e12;

/// Variable variation v, stochastic gradient variation r_hat and the
/// modified variation r_tilde = r_hat - delta v.
struct VariationPair {
  Vector v;
  Vector r_hat;
  Vector r_tilde;

  VariationPair(Vector v_, Vector r_hat_, double delta)
      : v(std::move(v_)), r_hat(std::move(r_hat_)), r_tilde(r_hat - delta * v) {
    if (v.size() != r_hat.size())
      throw std::invalid_argument("VariationPair: v and r_hat differ in length");
  }
};

enum class UpdateStatus { accepted, no_movement, curvature_not_positive };

inline const char* to_string(UpdateStatus s) {
  switch (s) {
    case UpdateStatus::accepted: return "accepted";
    case UpdateStatus::no_movement: return "no_movement";
    case UpdateStatus::curvature_not_positive: return "curvature_not_positive";
  }
  return "unknown";
}

/// Curvature estimate B together with the regularization constant delta.
class HessianApprox {
 public:
  /// B = scale * I. Requires scale > delta so that B > delta I.
  HessianApprox(Eigen::Index n, double delta, double scale)
      : HessianApprox(scale * Matrix::Identity(n, n), delta) {
    if (!(scale > delta))
      throw std::invalid_argument("HessianApprox: initial scale must exceed delta");
  }

  HessianApprox(Matrix B, double delta) : B_(std::move(B)), delta_(delta) {
    if (B_.rows() != B_.cols() || B_.rows() < 1)
      throw std::invalid_argument("HessianApprox: B must be square and nonempty");
    if (!(delta_ >= 0.0)) throw std::invalid_argument("HessianApprox: delta must be >= 0");
  }

  const Matrix& matrix() const noexcept { return B_; }
  double delta() const noexcept { return delta_; }
  Eigen::Index dimension() const noexcept { return B_.rows(); }

 private:
  friend UpdateStatus regularized_update(HessianApprox&, const VariationPair&);
  friend UpdateStatus classic_update(HessianApprox&, const Vector&, const Vector&);

  Matrix B_;
  double delta_;
};

namespace detail {

inline UpdateStatus check_guard(const Vector& v, const Vector& r) {
  const double vv = v.squaredNorm();
  if (!(vv > kMinStepSquaredNorm)) return UpdateStatus::no_movement;
  if (!(v.dot(r) > kMinCurvatureRatio * vv)) return UpdateStatus::curvature_not_positive;
  return UpdateStatus::accepted;
}

inline double checked_vBv(const Vector& v, const Vector& Bv) {
  const double vBv = v.dot(Bv);
  if (!(vBv > 0.0))
    throw InvariantError("curvature estimate is not positive definite (v'Bv = " +
                         std::to_string(vBv) + ")");
  return vBv;
}

inline void symmetrize(Matrix& B) { B = 0.5 * (B + B.transpose()).eval(); }

#if RES_CHECK_INVARIANTS
/// Cholesky of B - (delta - slack) I must succeed.
inline void check_eigenvalue_floor(const Matrix& B, double delta) {
  const double slack = 1e-8 * std::max(1.0, B.cwiseAbs().maxCoeff());
  Matrix shifted = B;
  shifted.diagonal().array() -= (delta - slack);
  Eigen::LLT<Matrix> llt(shifted);
  if (llt.info() != Eigen::Success)
    throw InvariantError("curvature estimate fell below the regularization floor");
}
#endif

}  // namespace detail

/// Regularized BFGS update
///   B <- B + r~ r~'/(v'r~) - B v v'B/(v'Bv) + delta I,
/// the closest matrix to B satisfying B_new v = r_hat with eigenvalues >= delta.
/// B is left untouched when the step is too short or v'r~ is not safely
/// positive; the returned status says which.
inline UpdateStatus regularized_update(HessianApprox& H, const VariationPair& pair) {
  if (pair.v.size() != H.dimension())
    throw std::invalid_argument("regularized_update: dimension mismatch");
  const UpdateStatus status = detail::check_guard(pair.v, pair.r_tilde);
  if (status != UpdateStatus::accepted) return status;

  Matrix& B = H.B_;
  const Vector Bv = B * pair.v;
  const double vBv = detail::checked_vBv(pair.v, Bv);
  const double vr = pair.v.dot(pair.r_tilde);
  B.noalias() += (pair.r_tilde / vr) * pair.r_tilde.transpose();
  B.noalias() -= (Bv / vBv) * Bv.transpose();
  B.diagonal().array() += H.delta_;
  detail::symmetrize(B);
#if RES_CHECK_INVARIANTS
  if (H.delta_ > 0.0) detail::check_eigenvalue_floor(B, H.delta_);
#endif
  return status;
}

/// Classic BFGS update B <- B + r r'/(v'r) - B v v'B/(v'Bv). Requires delta = 0.
inline UpdateStatus classic_update(HessianApprox& H, const Vector& v, const Vector& r) {
  if (H.delta_ != 0.0) throw std::invalid_argument("classic_update: requires delta = 0");
  if (v.size() != H.dimension() || r.size() != H.dimension())
    throw std::invalid_argument("classic_update: dimension mismatch");
  const UpdateStatus status = detail::check_guard(v, r);
  if (status != UpdateStatus::accepted) return status;

  Matrix& B = H.B_;
  const Vector Bv = B * v;
  const double vBv = detail::checked_vBv(v, Bv);
  B = B + r * r.transpose() / v.dot(r) - Bv * Bv.transpose() / vBv;
  detail::symmetrize(B);
  return status;
}

/// (B_next - delta I)^-1 for B_next = regularized_update(prev, pair), through
/// the rank-structured form
///   v v'/(r~'v) + (I - v r~'/(r~'v)) B_prev^-1 (I - r~ v'/(r~'v)).
/// A consistency check against direct inversion; not used by the optimizer.
inline Matrix inverse_of_shifted(const HessianApprox& prev, const VariationPair& pair) {
  const Eigen::Index n = prev.dimension();
  if (pair.v.size() != n) throw std::invalid_argument("inverse_of_shifted: dimension mismatch");
  if (detail::check_guard(pair.v, pair.r_tilde) != UpdateStatus::accepted)
    throw std::invalid_argument("inverse_of_shifted: r_tilde'v is not safely positive");
  const double rho = 1.0 / pair.r_tilde.dot(pair.v);
  const Matrix prev_inv = prev.matrix().llt().solve(Matrix::Identity(n, n));
  const Matrix left = Matrix::Identity(n, n) - rho * pair.v * pair.r_tilde.transpose();
  return rho * pair.v * pair.v.transpose() + left * prev_inv * left.transpose();
}

/// Cholesky factor of B with a reciprocal condition estimate check.
/// Returns nothing when B is not numerically positive definite.
inline std::optional<Eigen::LLT<Matrix>> factorize(const HessianApprox& H) {
  Eigen::LLT<Matrix> llt(H.matrix());
  if (llt.info() != Eigen::Success) return std::nullopt;
  if (!(llt.rcond() * kMaxConditionEstimate > 1.0)) return std::nullopt;
  return llt;
}

/// B^-1 + Gamma I, with eigenvalues in [Gamma, Gamma + 1/delta] whenever
/// B >= delta I.
inline Matrix descent_matrix(const HessianApprox& H, double Gamma) {
  if (!(Gamma >= 0.0)) throw std::invalid_argument("descent_matrix: Gamma must be >= 0");
  const auto llt = factorize(H);
  if (!llt) throw InvariantError("descent_matrix: curvature estimate is numerically singular");
  const Eigen::Index n = H.dimension();
  Matrix D = llt->solve(Matrix::Identity(n, n));
  detail::symmetrize(D);
  D.diagonal().array() += Gamma;
  return D;
}

}  // namespace res
