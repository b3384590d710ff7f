#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "res/random.hpp"

namespace res {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// L independent samples drawn in one step of a stochastic method.
///
/// A batch is a plain value: evaluating it at two different iterates gives
/// deterministic results, which the curvature update relies on. `token`
/// identifies the draw so callers can check that two gradient evaluations
/// used the same batch.
template <typename Sample>
struct SampleBatch {
  std::vector<Sample> samples;
  std::uint64_t token = 0;

  std::size_t size() const noexcept { return samples.size(); }
};

/// Eigenvalue bounds on the instantaneous Hessians of a problem.
struct CurvatureBounds {
  double m_tilde = 0.0;
  double M_tilde = 0.0;
  /// Bound on the second moment of the stochastic gradient norm, when one is
  /// known. Informational only.
  std::optional<double> s_sq_bound;
};

/// A problem of the form min_w E_theta[f(w, theta)] that can be sampled.
template <typename P>
concept StochasticObjective =
    requires(const P& p, const Vector& w, const typename P::batch_type& batch,
             Rng& rng, std::size_t L) {
      typename P::batch_type;
      { p.dimension() } -> std::convertible_to<Eigen::Index>;
      { p.draw_batch(L, rng) } -> std::same_as<typename P::batch_type>;
      { p.stochastic_gradient(w, batch) } -> std::convertible_to<Vector>;
      { p.curvature_bounds() } -> std::convertible_to<CurvatureBounds>;
    };

/// Problems whose average objective F(w) can be evaluated.
template <typename P>
concept ExactObjective = StochasticObjective<P> && requires(const P& p, const Vector& w) {
  { p.exact_objective(w) } -> std::convertible_to<double>;
};

namespace detail {

inline void require_dimension(const Vector& w, Eigen::Index n, const char* what) {
  if (w.size() != n) {
    throw std::invalid_argument(std::string(what) + ": expected dimension " +
                                std::to_string(n) + ", got " + std::to_string(w.size()));
  }
}

inline void require_batch(std::size_t L) {
  if (L == 0) throw std::invalid_argument("draw_batch: batch size must be >= 1");
}

}  // namespace detail

}  // namespace res
