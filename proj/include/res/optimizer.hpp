#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "res/curvature.hpp"
#include "res/errors.hpp"
#include "res/objective.hpp"

namespace res {

/// eps_t = eps0 * T0 / (T0 + t), or eps0 for every t when constant.
struct StepSchedule {
  double eps0 = 1e-1;
  double T0 = 1e3;
  bool constant = false;

  static StepSchedule decaying(double eps0, double T0) { return {eps0, T0, false}; }
  static StepSchedule fixed(double eps) { return {eps, 1.0, true}; }

  void validate() const {
    if (!(eps0 > 0.0)) throw std::invalid_argument("step schedule: eps0 must be positive");
    if (!constant && !(T0 > 0.0)) throw std::invalid_argument("step schedule: T0 must be positive");
  }
};

inline double step_size(const StepSchedule& schedule, std::size_t t) {
  if (schedule.constant) return schedule.eps0;
  return schedule.eps0 * schedule.T0 / (schedule.T0 + static_cast<double>(t));
}

/// How the curvature estimate evolves between iterations.
enum class CurvatureMode {
  regularized,  ///< RES update with delta
  classic,      ///< plain BFGS update; needs delta = 0
  frozen,       ///< B stays at its initial value
};

struct ResConfig {
  std::size_t L = 5;
  double delta = 1e-3;
  double Gamma = 1e-4;
  StepSchedule schedule{};
  /// B_0 = B0_scale * I; defaults to (delta + 1) I.
  std::optional<double> B0_scale;
  std::size_t max_iters = 1000;
  std::uint64_t seed = 0;
  CurvatureMode curvature = CurvatureMode::regularized;

  double initial_scale() const { return B0_scale.value_or(delta + 1.0); }

  /// 2 eps0 T0 Gamma, the quantity that must exceed 1 for the O(1/t) bound.
  double rate_product() const { return 2.0 * schedule.eps0 * schedule.T0 * Gamma; }
  bool satisfies_rate_condition() const { return !schedule.constant && rate_product() > 1.0; }

  void validate() const {
    if (L < 1) throw std::invalid_argument("ResConfig: L must be >= 1");
    if (!(delta >= 0.0)) throw std::invalid_argument("ResConfig: delta must be >= 0");
    if (!(Gamma >= 0.0)) throw std::invalid_argument("ResConfig: Gamma must be >= 0");
    if (!(initial_scale() > delta))
      throw std::invalid_argument("ResConfig: B0_scale must exceed delta");
    if (curvature == CurvatureMode::classic && delta != 0.0)
      throw std::invalid_argument("ResConfig: classic curvature updates require delta = 0");
    schedule.validate();
  }
};

struct SgdConfig {
  std::size_t L = 1;
  StepSchedule schedule{};
  std::size_t max_iters = 1000;
  std::uint64_t seed = 0;

  void validate() const {
    if (L < 1) throw std::invalid_argument("SgdConfig: L must be >= 1");
    schedule.validate();
  }
};

/// State at iterate w_t. `eps` is the step size scheduled for iteration t;
/// `skipped_update` tells whether the curvature update of the iteration that
/// produced w_t was skipped (always false at t = 0 and for SGD).
struct TraceRecord {
  std::size_t t = 0;
  std::size_t functions_processed = 0;
  double eps = 0.0;
  std::optional<double> rel_dist;
  std::optional<double> objective;
  bool skipped_update = false;
};

enum class RunStatus { completed, stopped, diverged };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::completed: return "completed";
    case RunStatus::stopped: return "stopped";
    case RunStatus::diverged: return "diverged";
  }
  return "unknown";
}

struct RunTrace {
  std::size_t batch_size = 1;
  std::vector<TraceRecord> records;
  /// Filled only when RunOptions::keep_iterates is set.
  std::vector<Vector> iterates;
  Vector final_iterate;
  RunStatus status = RunStatus::completed;
  std::size_t skipped_updates = 0;

  const TraceRecord& last() const { return records.back(); }
};

/// Everything an observer can see about one iteration.
struct IterationView {
  std::size_t t;
  double eps;
  const Vector& w;
  const Vector& w_next;
  const Vector& gradient;       ///< s(w_t, batch_t)
  const Vector& direction;      ///< (B^-1 + Gamma I) s, or s for SGD
  const HessianApprox* before;  ///< null for SGD
  const HessianApprox* after;   ///< null for SGD
  const VariationPair* pair;    ///< null for SGD and frozen curvature
  std::optional<UpdateStatus> update;
};

struct RunOptions {
  /// When set, every record carries |w_t - w*| / |w*|.
  std::optional<Vector> w_star;
  /// Record F(w_t) (problems with an exact objective only) every
  /// `objective_every` iterations.
  bool record_objective = false;
  std::size_t objective_every = 1;
  bool keep_iterates = false;
  /// Checked after every record; returning true ends the run.
  std::function<bool(const TraceRecord&)> stop;
  std::function<void(const IterationView&)> observer;
};

/// The iterate overflowed or became non-finite. Carries the trace so far;
/// its last record describes the offending iterate.
class DivergedError : public std::runtime_error {
 public:
  DivergedError(const std::string& what, RunTrace trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const RunTrace& trace() const noexcept { return trace_; }

 private:
  RunTrace trace_;
};

/// Iterates with norm above this are treated as diverged.
inline constexpr double kDivergenceNorm = 1e12;

namespace detail {

template <StochasticObjective P>
class TraceRecorder {
 public:
  TraceRecorder(const P& problem, const RunOptions& options, std::size_t L)
      : problem_(problem), options_(options) {
    trace_.batch_size = L;
    if (options_.w_star) {
      w_star_norm_ = options_.w_star->norm();
      if (!(w_star_norm_ > 0.0))
        throw std::invalid_argument("relative distance requested but |w*| = 0");
    }
  }

  /// Appends a record; returns true when the stop predicate fires.
  bool record(std::size_t t, double eps, const Vector& w, bool skipped) {
    TraceRecord rec;
    rec.t = t;
    rec.functions_processed = trace_.batch_size * t;
    rec.eps = eps;
    rec.skipped_update = skipped;
    if (options_.w_star) rec.rel_dist = (w - *options_.w_star).norm() / w_star_norm_;
    if constexpr (ExactObjective<P>) {
      if (options_.record_objective && t % std::max<std::size_t>(options_.objective_every, 1) == 0)
        rec.objective = problem_.exact_objective(w);
    }
    if (skipped) ++trace_.skipped_updates;
    trace_.records.push_back(rec);
    if (options_.keep_iterates) trace_.iterates.push_back(w);
    return options_.stop && options_.stop(trace_.records.back());
  }

  RunTrace finish(const Vector& w, RunStatus status) {
    trace_.final_iterate = w;
    trace_.status = status;
    return std::move(trace_);
  }

 private:
  const P& problem_;
  const RunOptions& options_;
  RunTrace trace_;
  double w_star_norm_ = 1.0;
};

inline bool is_diverged(const Vector& w) {
  return !w.allFinite() || w.norm() > kDivergenceNorm;
}

inline void require_start(const Vector& w0, Eigen::Index n) {
  require_dimension(w0, n, "initial iterate");
  if (!w0.allFinite()) throw std::invalid_argument("initial iterate must be finite");
}

}  // namespace detail

/// Stochastic gradient descent w_{t+1} = w_t - eps_t s(w_t, batch_t).
template <StochasticObjective P>
RunTrace run_sgd(const P& problem, const SgdConfig& cfg, const Vector& w0,
                 const RunOptions& options = {}) {
  cfg.validate();
  detail::require_start(w0, problem.dimension());
  Rng rng(cfg.seed);
  detail::TraceRecorder<P> recorder(problem, options, cfg.L);
  Vector w = w0;
  if (recorder.record(0, step_size(cfg.schedule, 0), w, false))
    return recorder.finish(w, RunStatus::stopped);

  for (std::size_t t = 0; t < cfg.max_iters; ++t) {
    const double eps = step_size(cfg.schedule, t);
    const auto batch = problem.draw_batch(cfg.L, rng);
    const Vector s = problem.stochastic_gradient(w, batch);
    Vector w_next = w - eps * s;
    const bool diverged = detail::is_diverged(w_next);
    if (options.observer)
      options.observer(IterationView{t, eps, w, w_next, s, s, nullptr, nullptr, nullptr, {}});
    w = std::move(w_next);
    const bool stop = recorder.record(t + 1, step_size(cfg.schedule, t + 1), w, false);
    if (diverged) {
      auto trace = recorder.finish(w, RunStatus::diverged);
      throw DivergedError("SGD diverged at iteration " + std::to_string(t + 1), std::move(trace));
    }
    if (stop) return recorder.finish(w, RunStatus::stopped);
  }
  return recorder.finish(w, RunStatus::completed);
}

/// Regularized stochastic BFGS. Per iteration:
///   s   = s(w_t, batch_t)
///   w'  = w_t - eps_t (B^-1 + Gamma I) s
///   s'  = s(w', batch_t)        (same batch)
///   B  <- update(B, v = w' - w_t, r_hat = s' - s)
/// The curvature mode in `cfg` selects the update; the classic mode with
/// delta = Gamma = 0 is the non-regularized stochastic BFGS baseline.
template <StochasticObjective P>
RunTrace run_res(const P& problem, const ResConfig& cfg, const Vector& w0,
                 const RunOptions& options = {}) {
  cfg.validate();
  const Eigen::Index n = problem.dimension();
  detail::require_start(w0, n);
  Rng rng(cfg.seed);
  detail::TraceRecorder<P> recorder(problem, options, cfg.L);
  HessianApprox H(n, cfg.delta, cfg.initial_scale());
  Vector w = w0;
  if (recorder.record(0, step_size(cfg.schedule, 0), w, false))
    return recorder.finish(w, RunStatus::stopped);

  for (std::size_t t = 0; t < cfg.max_iters; ++t) {
    const double eps = step_size(cfg.schedule, t);
    const auto batch = problem.draw_batch(cfg.L, rng);
    const Vector s = problem.stochastic_gradient(w, batch);

    const auto llt = factorize(H);
    if (!llt) {
      if (cfg.delta > 0.0)
        throw InvariantError("RES: curvature estimate became singular despite delta > 0");
      auto trace = recorder.finish(w, RunStatus::diverged);
      throw DivergedError("curvature estimate became singular at iteration " + std::to_string(t),
                          std::move(trace));
    }
    Vector d = llt->solve(s);
    d += cfg.Gamma * s;
    Vector w_next = w - eps * d;
    const bool diverged = detail::is_diverged(w_next);

    std::optional<UpdateStatus> update;
    std::optional<VariationPair> pair;
    const HessianApprox* before = nullptr;
    std::optional<HessianApprox> snapshot;
    if (options.observer) {
      snapshot = H;
      before = &*snapshot;
    }
    if (!diverged && cfg.curvature != CurvatureMode::frozen) {
      const Vector s_next = problem.stochastic_gradient(w_next, batch);
      pair.emplace(w_next - w, s_next - s, cfg.delta);
      update = cfg.curvature == CurvatureMode::regularized
                   ? regularized_update(H, *pair)
                   : classic_update(H, pair->v, pair->r_hat);
    }
    if (options.observer) {
      options.observer(IterationView{t, eps, w, w_next, s, d, before, &H,
                                     pair ? &*pair : nullptr, update});
    }
    w = std::move(w_next);
    const bool skipped = update && *update != UpdateStatus::accepted;
    const bool stop = recorder.record(t + 1, step_size(cfg.schedule, t + 1), w, skipped);
    if (diverged) {
      auto trace = recorder.finish(w, RunStatus::diverged);
      throw DivergedError("iterate diverged at iteration " + std::to_string(t + 1),
                          std::move(trace));
    }
    if (stop) return recorder.finish(w, RunStatus::stopped);
  }
  return recorder.finish(w, RunStatus::completed);
}

/// Non-regularized stochastic BFGS: the RES loop with delta = Gamma = 0 and
/// the classic update. Skips still apply when v'r is not positive.
template <StochasticObjective P>
RunTrace run_plain_sbfgs(const P& problem, ResConfig cfg, const Vector& w0,
                         const RunOptions& options = {}) {
  if (cfg.delta != 0.0 || cfg.Gamma != 0.0)
    throw std::invalid_argument("run_plain_sbfgs: requires delta = 0 and Gamma = 0");
  cfg.curvature = CurvatureMode::classic;
  return run_res(problem, cfg, w0, options);
}

}  // namespace res
