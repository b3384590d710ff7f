#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "res/optimizer.hpp"
#include "res/quadratic.hpp"
#include "res/svm.hpp"

namespace res {

// ---- convergence time -------------------------------------------------------

/// Target relative distance rho and the processed-function budget after which
/// a run counts as a failure (reported as tau = cap).
struct ConvergenceCriterion {
  double rho = 1e-2;
  std::size_t cap = 10000;

  void validate() const {
    if (!(rho > 0.0)) throw std::invalid_argument("criterion: rho must be positive");
    if (cap == 0) throw std::invalid_argument("criterion: cap must be positive");
  }
};

struct ConvergenceTime {
  std::size_t tau = 0;
  bool converged = false;
};

/// tau = L * min{t : |w_t - w*| / |w*| <= rho}, or cap when no record within
/// the budget gets there. Uses the recorded relative distances, or the kept
/// iterates when the trace has none.
inline ConvergenceTime convergence_time(const RunTrace& trace, const Vector& w_star,
                                        const ConvergenceCriterion& crit) {
  crit.validate();
  const double norm = w_star.norm();
  if (!(norm > 0.0)) throw std::invalid_argument("convergence_time: |w*| must be positive");
  const bool have_iterates = trace.iterates.size() == trace.records.size();
  for (std::size_t k = 0; k < trace.records.size(); ++k) {
    const auto& rec = trace.records[k];
    if (rec.functions_processed > crit.cap) break;
    double rel;
    if (rec.rel_dist) {
      rel = *rec.rel_dist;
    } else if (have_iterates) {
      rel = (trace.iterates[k] - w_star).norm() / norm;
    } else {
      throw std::invalid_argument("convergence_time: trace has neither distances nor iterates");
    }
    if (rel <= crit.rho) return {rec.functions_processed, true};
  }
  return {crit.cap, false};
}

// ---- statistics -------------------------------------------------------------

struct Summary {
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double std = 0.0;  ///< sample standard deviation (J - 1 denominator)
  std::size_t failures = 0;
};

inline Summary summarize(std::span<const double> values, std::size_t failures = 0) {
  Summary s;
  s.count = values.size();
  s.failures = failures;
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.count);
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = s.count / 2;
  s.median = s.count % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  if (s.count > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.count - 1));
  }
  return s;
}

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

inline std::vector<double> linear_edges(double lo, double hi, std::size_t bins) {
  std::vector<double> edges(bins + 1);
  for (std::size_t k = 0; k <= bins; ++k)
    edges[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(bins);
  return edges;
}

inline std::vector<double> log_edges(double lo, double hi, std::size_t bins) {
  auto e = linear_edges(std::log10(lo), std::log10(hi), bins);
  for (double& x : e) x = std::pow(10.0, x);
  return e;
}

/// Bins are [lo, hi); the last one is closed. Values outside the range are
/// counted in the nearest end bin so that the counts always sum to the
/// number of values.
inline std::vector<HistogramBin> histogram(std::span<const double> values,
                                           std::span<const double> edges) {
  if (edges.size() < 2) throw std::invalid_argument("histogram: need at least two edges");
  std::vector<HistogramBin> bins(edges.size() - 1);
  for (std::size_t k = 0; k < bins.size(); ++k) bins[k] = {edges[k], edges[k + 1], 0};
  for (double v : values) {
    const auto it = std::upper_bound(edges.begin(), edges.end(), v);
    auto k = static_cast<std::ptrdiff_t>(it - edges.begin()) - 1;
    k = std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(bins.size()) - 1);
    ++bins[static_cast<std::size_t>(k)].count;
  }
  return bins;
}

/// Least-squares slope of log(y) against log(x).
inline double log_log_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("log_log_slope: need two or more matching points");
  double mx = 0, my = 0;
  const auto n = static_cast<double>(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += std::log(x[k]);
    my += std::log(y[k]);
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double dx = std::log(x[k]) - mx;
    sxy += dx * (std::log(y[k]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

// ---- parallel realizations --------------------------------------------------

/// Runs body(0..count-1) on up to `threads` workers (0 = all cores). Each index
/// must write only its own output slot. The first exception is rethrown.
template <typename F>
void parallel_for(std::size_t count, unsigned threads, F&& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
  if (threads <= 1) {
    for (std::size_t j = 0; j < count; ++j) body(j);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned k = 0; k < threads; ++k) {
    pool.emplace_back([&] {
      for (std::size_t j; (j = next.fetch_add(1)) < count;) {
        try {
          body(j);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next.store(count);
        }
      }
    });
  }
  pool.clear();
  if (error) std::rethrow_exception(error);
}

// ---- study description ------------------------------------------------------

enum class StudyKind {
  condition,
  sample_size,
  dimension,
  svm_convergence,
  svm_accuracy,
  svm_regularization,
  rate_check,
};

inline const char* to_string(StudyKind kind) {
  switch (kind) {
    case StudyKind::condition: return "condition";
    case StudyKind::sample_size: return "sample_size";
    case StudyKind::dimension: return "dimension";
    case StudyKind::svm_convergence: return "svm_convergence";
    case StudyKind::svm_accuracy: return "svm_accuracy";
    case StudyKind::svm_regularization: return "svm_regularization";
    case StudyKind::rate_check: return "rate_check";
  }
  return "unknown";
}

inline std::optional<StudyKind> parse_study_kind(std::string_view name) {
  for (auto k : {StudyKind::condition, StudyKind::sample_size, StudyKind::dimension,
                 StudyKind::svm_convergence, StudyKind::svm_accuracy,
                 StudyKind::svm_regularization, StudyKind::rate_check}) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

/// Declarative description of one study. Field meaning depends on `kind`;
/// `defaults_for` fills in the values used for each study.
struct ExperimentSpec {
  StudyKind kind = StudyKind::condition;

  // Quadratic problems.
  int n = 50;
  int xi = 2;
  double theta0 = 0.5;
  std::vector<std::size_t> batch_sizes{1, 2, 5, 10, 20};
  std::vector<int> dimensions{5, 10, 20, 50};
  /// Start point: w0 = 0 when zero, otherwise uniform on [0, w0_box]^n.
  double w0_box = 0.0;

  // SVM problems.
  int n_train = 10000;
  int n_test = 10000;
  double lambda = 1e-3;
  LossKind loss = LossKind::squared_hinge;
  /// Processed-function budget for the SVM studies.
  std::size_t budget = 5000;
  double target_objective = 6.5e-2;
  /// When set, a constant step replaces the decaying schedule.
  std::optional<double> constant_step;

  // Algorithms.
  std::size_t res_L = 5;
  double delta = 1e-3;
  double Gamma = 1e-4;
  double eps0 = 1e-1;
  double T0 = 1e3;
  std::optional<double> B0_scale;
  std::size_t sgd_L = 1;

  // Study.
  std::size_t J = 100;
  ConvergenceCriterion criterion{1e-2, 500000};
  std::uint64_t seed = 1;
  unsigned parallel = 0;

  // Rate check: pure recursion u_{t+1} = (1 - c/(t+t0)) u_t + b/(t+t0)^2.
  double c = 2.0;
  double b = 1.0;
  double t0 = 1.0;
  double u0 = 1.0;
  std::size_t horizon = 100000;
  /// Empirical rate window is t in [T0, horizon_factor * T0].
  double horizon_factor = 100.0;

  StepSchedule schedule() const {
    return constant_step ? StepSchedule::fixed(*constant_step)
                         : StepSchedule::decaying(eps0, T0);
  }

  ResConfig res_config(std::size_t max_iters, std::uint64_t run_seed) const {
    ResConfig cfg;
    cfg.L = res_L;
    cfg.delta = delta;
    cfg.Gamma = Gamma;
    cfg.schedule = schedule();
    cfg.B0_scale = B0_scale;
    cfg.max_iters = max_iters;
    cfg.seed = run_seed;
    return cfg;
  }

  SgdConfig sgd_config(std::size_t max_iters, std::uint64_t run_seed) const {
    SgdConfig cfg;
    cfg.L = sgd_L;
    cfg.schedule = schedule();
    cfg.max_iters = max_iters;
    cfg.seed = run_seed;
    return cfg;
  }

  friend bool operator==(const ExperimentSpec&, const ExperimentSpec&) = default;
};

inline bool operator==(const ConvergenceCriterion& a, const ConvergenceCriterion& b) {
  return a.rho == b.rho && a.cap == b.cap;
}

/// Parameter values of each study as described with the original experiments,
/// with J = 100 realizations instead of 1,000.
inline ExperimentSpec defaults_for(StudyKind kind) {
  ExperimentSpec s;
  s.kind = kind;
  switch (kind) {
    case StudyKind::condition:
      s.criterion = {1e-2, 500000};
      break;
    case StudyKind::sample_size:
      s.criterion = {1e-2, 10000};
      break;
    case StudyKind::dimension:
      s.criterion = {1.0, 500000};
      s.w0_box = 1e3;
      break;
    case StudyKind::svm_convergence:
      s.dimensions = {4, 40};
      s.n_train = 10000;
      s.eps0 = 3e-2;
      s.budget = 5000;
      s.J = 20;
      break;
    case StudyKind::svm_accuracy:
      s.n = 4;
      s.n_train = 2500;
      s.n_test = 10000;
      s.eps0 = 3e-2;
      break;
    case StudyKind::svm_regularization:
      s.n = 10;
      s.n_train = 10000;
      s.eps0 = 3e-2;
      s.constant_step = 1e-1;
      s.budget = 10000;
      s.J = 20;
      break;
    case StudyKind::rate_check:
      s.n = 10;
      s.xi = 0;
      s.Gamma = 1.0;
      s.eps0 = 1e-1;
      s.T0 = 10.0;
      s.J = 50;
      break;
  }
  return s;
}

// ---- results ----------------------------------------------------------------

/// Per-realization values of one algorithm (optionally at one parameter value).
struct SeriesResult {
  std::string algorithm;
  std::string parameter;  ///< e.g. "L=5" or "n=50"; empty when not swept
  std::vector<double> values;
  std::vector<bool> failed;
  Summary summary;
  std::vector<HistogramBin> bins;

  std::string label() const { return parameter.empty() ? algorithm : algorithm + "[" + parameter + "]"; }
};

struct CurvePoint {
  std::size_t functions_processed = 0;
  double value = 0.0;
};

struct Curve {
  std::string label;
  std::vector<CurvePoint> points;
};

struct ExperimentResult {
  StudyKind kind = StudyKind::condition;
  std::vector<SeriesResult> series;
  /// Study-specific scalars (clairvoyant accuracy, win fractions, ...).
  std::map<std::string, double> scalars;
  std::vector<Curve> curves;
  /// Representative traces of the first realization.
  std::vector<std::pair<std::string, RunTrace>> traces;

  const SeriesResult& find(const std::string& label) const {
    for (const auto& s : series)
      if (s.label() == label) return s;
    throw std::out_of_range("no series '" + label + "'");
  }
};

namespace detail {

inline void finalize_series(SeriesResult& s, std::span<const double> edges) {
  const auto failures = static_cast<std::size_t>(std::count(s.failed.begin(), s.failed.end(), true));
  s.summary = summarize(s.values, failures);
  s.bins = histogram(s.values, edges);
}

inline std::vector<double> tau_edges(std::size_t cap) {
  return log_edges(1.0, static_cast<double>(std::max<std::size_t>(cap, 10)), 40);
}

inline Vector start_point(const ExperimentSpec& spec, Eigen::Index n, std::uint64_t seed) {
  Vector w0 = Vector::Zero(n);
  if (spec.w0_box > 0.0) {
    Rng rng(seed);
    for (Eigen::Index i = 0; i < n; ++i) w0[i] = rng.uniform(0.0, spec.w0_box);
  }
  return w0;
}

inline std::size_t iterations_for(std::size_t budget, std::size_t L) {
  return (budget + L - 1) / L;
}

/// Convergence time of one run, stopping as soon as rho or the cap is reached.
template <typename Runner>
ConvergenceTime timed_run(const QuadraticProblem& p,
                          const ConvergenceCriterion& crit, Runner&& runner,
                          RunTrace* keep = nullptr) {
  RunOptions opts;
  opts.w_star = p.optimum();
  opts.stop = [&crit](const TraceRecord& r) {
    return *r.rel_dist <= crit.rho || r.functions_processed >= crit.cap;
  };
  try {
    RunTrace trace = runner(opts);
    const auto result = convergence_time(trace, *opts.w_star, crit);
    if (keep) *keep = std::move(trace);
    return result;
  } catch (const DivergedError& e) {
    if (keep) *keep = e.trace();
    return {crit.cap, false};
  }
}

inline void check_kind(const ExperimentSpec& spec, std::initializer_list<StudyKind> allowed,
                       const char* who) {
  if (std::find(allowed.begin(), allowed.end(), spec.kind) == allowed.end())
    throw std::invalid_argument(std::string(who) + ": wrong study kind '" + to_string(spec.kind) + "'");
  if (spec.J < 1) throw std::invalid_argument(std::string(who) + ": J must be >= 1");
  spec.criterion.validate();
}

}  // namespace detail

// ---- quadratic studies --------------------------------------------------------

/// RES against SGD on quadratics with condition number 10^xi.
inline ExperimentResult run_condition_study(const ExperimentSpec& spec) {
  detail::check_kind(spec, {StudyKind::condition}, "run_condition_study");
  const auto& crit = spec.criterion;
  ExperimentResult result;
  result.kind = spec.kind;
  SeriesResult res_series{"RES", "", std::vector<double>(spec.J), std::vector<bool>(spec.J), {}, {}};
  SeriesResult sgd_series{"SGD", "", std::vector<double>(spec.J), std::vector<bool>(spec.J), {}, {}};
  RunTrace res_trace, sgd_trace;

  parallel_for(spec.J, spec.parallel, [&](std::size_t j) {
    const auto p = generate_quadratic(spec.n, DiagonalLaw::powers_of_ten(spec.xi), spec.theta0,
                                      child_seed(spec.seed, j, 0));
    const Vector w0 = detail::start_point(spec, spec.n, child_seed(spec.seed, j, 3));
    const auto r = detail::timed_run(
        p, crit,
        [&](const RunOptions& o) {
          return run_res(p, spec.res_config(detail::iterations_for(crit.cap, spec.res_L),
                                            child_seed(spec.seed, j, 1)), w0, o);
        },
        j == 0 ? &res_trace : nullptr);
    const auto s = detail::timed_run(
        p, crit,
        [&](const RunOptions& o) {
          return run_sgd(p, spec.sgd_config(detail::iterations_for(crit.cap, spec.sgd_L),
                                            child_seed(spec.seed, j, 2)), w0, o);
        },
        j == 0 ? &sgd_trace : nullptr);
    res_series.values[j] = static_cast<double>(r.tau);
    res_series.failed[j] = !r.converged;
    sgd_series.values[j] = static_cast<double>(s.tau);
    sgd_series.failed[j] = !s.converged;
  });

  const auto edges = detail::tau_edges(crit.cap);
  detail::finalize_series(res_series, edges);
  detail::finalize_series(sgd_series, edges);
  result.series = {std::move(res_series), std::move(sgd_series)};
  result.traces = {{"RES", std::move(res_trace)}, {"SGD", std::move(sgd_trace)}};
  return result;
}

/// RES with each batch size in spec.batch_sizes on the same problem instances.
inline ExperimentResult run_sample_size_study(const ExperimentSpec& spec) {
  detail::check_kind(spec, {StudyKind::sample_size}, "run_sample_size_study");
  if (spec.batch_sizes.empty())
    throw std::invalid_argument("run_sample_size_study: batch_sizes is empty");
  const auto& crit = spec.criterion;
  ExperimentResult result;
  result.kind = spec.kind;
  const std::size_t K = spec.batch_sizes.size();
  std::vector<SeriesResult> series(K);
  for (std::size_t k = 0; k < K; ++k) {
    series[k] = {"RES", "L=" + std::to_string(spec.batch_sizes[k]),
                 std::vector<double>(spec.J), std::vector<bool>(spec.J), {}, {}};
  }
  parallel_for(spec.J, spec.parallel, [&](std::size_t j) {
    const auto p = generate_quadratic(spec.n, DiagonalLaw::powers_of_ten(spec.xi), spec.theta0,
                                      child_seed(spec.seed, j, 0));
    const Vector w0 = detail::start_point(spec, spec.n, child_seed(spec.seed, j, 3));
    for (std::size_t k = 0; k < K; ++k) {
      ExperimentSpec local = spec;
      local.res_L = spec.batch_sizes[k];
      const auto r = detail::timed_run(p, crit, [&](const RunOptions& o) {
        return run_res(p, local.res_config(detail::iterations_for(crit.cap, local.res_L),
                                           child_seed(spec.seed, j, 10 + k)), w0, o);
      });
      series[k].values[j] = static_cast<double>(r.tau);
      series[k].failed[j] = !r.converged;
    }
  });
  const auto edges = detail::tau_edges(crit.cap);
  for (auto& s : series) detail::finalize_series(s, edges);
  result.series = std::move(series);
  return result;
}

/// RES against SGD on quadratics with a_ii uniform on (0, 1], for each
/// dimension in spec.dimensions.
inline ExperimentResult run_dimension_study(const ExperimentSpec& spec) {
  detail::check_kind(spec, {StudyKind::dimension}, "run_dimension_study");
  if (spec.dimensions.empty()) throw std::invalid_argument("run_dimension_study: no dimensions");
  const auto& crit = spec.criterion;
  ExperimentResult result;
  result.kind = spec.kind;
  const auto edges = detail::tau_edges(crit.cap);
  for (std::size_t k = 0; k < spec.dimensions.size(); ++k) {
    const int n = spec.dimensions[k];
    const std::string param = "n=" + std::to_string(n);
    SeriesResult rs{"RES", param, std::vector<double>(spec.J), std::vector<bool>(spec.J), {}, {}};
    SeriesResult ss{"SGD", param, std::vector<double>(spec.J), std::vector<bool>(spec.J), {}, {}};
    parallel_for(spec.J, spec.parallel, [&](std::size_t j) {
      const std::uint64_t base = child_seed(spec.seed, static_cast<std::uint64_t>(n));
      const auto p = generate_quadratic(n, DiagonalLaw::uniform(), spec.theta0, child_seed(base, j, 0));
      const Vector w0 = detail::start_point(spec, n, child_seed(base, j, 3));
      const auto r = detail::timed_run(p, crit, [&](const RunOptions& o) {
        return run_res(p, spec.res_config(detail::iterations_for(crit.cap, spec.res_L),
                                          child_seed(base, j, 1)), w0, o);
      });
      const auto s = detail::timed_run(p, crit, [&](const RunOptions& o) {
        return run_sgd(p, spec.sgd_config(detail::iterations_for(crit.cap, spec.sgd_L),
                                          child_seed(base, j, 2)), w0, o);
      });
      rs.values[j] = static_cast<double>(r.tau);
      rs.failed[j] = !r.converged;
      ss.values[j] = static_cast<double>(s.tau);
      ss.failed[j] = !s.converged;
    });
    detail::finalize_series(rs, edges);
    detail::finalize_series(ss, edges);
    result.scalars["failure_rate_RES[" + param + "]"] =
        static_cast<double>(rs.summary.failures) / static_cast<double>(spec.J);
    result.scalars["failure_rate_SGD[" + param + "]"] =
        static_cast<double>(ss.summary.failures) / static_cast<double>(spec.J);
    result.series.push_back(std::move(rs));
    result.series.push_back(std::move(ss));
  }
  return result;
}

// ---- SVM studies ------------------------------------------------------------

/// True when the recorded objective ever exceeds `factor` times its running
/// minimum. Non-finite objectives and diverged runs count as jumps.
inline bool has_objective_jump(const RunTrace& trace, double factor = 10.0) {
  if (trace.status == RunStatus::diverged) return true;
  double running_min = std::numeric_limits<double>::infinity();
  for (const auto& r : trace.records) {
    if (!r.objective) continue;
    const double f = *r.objective;
    if (!std::isfinite(f)) return true;
    if (running_min < std::numeric_limits<double>::infinity() && f > factor * running_min)
      return true;
    running_min = std::min(running_min, f);
  }
  return false;
}

/// Last finite recorded objective, or +inf when the run diverged.
inline double final_objective(const RunTrace& trace) {
  if (trace.status == RunStatus::diverged) return std::numeric_limits<double>::infinity();
  for (auto it = trace.records.rbegin(); it != trace.records.rend(); ++it)
    if (it->objective) return *it->objective;
  return std::numeric_limits<double>::quiet_NaN();
}

namespace detail {

/// Trace of a run that may diverge; a divergence is folded into the status.
template <typename Runner>
RunTrace tolerant_run(Runner&& runner) {
  try {
    return runner();
  } catch (const DivergedError& e) {
    return e.trace();
  }
}

/// First processed-function count with recorded objective <= target.
inline std::optional<std::size_t> objective_hit(const RunTrace& trace, double target) {
  for (const auto& r : trace.records)
    if (r.objective && *r.objective <= target) return r.functions_processed;
  return std::nullopt;
}

inline void accumulate_curve(std::vector<CurvePoint>& curve, const RunTrace& trace) {
  std::size_t k = 0;
  for (const auto& r : trace.records) {
    if (!r.objective) continue;
    if (k == curve.size()) curve.push_back({r.functions_processed, 0.0});
    curve[k++].value += *r.objective;
  }
}

/// Grid spacing (in processed functions) for objective curves.
inline constexpr std::size_t kCurveStride = 25;

}  // namespace detail

/// Objective against processed functions for RES and SGD, per dimension in
/// spec.dimensions. Values are the processed functions needed to reach
/// spec.target_objective (budget when never reached).
inline ExperimentResult run_svm_convergence(const ExperimentSpec& spec) {
  detail::check_kind(spec, {StudyKind::svm_convergence}, "run_svm_convergence");
  if (spec.n_train < 1) throw std::invalid_argument("svm study: n_train must be >= 1");
  ExperimentResult result;
  result.kind = spec.kind;
  const auto edges = detail::tau_edges(spec.budget);
  for (const int n : spec.dimensions) {
    const std::string param = "n=" + std::to_string(n);
    const std::uint64_t base = child_seed(spec.seed, static_cast<std::uint64_t>(n));
    SeriesResult rs{"RES", param, std::vector<double>(spec.J), std::vector<bool>(spec.J), {}, {}};
    SeriesResult ss{"SGD", param, std::vector<double>(spec.J), std::vector<bool>(spec.J), {}, {}};
    std::vector<RunTrace> res_traces(spec.J), sgd_traces(spec.J);
    parallel_for(spec.J, spec.parallel, [&](std::size_t j) {
      const SvmProblem p(generate_svm_data(n, spec.n_train, child_seed(base, j, 0)), spec.lambda,
                         spec.loss);
      const Vector w0 = detail::start_point(spec, n, child_seed(base, j, 3));
      RunOptions ro;
      ro.record_objective = true;
      ro.objective_every = std::max<std::size_t>(1, detail::kCurveStride / spec.res_L);
      RunOptions so = ro;
      so.objective_every = std::max<std::size_t>(1, detail::kCurveStride / spec.sgd_L);
      res_traces[j] = detail::tolerant_run([&] {
        return run_res(p, spec.res_config(detail::iterations_for(spec.budget, spec.res_L),
                                          child_seed(base, j, 1)), w0, ro);
      });
      sgd_traces[j] = detail::tolerant_run([&] {
        return run_sgd(p, spec.sgd_config(detail::iterations_for(spec.budget, spec.sgd_L),
                                          child_seed(base, j, 2)), w0, so);
      });
      for (auto [series, trace] : {std::pair{&rs, &res_traces[j]}, std::pair{&ss, &sgd_traces[j]}}) {
        const auto hit = detail::objective_hit(*trace, spec.target_objective);
        series->values[j] = static_cast<double>(hit.value_or(spec.budget));
        series->failed[j] = !hit.has_value();
      }
    });
    for (auto [label, traces] : {std::pair{"RES", &res_traces}, std::pair{"SGD", &sgd_traces}}) {
      Curve curve{std::string(label) + "[" + param + "]", {}};
      std::size_t counted = 0;
      for (const auto& t : *traces) {
        if (t.status == RunStatus::diverged) continue;
        detail::accumulate_curve(curve.points, t);
        ++counted;
      }
      for (auto& pt : curve.points) pt.value /= static_cast<double>(std::max<std::size_t>(counted, 1));
      double final_mean = 0.0;
      for (const auto& t : *traces) final_mean += final_objective(t);
      result.scalars["mean_final_objective_" + curve.label] = final_mean / static_cast<double>(spec.J);
      result.curves.push_back(std::move(curve));
    }
    detail::finalize_series(rs, edges);
    detail::finalize_series(ss, edges);
    result.traces.emplace_back("RES[" + param + "]", std::move(res_traces.front()));
    result.traces.emplace_back("SGD[" + param + "]", std::move(sgd_traces.front()));
    result.series.push_back(std::move(rs));
    result.series.push_back(std::move(ss));
  }
  return result;
}

/// Test-set accuracy of RES and SGD after one pass over n_train samples.
inline ExperimentResult run_svm_accuracy(const ExperimentSpec& spec) {
  detail::check_kind(spec, {StudyKind::svm_accuracy}, "run_svm_accuracy");
  if (spec.n_train < 1) throw std::invalid_argument("svm_accuracy: n_train must be >= 1");
  if (spec.n_test < 1) throw std::invalid_argument("svm_accuracy: n_test must be >= 1");
  ExperimentResult result;
  result.kind = spec.kind;
  const TrainingSet test = generate_svm_data(spec.n, spec.n_test, child_seed(spec.seed, 0, 99));
  SeriesResult rs{"RES", "", std::vector<double>(spec.J), std::vector<bool>(spec.J), {}, {}};
  SeriesResult ss{"SGD", "", std::vector<double>(spec.J), std::vector<bool>(spec.J), {}, {}};
  parallel_for(spec.J, spec.parallel, [&](std::size_t j) {
    const SvmProblem p(generate_svm_data(spec.n, spec.n_train, child_seed(spec.seed, j, 0)),
                       spec.lambda, spec.loss);
    const Vector w0 = detail::start_point(spec, spec.n, child_seed(spec.seed, j, 3));
    const auto n_train = static_cast<std::size_t>(spec.n_train);
    const auto r = detail::tolerant_run([&] {
      return run_res(p, spec.res_config(n_train / spec.res_L, child_seed(spec.seed, j, 1)), w0);
    });
    const auto s = detail::tolerant_run([&] {
      return run_sgd(p, spec.sgd_config(n_train / spec.sgd_L, child_seed(spec.seed, j, 2)), w0);
    });
    rs.failed[j] = r.status == RunStatus::diverged;
    ss.failed[j] = s.status == RunStatus::diverged;
    rs.values[j] = rs.failed[j] ? 0.0 : classify_accuracy(r.final_iterate, test);
    ss.values[j] = ss.failed[j] ? 0.0 : classify_accuracy(s.final_iterate, test);
  });
  const auto edges = linear_edges(0.0, 1.0, 50);
  detail::finalize_series(rs, edges);
  detail::finalize_series(ss, edges);
  const double sgd_max = *std::max_element(ss.values.begin(), ss.values.end());
  const auto above = std::count_if(rs.values.begin(), rs.values.end(),
                                   [&](double a) { return a > sgd_max; });
  result.scalars["clairvoyant_accuracy"] = classify_accuracy(Vector::Ones(spec.n), test);
  result.scalars["sgd_max_accuracy"] = sgd_max;
  result.scalars["res_above_sgd_max_fraction"] =
      static_cast<double>(above) / static_cast<double>(spec.J);
  result.series = {std::move(rs), std::move(ss)};
  return result;
}

/// RES against non-regularized stochastic BFGS and SGD. Values are final
/// objectives (+inf for diverged runs).
inline ExperimentResult run_svm_regularization(const ExperimentSpec& spec) {
  detail::check_kind(spec, {StudyKind::svm_regularization}, "run_svm_regularization");
  if (spec.n_train < 1) throw std::invalid_argument("svm_regularization: n_train must be >= 1");
  ExperimentResult result;
  result.kind = spec.kind;
  const std::size_t J = spec.J;
  SeriesResult rs{"RES", "", std::vector<double>(J), std::vector<bool>(J), {}, {}};
  SeriesResult ps{"plain-SBFGS", "", std::vector<double>(J), std::vector<bool>(J), {}, {}};
  SeriesResult ss{"SGD", "", std::vector<double>(J), std::vector<bool>(J), {}, {}};
  std::vector<bool> res_jump(J), plain_jump(J);
  std::vector<RunTrace> first(3);
  parallel_for(J, spec.parallel, [&](std::size_t j) {
    const SvmProblem p(generate_svm_data(spec.n, spec.n_train, child_seed(spec.seed, j, 0)),
                       spec.lambda, spec.loss);
    const Vector w0 = detail::start_point(spec, spec.n, child_seed(spec.seed, j, 3));
    RunOptions opts;
    opts.record_objective = true;
    const auto res_iters = detail::iterations_for(spec.budget, spec.res_L);
    auto r = detail::tolerant_run([&] {
      return run_res(p, spec.res_config(res_iters, child_seed(spec.seed, j, 1)), w0, opts);
    });
    auto plain_cfg = spec.res_config(res_iters, child_seed(spec.seed, j, 1));
    plain_cfg.delta = 0.0;
    plain_cfg.Gamma = 0.0;
    plain_cfg.B0_scale = spec.B0_scale.value_or(1.0);
    auto q = detail::tolerant_run([&] { return run_plain_sbfgs(p, plain_cfg, w0, opts); });
    auto s = detail::tolerant_run([&] {
      return run_sgd(p, spec.sgd_config(detail::iterations_for(spec.budget, spec.sgd_L),
                                        child_seed(spec.seed, j, 2)), w0, opts);
    });
    rs.values[j] = final_objective(r);
    ps.values[j] = final_objective(q);
    ss.values[j] = final_objective(s);
    rs.failed[j] = r.status == RunStatus::diverged;
    ps.failed[j] = q.status == RunStatus::diverged;
    ss.failed[j] = s.status == RunStatus::diverged;
    res_jump[j] = has_objective_jump(r);
    plain_jump[j] = has_objective_jump(q);
    if (j == 0) first = {std::move(r), std::move(q), std::move(s)};
  });
  std::size_t res_wins = 0;
  for (std::size_t j = 0; j < J; ++j)
    if (rs.values[j] < ps.values[j]) ++res_wins;
  const auto frac = [J](std::size_t k) { return static_cast<double>(k) / static_cast<double>(J); };
  result.scalars["res_below_plain_fraction"] = frac(res_wins);
  result.scalars["plain_jump_fraction"] =
      frac(static_cast<std::size_t>(std::count(plain_jump.begin(), plain_jump.end(), true)));
  result.scalars["res_jump_fraction"] =
      frac(static_cast<std::size_t>(std::count(res_jump.begin(), res_jump.end(), true)));
  // Final objectives span many decades; bin them logarithmically.
  const auto edges = log_edges(1e-4, 1e12, 32);
  for (auto* s : {&rs, &ps, &ss}) detail::finalize_series(*s, edges);
  result.series = {std::move(rs), std::move(ps), std::move(ss)};
  result.traces = {{"RES", std::move(first[0])},
                   {"plain-SBFGS", std::move(first[1])},
                   {"SGD", std::move(first[2])}};
  return result;
}

inline ExperimentResult run_svm_study(const ExperimentSpec& spec) {
  switch (spec.kind) {
    case StudyKind::svm_convergence: return run_svm_convergence(spec);
    case StudyKind::svm_accuracy: return run_svm_accuracy(spec);
    case StudyKind::svm_regularization: return run_svm_regularization(spec);
    default: break;
  }
  throw std::invalid_argument("run_svm_study: not an SVM study kind");
}

// ---- rate check -------------------------------------------------------------

/// Q = max(b / (c - 1), t0 u0).
inline double lemma_bound_constant(double c, double b, double t0, double u0) {
  if (!(c > 1.0) || !(b >= 0.0) || !(t0 > 0.0) || !(u0 >= 0.0))
    throw std::invalid_argument("lemma_bound_constant: need c > 1, b >= 0, t0 > 0, u0 >= 0");
  return std::max(b / (c - 1.0), t0 * u0);
}

struct RecursionPoint {
  std::size_t t = 0;
  double u = 0.0;
  double bound = 0.0;
};

struct RecursionCheck {
  double c = 0, b = 0, t0 = 0, u0 = 0;
  double Q = 0;
  std::size_t horizon = 0;
  std::size_t violations = 0;
  std::vector<RecursionPoint> points;
};

/// Drives u_{t+1} = (1 - c/(t+t0)) u_t + b/(t+t0)^2 with equality and compares
/// every u_t against Q/(t+t0), allowing `slack` relative rounding error.
/// The bound is only guaranteed while 1 - c/(t+t0) >= 0, i.e. t0 >= c.
inline RecursionCheck check_lemma_recursion(double c, double b, double t0, double u0,
                                            std::size_t horizon, double slack = 1e-12,
                                            bool keep_points = true) {
  RecursionCheck out{c, b, t0, u0, lemma_bound_constant(c, b, t0, u0), horizon, 0, {}};
  if (keep_points) out.points.reserve(horizon + 1);
  double u = u0;
  for (std::size_t t = 0;; ++t) {
    const double k = static_cast<double>(t) + t0;
    const double bound = out.Q / k;
    if (u > bound * (1.0 + slack)) ++out.violations;
    if (keep_points) out.points.push_back({t, u, bound});
    if (t == horizon) break;
    u = (1.0 - c / k) * u + b / (k * k);
  }
  return out;
}

struct RatePoint {
  std::size_t t = 0;
  double gap = 0.0;    ///< seed-averaged F(w_t) - F*
  double bound = 0.0;  ///< C0 / (T0 + t), an estimate
};

struct RateCheckReport {
  RecursionCheck recursion;
  double rate_product = 0.0;  ///< 2 eps0 T0 Gamma
  std::size_t runs = 0;
  double s_sq_estimate = 0.0;
  double K_estimate = 0.0;
  double C0_estimate = 0.0;
  std::vector<RatePoint> empirical;
  /// Least-squares log-log slope of the averaged gap over t in [T0, horizon_factor T0].
  double fitted_slope = 0.0;
  /// Points where the averaged gap exceeded the estimated bound. Informational:
  /// the bound uses a surrogate for the second-moment constant.
  std::size_t empirical_violations = 0;
};

/// Exact check of the recursion bound plus an empirical O(1/t) check of RES on
/// a quadratic. The configuration must satisfy 2 eps0 T0 Gamma > 1.
inline RateCheckReport run_rate_check(const ExperimentSpec& spec) {
  detail::check_kind(spec, {StudyKind::rate_check}, "run_rate_check");
  RateCheckReport report;
  report.recursion = check_lemma_recursion(spec.c, spec.b, spec.t0, spec.u0, spec.horizon);

  const ResConfig probe = spec.res_config(1, 0);
  report.rate_product = probe.rate_product();
  if (!probe.satisfies_rate_condition())
    throw std::invalid_argument("run_rate_check: 2*eps0*T0*Gamma = " +
                                std::to_string(report.rate_product) + " must exceed 1");

  const auto p = generate_quadratic(spec.n, DiagonalLaw::powers_of_ten(spec.xi), spec.theta0,
                                    child_seed(spec.seed, 0, 0));
  const double f_star = p.optimal_value();
  const Vector w0 = detail::start_point(spec, spec.n, child_seed(spec.seed, 0, 3));
  const auto iters = static_cast<std::size_t>(std::ceil(spec.horizon_factor * spec.T0));

  // Pilot run: the largest observed |s|^2 stands in for the unknown S^2.
  {
    RunOptions pilot;
    double s_sq = 0.0;
    pilot.observer = [&](const IterationView& v) { s_sq = std::max(s_sq, v.gradient.squaredNorm()); };
    run_res(p, spec.res_config(iters, child_seed(spec.seed, 0, 7)), w0, pilot);
    report.s_sq_estimate = s_sq;
  }
  const double M = p.curvature_bounds().M_tilde;
  const double inv = (spec.delta > 0.0 ? 1.0 / spec.delta : 0.0) + spec.Gamma;
  report.K_estimate = M * report.s_sq_estimate * inv * inv / 2.0;
  const double e0T0 = spec.eps0 * spec.T0;
  report.C0_estimate = std::max(e0T0 * e0T0 * report.K_estimate / (2.0 * e0T0 * spec.Gamma - 1.0),
                                spec.T0 * (p.exact_objective(w0) - f_star));

  report.runs = spec.J;
  std::vector<std::vector<double>> gaps(spec.J);
  parallel_for(spec.J, spec.parallel, [&](std::size_t j) {
    RunOptions opts;
    opts.record_objective = true;
    const auto trace = run_res(p, spec.res_config(iters, child_seed(spec.seed, j, 1)), w0, opts);
    gaps[j].reserve(trace.records.size());
    for (const auto& r : trace.records) gaps[j].push_back(*r.objective - f_star);
  });
  report.empirical.resize(iters + 1);
  for (std::size_t t = 0; t <= iters; ++t) {
    double mean = 0.0;
    for (const auto& g : gaps) mean += g[t];
    mean /= static_cast<double>(spec.J);
    const double bound = report.C0_estimate / (spec.T0 + static_cast<double>(t));
    report.empirical[t] = {t, mean, bound};
    if (mean > bound) ++report.empirical_violations;
  }

  // Log-spaced sample of the window so every decade weighs the same.
  std::vector<double> xs, ys;
  const double lo = std::max(1.0, spec.T0), hi = static_cast<double>(iters);
  std::size_t last = 0;
  for (int k = 0; k <= 60; ++k) {
    const auto t = static_cast<std::size_t>(std::llround(lo * std::pow(hi / lo, k / 60.0)));
    if (t == last || t > iters) continue;
    last = t;
    const double g = report.empirical[t].gap;
    if (g > 0.0) {
      xs.push_back(static_cast<double>(t));
      ys.push_back(g);
    }
  }
  report.fitted_slope = xs.size() >= 2 ? log_log_slope(xs, ys) : 0.0;
  return report;
}

/// Runs any study except the rate check.
inline ExperimentResult run_study(const ExperimentSpec& spec) {
  switch (spec.kind) {
    case StudyKind::condition: return run_condition_study(spec);
    case StudyKind::sample_size: return run_sample_size_study(spec);
    case StudyKind::dimension: return run_dimension_study(spec);
    case StudyKind::svm_convergence:
    case StudyKind::svm_accuracy:
    case StudyKind::svm_regularization: return run_svm_study(spec);
    case StudyKind::rate_check: break;
  }
  throw std::invalid_argument("run_study: use run_rate_check for the rate check");
}

}  // namespace res
