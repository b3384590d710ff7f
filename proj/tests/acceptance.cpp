// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <Eigen/Eigenvalues>
#include <chrono>
#include <cstdio>
#include <string>

#include "corpus.hpp"
#include "res/experiments.hpp"
#include "res/quadratic.hpp"
#include "res/svm.hpp"

using namespace res;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double min_eig(const Matrix& m) {
  return Eigen::SelfAdjointEigenSolver<Matrix>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

template <typename F>
Vector central_difference(F&& f, const Vector& w, double h = 1e-6) {
  Vector g(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    Vector p = w, m = w;
    p[i] += h;
    m[i] -= h;
    g[i] = (f(p) - f(m)) / (2.0 * h);
  }
  return g;
}

double rel_error(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max(1e-12, b.norm());
}

void update_criteria() {
  const auto start = std::chrono::steady_clock::now();
  const auto corpus = testing::update_corpus(1000, {1, 2, 5, 20, 50}, {0.0, 1e-3, 1e-1}, 2024);
  double worst_secant = 0.0, worst_floor = 1e300, worst_classic = 0.0, worst_sm = 0.0;
  bool secant_ok = true, floor_ok = true, classic_ok = true, sm_ok = true;
  for (const auto& c : corpus) {
    HessianApprox H = c.before;
    if (regularized_update(H, c.pair) != UpdateStatus::accepted) {
      secant_ok = false;
      continue;
    }
    const Matrix& B = H.matrix();
    const double secant = (B * c.pair.v - c.pair.r_hat).norm() / (1.0 + c.pair.r_hat.norm());
    worst_secant = std::max(worst_secant, secant);
    secant_ok = secant_ok && secant <= 1e-8;

    const double floor = min_eig(B) - H.delta();
    worst_floor = std::min(worst_floor, floor);
    floor_ok = floor_ok && floor >= -1e-8;

    if (H.delta() == 0.0) {
      HessianApprox classic = c.before;
      classic_update(classic, c.pair.v, c.pair.r_hat);
      const double diff = (classic.matrix() - B).cwiseAbs().maxCoeff();
      worst_classic = std::max(worst_classic, diff);
      classic_ok = classic_ok && diff <= 1e-12;
    }

    Matrix shifted = B;
    shifted.diagonal().array() -= H.delta();
    const Matrix direct = shifted.fullPivLu().inverse();
    const double sm = (inverse_of_shifted(c.before, c.pair) - direct).norm() / direct.norm();
    worst_sm = std::max(worst_sm, sm);
    sm_ok = sm_ok && sm <= 1e-8;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report(1, secant_ok && corpus.size() == 1000 && secs < 10.0,
         fmt("%zu updates, worst scaled secant residual %.3g, %.2f s (all checks)", corpus.size(),
             worst_secant, secs));
  report(2, floor_ok, fmt("worst min-eig(B) - delta = %.3g", worst_floor));
  report(3, classic_ok, fmt("worst elementwise difference at delta=0: %.3g", worst_classic));
  report(4, sm_ok, fmt("worst relative inverse error: %.3g", worst_sm));
}

void gradient_criterion() {
  double worst = 0.0;
  Rng rng(77);
  const auto q = generate_quadratic(10, DiagonalLaw::powers_of_ten(2), 0.5, 9);
  for (int k = 0; k < 10; ++k) {
    Vector w(10);
    for (Eigen::Index i = 0; i < 10; ++i) w[i] = rng.uniform(-5.0, 5.0);
    const auto batch = q.draw_batch(1, rng);
    const Vector& theta = batch.samples.front();
    const Vector fd = central_difference([&](const Vector& x) { return q.sample_value(x, theta); }, w);
    worst = std::max(worst, rel_error(q.sample_gradient(w, theta), fd));
  }
  const auto data = std::make_shared<const TrainingSet>(generate_svm_data(6, 100, std::uint64_t{5}));
  for (auto loss : {LossKind::hinge, LossKind::squared_hinge, LossKind::log}) {
    const SvmProblem p(data, 1e-3, loss);
    for (int k = 0; k < 10; ++k) {
      Vector w(6);
      for (Eigen::Index i = 0; i < 6; ++i) w[i] = rng.uniform(-2.0, 2.0);
      const auto i = static_cast<std::size_t>(rng.index(100));
      const Vector fd = central_difference([&](const Vector& x) { return p.sample_value(x, i); }, w);
      worst = std::max(worst, rel_error(p.sample_gradient(w, i), fd));
    }
  }
  report(5, worst < 1e-5, fmt("40 points, worst relative error %.3g", worst));
}

void run_criteria() {
  const double delta = 1e-3, Gamma = 1e-4;
  double lo = 1e300, hi = 0.0, worst_guard = 1e300;
  std::size_t matrices = 0, skipped = 0, iterations = 0;
  for (int k = 0; k < 6; ++k) {
    const int xi = k % 3;
    const auto p = generate_quadratic(20, DiagonalLaw::powers_of_ten(xi), 0.5, 500 + k);
    const double m = p.curvature_bounds().m_tilde;
    ResConfig cfg;
    cfg.delta = delta;
    cfg.Gamma = Gamma;
    cfg.max_iters = 2000;
    cfg.seed = 600 + k;
    RunOptions opts;
    opts.observer = [&](const IterationView& view) {
      ++iterations;
      const Vector eig =
          Eigen::SelfAdjointEigenSolver<Matrix>(descent_matrix(*view.before, Gamma)).eigenvalues();
      lo = std::min(lo, eig.minCoeff());
      hi = std::max(hi, eig.maxCoeff());
      ++matrices;
      const auto& v = view.pair->v;
      worst_guard = std::min(worst_guard, view.pair->r_tilde.dot(v) - (m - delta - 1e-8) * v.squaredNorm());
    };
    skipped += run_res(p, cfg, Vector::Zero(20), opts).skipped_updates;
  }
  report(6, lo >= Gamma && hi <= 1.0 / delta + Gamma,
         fmt("%zu matrices, eigenvalues in [%.17g, %.17g]", matrices, lo, hi));
  report(7, worst_guard >= 0.0 && skipped == 0,
         fmt("%zu iterations, min r~'v - (m~ - delta - 1e-8)|v|^2 = %.3g, skipped %zu", iterations,
             worst_guard, skipped));
}

void recursion_criterion() {
  Rng rng(31);
  std::size_t violations = 0;
  for (int k = 0; k < 20; ++k) {
    const double c = 1.0 + rng.uniform(0.01, 9.0);
    const double b = std::pow(10.0, rng.uniform(-3.0, 3.0));
    // The bound holds for t0 >= c; see the README.
    const double t0 = c + rng.uniform(0.0, 100.0);
    const double u0 = rng.uniform(0.0, 10.0);
    violations += check_lemma_recursion(c, b, t0, u0, 100000, 1e-12, false).violations;
  }
  report(8, violations == 0, fmt("20 tuples to t = 1e5, %zu violations", violations));
}

void study_criteria() {
  {
    auto spec = defaults_for(StudyKind::condition);
    spec.xi = 2;
    const auto r = run_study(spec);
    const double res = r.find("RES").summary.mean, sgd = r.find("SGD").summary.mean;
    report(9, sgd / res >= 5.0 && res >= 1e2 && res <= 1e3,
           fmt("xi=2 mean tau RES %.1f SGD %.1f ratio %.1f", res, sgd, sgd / res));
  }
  {
    auto spec = defaults_for(StudyKind::condition);
    spec.xi = 0;
    const auto r = run_study(spec);
    const double res = r.find("RES").summary.mean, sgd = r.find("SGD").summary.mean;
    const bool ok = res < 2e3 && sgd < 2e3 && std::max(res, sgd) <= 10.0 * std::min(res, sgd) && res <= sgd;
    report(10, ok, fmt("xi=0 mean tau RES %.1f SGD %.1f", res, sgd));
  }
  {
    const auto spec = defaults_for(StudyKind::sample_size);
    const auto r = run_study(spec);
    std::vector<double> mean, sd;
    std::string text = "L:";
    for (const auto& s : r.series) {
      mean.push_back(s.summary.mean);
      sd.push_back(s.summary.std);
      text += fmt(" %s mean %.1f std %.1f;", s.parameter.c_str(), s.summary.mean, s.summary.std);
    }
    const auto argmin = std::min_element(mean.begin(), mean.end()) - mean.begin();
    const bool interior = spec.batch_sizes.size() == 5 && argmin >= 1 && argmin <= 3;
    bool sd_decreasing = true;
    for (std::size_t k = 1; k < sd.size(); ++k) sd_decreasing = sd_decreasing && sd[k] < sd[k - 1];
    text += interior ? " interior minimum yes" : " interior minimum no";
    text += sd_decreasing ? ", std decreasing yes" : ", std decreasing no";
    report(11, interior && sd_decreasing, text);
  }
  {
    auto spec = defaults_for(StudyKind::dimension);
    spec.dimensions = {50};
    const auto r = run_study(spec);
    const double res = r.find("RES[n=50]").summary.median, sgd = r.find("SGD[n=50]").summary.median;
    const double fail = r.scalars.at("failure_rate_RES[n=50]");
    report(12, res < sgd / 3.0 && fail < 0.05,
           fmt("n=50 median tau RES %.1f SGD %.1f, RES failure rate %.2f", res, sgd, fail));
  }
  {
    const auto spec = defaults_for(StudyKind::svm_accuracy);
    const auto r = run_study(spec);
    const double res = r.find("RES").summary.mean, sgd = r.find("SGD").summary.mean;
    const double clair = r.scalars.at("clairvoyant_accuracy");
    report(13, res >= 0.75 && res > sgd && std::abs(clair - 0.98) <= 0.01,
           fmt("mean accuracy RES %.4f SGD %.4f, clairvoyant %.4f", res, sgd, clair));
  }
  {
    const auto spec = defaults_for(StudyKind::svm_regularization);
    const auto r = run_study(spec);
    const double below = r.scalars.at("res_below_plain_fraction");
    const double jump = r.scalars.at("plain_jump_fraction");
    report(14, spec.J == 20 && below >= 0.7 && jump >= 0.5,
           fmt("%zu seeds, RES below plain %.2f, plain 10x jump %.2f", spec.J, below, jump));
  }
  {
    const auto spec = defaults_for(StudyKind::rate_check);
    const auto r = run_rate_check(spec);
    report(15, r.runs == 50 && r.rate_product > 1.0 && r.fitted_slope <= -0.8,
           fmt("%zu runs, 2 eps0 T0 Gamma = %g, fitted slope %.3f", r.runs, r.rate_product,
               r.fitted_slope));
  }
}

}  // namespace

int main() {
  update_criteria();
  gradient_criterion();
  run_criteria();
  recursion_criterion();
  study_criteria();
  std::printf("%d of 15 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
