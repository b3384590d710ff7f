// res_cli: run the stochastic quasi-Newton studies and single training jobs.
//
// Exit status: 0 success, 1 unexpected error, 2 invalid spec or arguments,
// 3 output directory not writable, 4 every run failed or diverged.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "res/experiments.hpp"
#include "res/io.hpp"
#include "res/report.hpp"
#include "res/spec.hpp"

namespace fs = std::filesystem;
using namespace res;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitOutput = 3;
constexpr int kExitAllFailed = 4;

struct ExitCode {
  int code;
  std::string message;
};

struct StudyFlags {
  std::string spec_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> parallel;
  std::optional<long long> reps;
  std::optional<long long> xi;
  std::vector<long long> n;
  std::vector<long long> L;
  std::optional<double> delta, gamma, eps0, T0, rho;
  std::optional<long long> cap;
  // svm
  std::string svm_kind = "accuracy";
  std::optional<long long> n_train, n_test;
  std::optional<double> lambda;
  std::optional<std::string> loss;
  // rate check
  std::optional<double> c, b, t0, u0;
  std::optional<long long> horizon;
};

void add_common(CLI::App* cmd, StudyFlags& f) {
  cmd->add_option("--spec", f.spec_path, "TOML or JSON study description")->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "Directory for CSV outputs");
  cmd->add_option("--seed", f.seed, "Master seed (fallback: the spec, then RES_SEED)");
  cmd->add_option("--parallel", f.parallel, "Worker threads (0 = all cores, 1 = sequential)");
  cmd->add_option("--reps", f.reps, "Number of realizations J");
  cmd->add_option("--delta", f.delta, "Curvature regularization delta");
  cmd->add_option("--gamma", f.gamma, "Identity bias Gamma");
  cmd->add_option("--eps0", f.eps0, "Initial step size");
  cmd->add_option("--T0", f.T0, "Step-size decay constant");
}

void add_quadratic(CLI::App* cmd, StudyFlags& f) {
  cmd->add_option("--xi", f.xi, "Condition number exponent");
  cmd->add_option("--rho", f.rho, "Relative distance threshold");
  cmd->add_option("--cap", f.cap, "Processed-function cap");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ExitCode{kExitInvalid, "cannot read '" + path + "'"};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Seed from RES_SEED, if set.
std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("RES_SEED");
  if (!raw || !*raw) return std::nullopt;
  std::uint64_t v = 0;
  const std::string s(raw);
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw ExitCode{kExitInvalid, "RES_SEED='" + s + "' is not an unsigned 64-bit integer"};
  return v;
}

void print_diagnostics(const std::vector<Diagnostic>& diags, const std::string& source) {
  for (const auto& d : diags) std::cerr << source << ": " << d.str() << '\n';
}

/// Builds the spec: kind defaults, then the spec file, then flags.
SpecDocument build_spec(StudyKind kind, const StudyFlags& f) {
  nlohmann::json doc = nlohmann::json::object();
  LineMap lines;
  const std::string source = f.spec_path.empty() ? "arguments" : f.spec_path;
  if (!f.spec_path.empty()) {
    const std::string text = read_file(f.spec_path);
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
      const auto parsed = parse_spec(text, kind);
      if (!parsed.errors().empty()) {
        print_diagnostics(parsed.diagnostics, source);
        throw ExitCode{kExitInvalid, ""};
      }
      doc = nlohmann::json::parse(text);
    } else {
      auto toml = parse_toml(text);
      if (!toml.diagnostics.empty()) {
        // Report parse and validation problems together.
        const auto parsed = parse_spec(text, kind);
        print_diagnostics(parsed.diagnostics, source);
        throw ExitCode{kExitInvalid, ""};
      }
      doc = std::move(toml.value);
      lines = std::move(toml.lines);
    }
  }

  const bool sweep_L = kind == StudyKind::sample_size;
  const bool sweep_n = kind == StudyKind::dimension || kind == StudyKind::svm_convergence;
  std::vector<std::string> arg_errors;
  if (f.seed) {
    doc["seed"] = *f.seed;
  } else if (!doc.contains("seed")) {
    if (auto s = env_seed()) doc["seed"] = *s;
  }
  if (f.parallel) doc["parallel"] = *f.parallel;
  if (f.reps) doc["J"] = *f.reps;
  if (f.xi) doc["xi"] = *f.xi;
  if (!f.n.empty()) {
    if (sweep_n) doc["dimensions"] = f.n;
    else if (f.n.size() == 1) doc["n"] = f.n.front();
    else arg_errors.push_back("--n takes a single value for this study");
  }
  if (!f.L.empty()) {
    if (sweep_L) doc["batch_sizes"] = f.L;
    else if (f.L.size() == 1) doc["L"] = f.L.front();
    else arg_errors.push_back("--L takes a single value for this study");
  }
  if (f.delta) doc["delta"] = *f.delta;
  if (f.gamma) doc["Gamma"] = *f.gamma;
  if (f.eps0) doc["eps0"] = *f.eps0;
  if (f.T0) doc["T0"] = *f.T0;
  if (f.rho) doc["rho"] = *f.rho;
  if (f.cap) doc["cap"] = *f.cap;
  if (f.n_train) doc["n_train"] = *f.n_train;
  if (f.n_test) doc["n_test"] = *f.n_test;
  if (f.lambda) doc["lambda"] = *f.lambda;
  if (f.loss) doc["loss"] = *f.loss;
  if (f.c) doc["c"] = *f.c;
  if (f.b) doc["b"] = *f.b;
  if (f.t0) doc["t0"] = *f.t0;
  if (f.u0) doc["u0"] = *f.u0;
  if (f.horizon) doc["horizon"] = *f.horizon;
  if (!f.out.empty()) doc["out"] = f.out;

  auto result = validate_spec(doc, kind, lines);
  for (const auto& e : arg_errors)
    result.diagnostics.push_back({Diagnostic::Severity::error, "", std::nullopt, e});
  print_diagnostics(result.diagnostics, source);
  if (!result.errors().empty()) throw ExitCode{kExitInvalid, ""};
  return *result.document;
}

/// Creates the output directory and checks that files can be written there.
std::optional<fs::path> prepare_output(const std::optional<std::string>& out) {
  if (!out) return std::nullopt;
  const fs::path dir(*out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw ExitCode{kExitOutput, "cannot create output directory '" + *out + "'"};
  const fs::path probe = dir / ".res_cli_probe";
  {
    std::ofstream test(probe);
    if (!test) throw ExitCode{kExitOutput, "output directory '" + *out + "' is not writable"};
  }
  fs::remove(probe, ec);
  return dir;
}

template <typename Write>
void write_outputs(const std::optional<fs::path>& dir, Write&& write) {
  if (!dir) return;
  try {
    for (const auto& f : write(*dir)) std::cout << "wrote " << f << '\n';
  } catch (const std::runtime_error& e) {
    throw ExitCode{kExitOutput, e.what()};
  }
}

bool all_failed(const ExperimentResult& r) {
  for (const auto& s : r.series)
    if (s.summary.failures < s.summary.count) return false;
  return true;
}

void print_series(const ExperimentResult& r, const char* value_name) {
  for (const auto& s : r.series) {
    std::printf("%-18s mean %s %.6g  median %.6g  std %.6g  failures %zu/%zu\n", s.label().c_str(),
                value_name, s.summary.mean, s.summary.median, s.summary.std, s.summary.failures,
                s.summary.count);
  }
  for (const auto& [name, v] : r.scalars) std::printf("%s: %.6g\n", name.c_str(), v);
}

int run_study_command(StudyKind kind, const StudyFlags& flags) {
  const SpecDocument doc = build_spec(kind, flags);
  const auto dir = prepare_output(doc.out);
  const ExperimentSpec& spec = doc.spec;

  if (kind == StudyKind::rate_check) {
    const auto report = run_rate_check(spec);
    const auto& rec = report.recursion;
    std::printf("recursion: c=%g b=%g t0=%g u0=%g horizon=%zu\n", rec.c, rec.b, rec.t0, rec.u0,
                rec.horizon);
    std::printf("Q: %.17g\n", rec.Q);
    std::printf("violations: %zu\n", rec.violations);
    std::printf("empirical: runs=%zu 2*eps0*T0*Gamma=%g fitted slope %.4f over t in [T0, %g*T0]\n",
                report.runs, report.rate_product, report.fitted_slope, spec.horizon_factor);
    std::printf("C0 (estimate, S^2 from pilot run): %.6g  points above estimated bound: %zu\n",
                report.C0_estimate, report.empirical_violations);
    write_outputs(dir, [&](const fs::path& d) { return write_rate_report(d, report); });
    return rec.violations == 0 ? kExitOk : kExitAllFailed;
  }

  const auto result = run_study(spec);
  std::printf("study: %s  J=%zu  seed=%llu\n", to_string(spec.kind), spec.J,
              static_cast<unsigned long long>(spec.seed));
  switch (kind) {
    case StudyKind::svm_accuracy: print_series(result, "accuracy"); break;
    case StudyKind::svm_regularization: print_series(result, "final objective"); break;
    case StudyKind::svm_convergence: print_series(result, "processed functions to target"); break;
    default: print_series(result, "tau"); break;
  }
  write_outputs(dir, [&](const fs::path& d) { return write_result(d, result); });
  if (all_failed(result)) {
    std::cerr << "every run failed to converge\n";
    return kExitAllFailed;
  }
  return kExitOk;
}

// ---- gen-data --------------------------------------------------------------

struct GenFlags {
  int n = 4;
  long long N = 100;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int run_gen_data(const GenFlags& f) {
  std::optional<std::uint64_t> seed = f.seed ? f.seed : env_seed();
  if (f.n < 1) throw ExitCode{kExitInvalid, "--n must be >= 1"};
  if (f.N < 2 || f.N % 2 != 0) throw ExitCode{kExitInvalid, "--N must be even and >= 2"};
  const TrainingSet data = generate_svm_data(f.n, static_cast<int>(f.N), seed.value_or(1));
  if (f.out.empty() || f.out == "-") {
    write_training_set(std::cout, data);
    return kExitOk;
  }
  const fs::path path(f.out);
  if (path.has_parent_path()) prepare_output(path.parent_path().string());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ExitCode{kExitOutput, "cannot write '" + f.out + "'"};
  write_training_set(out, data);
  return kExitOk;
}

// ---- train -----------------------------------------------------------------

struct TrainFlags {
  std::string data;
  std::string test;
  std::string out;
  std::string algorithm = "res";
  std::string loss = "squared_hinge";
  double lambda = 1e-3;
  std::optional<std::size_t> iters;
  std::size_t L = 0;  // 0: 5 for RES, 1 for SGD
  double delta = 1e-3;
  double gamma = 1e-4;
  double eps0 = 3e-2;
  double T0 = 1e3;
  std::size_t every = 1;
  std::optional<std::uint64_t> seed;
};

TrainingSet load_data(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ExitCode{kExitInvalid, "cannot read '" + path + "'"};
  try {
    return read_training_set(in);
  } catch (const std::invalid_argument& e) {
    throw ExitCode{kExitInvalid, path + ": " + e.what()};
  }
}

int run_train(const TrainFlags& f) {
  const auto dir = prepare_output(f.out.empty() ? std::nullopt : std::optional(f.out));
  LossKind loss;
  try {
    loss = parse_loss_kind(f.loss);
  } catch (const std::invalid_argument& e) {
    throw ExitCode{kExitInvalid, e.what()};
  }
  const bool is_res = f.algorithm == "res";
  if (!is_res && f.algorithm != "sgd")
    throw ExitCode{kExitInvalid, "--algorithm must be res or sgd"};
  const TrainingSet data = load_data(f.data);
  std::optional<TrainingSet> test;
  if (!f.test.empty()) test = load_data(f.test);
  if (test && test->dimension() != data.dimension())
    throw ExitCode{kExitInvalid, "test set dimension differs from training set"};

  const std::uint64_t seed = f.seed ? *f.seed : env_seed().value_or(1);
  const std::size_t L = f.L ? f.L : (is_res ? 5 : 1);
  const auto N = static_cast<std::size_t>(data.size());
  const std::size_t iters = f.iters.value_or(std::max<std::size_t>(1, N / L));
  const SvmProblem problem(data, f.lambda, loss);
  const Vector w0 = Vector::Zero(problem.dimension());
  RunOptions opts;
  opts.record_objective = true;
  opts.objective_every = std::max<std::size_t>(1, f.every);

  RunTrace trace;
  try {
    if (is_res) {
      ResConfig cfg;
      cfg.L = L;
      cfg.delta = f.delta;
      cfg.Gamma = f.gamma;
      cfg.schedule = StepSchedule::decaying(f.eps0, f.T0);
      cfg.max_iters = iters;
      cfg.seed = seed;
      cfg.validate();
      trace = run_res(problem, cfg, w0, opts);
    } else {
      SgdConfig cfg;
      cfg.L = L;
      cfg.schedule = StepSchedule::decaying(f.eps0, f.T0);
      cfg.max_iters = iters;
      cfg.seed = seed;
      cfg.validate();
      trace = run_sgd(problem, cfg, w0, opts);
    }
  } catch (const DivergedError& e) {
    trace = e.trace();
  } catch (const std::invalid_argument& e) {
    throw ExitCode{kExitInvalid, e.what()};
  }

  std::printf("algorithm: %s  L=%zu  iterations=%zu  status=%s\n", f.algorithm.c_str(), L, iters,
              to_string(trace.status));
  if (trace.status != RunStatus::diverged) {
    std::printf("final objective: %.10g\n", problem.exact_objective(trace.final_iterate));
    std::printf("training accuracy: %.6g\n", classify_accuracy(trace.final_iterate, data));
    if (test) std::printf("test accuracy: %.6g\n", classify_accuracy(trace.final_iterate, *test));
  }
  write_outputs(dir, [&](const fs::path& d) {
    std::vector<std::string> files;
    files.push_back(detail::write_file(d, "trace.csv", [&](std::ostream& o) { write_trace(o, trace); }));
    files.push_back(detail::write_file(d, "weights.csv", [&](std::ostream& o) {
      o << "index,w\n";
      for (Eigen::Index i = 0; i < trace.final_iterate.size(); ++i)
        o << i + 1 << ',' << format_double(trace.final_iterate[i]) << '\n';
    }));
    return files;
  });
  return trace.status == RunStatus::diverged ? kExitAllFailed : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regularized stochastic BFGS experiments"};
  app.require_subcommand(1);

  StudyFlags cond, dim, sample, svm, rate;
  auto* c_cmd = app.add_subcommand("quad-condition", "Condition-number study on quadratics");
  add_common(c_cmd, cond);
  add_quadratic(c_cmd, cond);
  c_cmd->add_option("--n", cond.n, "Dimension")->expected(1);
  c_cmd->add_option("--L", cond.L, "RES batch size")->expected(1);

  auto* d_cmd = app.add_subcommand("quad-dimension", "Dimension study on quadratics");
  add_common(d_cmd, dim);
  add_quadratic(d_cmd, dim);
  d_cmd->add_option("--n", dim.n, "Dimensions to sweep")->expected(1, 64);
  d_cmd->add_option("--L", dim.L, "RES batch size")->expected(1);

  auto* s_cmd = app.add_subcommand("sample-size", "Batch-size study on quadratics");
  add_common(s_cmd, sample);
  add_quadratic(s_cmd, sample);
  s_cmd->add_option("--n", sample.n, "Dimension")->expected(1);
  s_cmd->add_option("--L", sample.L, "Batch sizes to sweep")->expected(1, 64);

  auto* v_cmd = app.add_subcommand("svm", "SVM studies");
  add_common(v_cmd, svm);
  v_cmd->add_option("--kind", svm.svm_kind, "convergence, accuracy or regularization")
      ->check(CLI::IsMember({"convergence", "accuracy", "regularization"}));
  v_cmd->add_option("--n", svm.n, "Feature dimension (several for convergence)")->expected(1, 64);
  v_cmd->add_option("--L", svm.L, "RES batch size")->expected(1);
  v_cmd->add_option("--train", svm.n_train, "Training set size");
  v_cmd->add_option("--test", svm.n_test, "Test set size");
  v_cmd->add_option("--lambda", svm.lambda, "Regularization weight");
  v_cmd->add_option("--loss", svm.loss, "hinge, squared_hinge or log");

  auto* r_cmd = app.add_subcommand("rate-check", "Recursion bound and empirical O(1/t) check");
  add_common(r_cmd, rate);
  r_cmd->add_option("--n", rate.n, "Dimension")->expected(1);
  r_cmd->add_option("--L", rate.L, "RES batch size")->expected(1);
  r_cmd->add_option("--xi", rate.xi, "Condition number exponent");
  r_cmd->add_option("--c", rate.c, "Recursion constant c > 1");
  r_cmd->add_option("--b", rate.b, "Recursion constant b >= 0");
  r_cmd->add_option("--t0", rate.t0, "Recursion offset t0 > 0");
  r_cmd->add_option("--u0", rate.u0, "Recursion start u0 >= 0");
  r_cmd->add_option("--horizon", rate.horizon, "Last recursion index checked");

  TrainFlags train;
  auto* t_cmd = app.add_subcommand("train", "Train a linear classifier on a CSV training set");
  t_cmd->add_option("--data", train.data, "Training CSV (x_1..x_n,y)")->required();
  t_cmd->add_option("--test-data", train.test, "Optional test CSV");
  t_cmd->add_option("--out", train.out, "Directory for trace.csv and weights.csv");
  t_cmd->add_option("--algorithm", train.algorithm, "res or sgd");
  t_cmd->add_option("--loss", train.loss, "hinge, squared_hinge or log");
  t_cmd->add_option("--lambda", train.lambda, "Regularization weight");
  t_cmd->add_option("--iters", train.iters, "Iterations (default: one pass over the data)");
  t_cmd->add_option("--L", train.L, "Batch size (default 5 for RES, 1 for SGD)");
  t_cmd->add_option("--delta", train.delta, "Curvature regularization delta");
  t_cmd->add_option("--gamma", train.gamma, "Identity bias Gamma");
  t_cmd->add_option("--eps0", train.eps0, "Initial step size");
  t_cmd->add_option("--T0", train.T0, "Step-size decay constant");
  t_cmd->add_option("--every", train.every, "Record the objective every k iterations");
  t_cmd->add_option("--seed", train.seed, "Seed (fallback: RES_SEED)");

  GenFlags gen;
  auto* g_cmd = app.add_subcommand("gen-data", "Write a synthetic two-class training set as CSV");
  g_cmd->add_option("--n", gen.n, "Feature dimension");
  g_cmd->add_option("--N", gen.N, "Number of pairs (even)");
  g_cmd->add_option("--seed", gen.seed, "Seed (fallback: RES_SEED)");
  g_cmd->add_option("--out", gen.out, "Output file (default: standard output)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (c_cmd->parsed()) return run_study_command(StudyKind::condition, cond);
    if (d_cmd->parsed()) return run_study_command(StudyKind::dimension, dim);
    if (s_cmd->parsed()) return run_study_command(StudyKind::sample_size, sample);
    if (v_cmd->parsed()) {
      StudyKind kind = svm.svm_kind == "convergence" ? StudyKind::svm_convergence
                       : svm.svm_kind == "regularization" ? StudyKind::svm_regularization
                                                          : StudyKind::svm_accuracy;
      // Without --kind, a spec file may name the SVM study itself.
      if (v_cmd->count("--kind") == 0 && !svm.spec_path.empty()) {
        const auto parsed = parse_spec(read_file(svm.spec_path));
        if (parsed.ok()) kind = parsed.document->spec.kind;
        if (kind != StudyKind::svm_convergence && kind != StudyKind::svm_accuracy &&
            kind != StudyKind::svm_regularization)
          throw ExitCode{kExitInvalid, svm.spec_path + ": not an SVM study"};
      }
      return run_study_command(kind, svm);
    }
    if (r_cmd->parsed()) return run_study_command(StudyKind::rate_check, rate);
    if (t_cmd->parsed()) return run_train(train);
    if (g_cmd->parsed()) return run_gen_data(gen);
  } catch (const ExitCode& e) {
    if (!e.message.empty()) std::cerr << "error: " << e.message << '\n';
    return e.code;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
