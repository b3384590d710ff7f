#pragma once

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "res/optimizer.hpp"
#include "res/quadratic.hpp"
#include "res/svm.hpp"

namespace res {

/// 17 significant digits, enough for an exact round trip.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// ---- training sets -------------------------------------------------------

/// Header row x_1,...,x_n,y then one row per pair.
inline void write_training_set(std::ostream& out, const TrainingSet& data) {
  for (Eigen::Index k = 0; k < data.dimension(); ++k) out << "x_" << (k + 1) << ',';
  out << "y\n";
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index k = 0; k < data.dimension(); ++k)
      out << format_double(data.features(k, i)) << ',';
    out << (data.labels[i] > 0 ? "1" : "-1") << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_cell(const std::string& cell, std::size_t row) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != cell.size())
    throw std::invalid_argument("line " + std::to_string(row) + ": '" + cell + "' is not a number");
  return value;
}

}  // namespace detail

/// Reads rows x_1,...,x_n,y. A leading header row is optional.
inline TrainingSet read_training_set(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = detail::split_csv_line(line);
    if (rows.empty() && width == 0 && !cells.empty() && cells.front().rfind("x_", 0) == 0) {
      width = cells.size();
      continue;
    }
    if (width == 0) width = cells.size();
    if (cells.size() != width || width < 2)
      throw std::invalid_argument("line " + std::to_string(lineno) + ": expected " +
                                  std::to_string(width) + " columns, got " +
                                  std::to_string(cells.size()));
    std::vector<double> row;
    row.reserve(width);
    for (const auto& c : cells) row.push_back(detail::parse_cell(c, lineno));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("training set file contains no rows");
  const auto n = static_cast<Eigen::Index>(width - 1);
  const auto N = static_cast<Eigen::Index>(rows.size());
  Matrix x(n, N);
  Vector y(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index k = 0; k < n; ++k) x(k, i) = rows[i][k];
    y[i] = rows[i][n];
  }
  return TrainingSet(std::move(x), std::move(y));
}

inline void save_training_set(const std::string& path, const TrainingSet& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_training_set(out, data);
}

inline TrainingSet load_training_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return read_training_set(in);
}

// ---- quadratic descriptors -----------------------------------------------

inline nlohmann::json to_json(const QuadraticProblem& p) {
  nlohmann::json j;
  j["diagonal"] = std::vector<double>(p.diagonal().data(), p.diagonal().data() + p.dimension());
  j["b"] = std::vector<double>(p.linear_term().data(),
                               p.linear_term().data() + p.dimension());
  j["theta0"] = p.theta0();
  if (p.seed()) j["seed"] = *p.seed();
  return j;
}

inline QuadraticProblem quadratic_from_json(const nlohmann::json& j) {
  const auto a = j.at("diagonal").get<std::vector<double>>();
  const auto b = j.at("b").get<std::vector<double>>();
  std::optional<std::uint64_t> seed;
  if (j.contains("seed")) seed = j.at("seed").get<std::uint64_t>();
  return QuadraticProblem(Eigen::Map<const Vector>(a.data(), static_cast<Eigen::Index>(a.size())),
                          Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size())),
                          j.at("theta0").get<double>(), seed);
}

// ---- traces ----------------------------------------------------------------

/// Columns t,functions_processed,eps_t,rel_dist,objective,skipped_update,status.
/// Missing optional values are left empty; status is the run status, repeated.
inline void write_trace(std::ostream& out, const RunTrace& trace) {
  out << "t,functions_processed,eps_t,rel_dist,objective,skipped_update,status\n";
  const char* status = to_string(trace.status);
  for (const auto& r : trace.records) {
    out << r.t << ',' << r.functions_processed << ',' << format_double(r.eps) << ',';
    if (r.rel_dist) out << format_double(*r.rel_dist);
    out << ',';
    if (r.objective) out << format_double(*r.objective);
    out << ',' << (r.skipped_update ? 1 : 0) << ',' << status << '\n';
  }
}

}  // namespace res
