#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "res/experiments.hpp"
#include "res/io.hpp"

namespace res {

inline void write_summary(std::ostream& out, const ExperimentResult& result) {
  out << "algorithm,mean,median,std,failures\n";
  for (const auto& s : result.series) {
    out << s.label() << ',' << format_double(s.summary.mean) << ','
        << format_double(s.summary.median) << ',' << format_double(s.summary.std) << ','
        << s.summary.failures << '\n';
  }
}

inline void write_histogram(std::ostream& out, const ExperimentResult& result) {
  out << "algorithm,bin_lo,bin_hi,count\n";
  for (const auto& s : result.series)
    for (const auto& b : s.bins)
      out << s.label() << ',' << format_double(b.lo) << ',' << format_double(b.hi) << ','
          << b.count << '\n';
}

/// One row per realization and series: the raw values behind the summary.
inline void write_values(std::ostream& out, const ExperimentResult& result) {
  out << "algorithm,realization,value,failed\n";
  for (const auto& s : result.series)
    for (std::size_t j = 0; j < s.values.size(); ++j)
      out << s.label() << ',' << j << ',' << format_double(s.values[j]) << ','
          << (s.failed[j] ? 1 : 0) << '\n';
}

inline void write_curves(std::ostream& out, const ExperimentResult& result) {
  out << "algorithm,functions_processed,mean_objective\n";
  for (const auto& c : result.curves)
    for (const auto& p : c.points)
      out << c.label << ',' << p.functions_processed << ',' << format_double(p.value) << '\n';
}

inline void write_scalars(std::ostream& out, const ExperimentResult& result) {
  out << "name,value\n";
  for (const auto& [name, value] : result.scalars) out << name << ',' << format_double(value) << '\n';
}

inline void write_recursion(std::ostream& out, const RecursionCheck& check) {
  out << "t,u_t,bound\n";
  for (const auto& p : check.points)
    out << p.t << ',' << format_double(p.u) << ',' << format_double(p.bound) << '\n';
}

inline void write_rate_empirical(std::ostream& out, const RateCheckReport& report) {
  out << "t,mean_gap,bound_estimate\n";
  for (const auto& p : report.empirical)
    out << p.t << ',' << format_double(p.gap) << ',' << format_double(p.bound) << '\n';
}

namespace detail {

inline std::string file_safe(std::string s) {
  for (char& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')) c = '_';
  return s;
}

template <typename Writer>
std::string write_file(const std::filesystem::path& dir, const std::string& name, Writer&& writer) {
  const auto path = dir / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  writer(out);
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
  return path.string();
}

}  // namespace detail

/// Writes summary.csv, histogram.csv, values.csv and, when present,
/// curves.csv, scalars.csv and trace_<label>.csv. Returns the paths written.
inline std::vector<std::string> write_result(const std::filesystem::path& dir,
                                             const ExperimentResult& result) {
  std::vector<std::string> files;
  files.push_back(detail::write_file(dir, "summary.csv", [&](std::ostream& o) { write_summary(o, result); }));
  files.push_back(detail::write_file(dir, "histogram.csv", [&](std::ostream& o) { write_histogram(o, result); }));
  files.push_back(detail::write_file(dir, "values.csv", [&](std::ostream& o) { write_values(o, result); }));
  if (!result.curves.empty())
    files.push_back(detail::write_file(dir, "curves.csv", [&](std::ostream& o) { write_curves(o, result); }));
  if (!result.scalars.empty())
    files.push_back(detail::write_file(dir, "scalars.csv", [&](std::ostream& o) { write_scalars(o, result); }));
  for (const auto& [label, trace] : result.traces) {
    files.push_back(detail::write_file(dir, "trace_" + detail::file_safe(label) + ".csv",
                                       [&](std::ostream& o) { write_trace(o, trace); }));
  }
  return files;
}

inline std::vector<std::string> write_rate_report(const std::filesystem::path& dir,
                                                  const RateCheckReport& report) {
  std::vector<std::string> files;
  files.push_back(detail::write_file(dir, "recursion.csv",
                                     [&](std::ostream& o) { write_recursion(o, report.recursion); }));
  if (!report.empirical.empty())
    files.push_back(detail::write_file(dir, "rate_empirical.csv",
                                       [&](std::ostream& o) { write_rate_empirical(o, report); }));
  return files;
}

}  // namespace res
