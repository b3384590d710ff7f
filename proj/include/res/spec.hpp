#pragma once

#include <algorithm>
#include <charconv>
#include <climits>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "res/experiments.hpp"
#include "res/io.hpp"

namespace res {

struct Diagnostic {
  enum class Severity { error, warning };
  Severity severity = Severity::error;
  std::string field;  ///< empty for document-level problems
  std::optional<std::size_t> line;
  std::string message;

  std::string str() const {
    std::string s = severity == Severity::error ? "error" : "warning";
    if (line) s += ": line " + std::to_string(*line);
    if (!field.empty()) s += (line ? ", field '" : ": field '") + field + "'";
    return s + ": " + message;
  }
};

/// A validated spec plus the optional output directory named in the document.
struct SpecDocument {
  ExperimentSpec spec;
  std::optional<std::string> out;
};

struct SpecResult {
  std::optional<SpecDocument> document;  ///< set only when there are no errors
  std::vector<Diagnostic> diagnostics;

  bool ok() const { return document.has_value(); }
  std::vector<Diagnostic> errors() const {
    std::vector<Diagnostic> e;
    for (const auto& d : diagnostics)
      if (d.severity == Diagnostic::Severity::error) e.push_back(d);
    return e;
  }
  std::vector<Diagnostic> warnings() const {
    std::vector<Diagnostic> w;
    for (const auto& d : diagnostics)
      if (d.severity == Diagnostic::Severity::warning) w.push_back(d);
    return w;
  }
};

/// Line number of each top-level key, when the document came from text.
using LineMap = std::map<std::string, std::size_t>;

// ---- TOML subset ----------------------------------------------------------

/// Reads flat TOML: `key = value` lines with strings, integers, floats,
/// booleans and single-line arrays of those; `#` comments. Tables are not
/// part of the spec format and are reported as errors.
struct TomlParse {
  nlohmann::json value = nlohmann::json::object();
  LineMap lines;
  std::vector<Diagnostic> diagnostics;
};

namespace detail {

class TomlLine {
 public:
  explicit TomlLine(std::string_view text) : s_(text) {}

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  bool at_end_or_comment() {
    skip_ws();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }
  std::string_view rest() const { return s_.substr(pos_); }

  std::optional<std::string> key(std::string& error) {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) ||
                                s_[pos_] == '_' || s_[pos_] == '-'))
      ++pos_;
    if (pos_ == start) {
      error = "expected a key";
      return std::nullopt;
    }
    return std::string(s_.substr(start, pos_ - start));
  }

  bool expect(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::optional<nlohmann::json> value(std::string& error) {
    skip_ws();
    if (pos_ >= s_.size()) {
      error = "missing value";
      return std::nullopt;
    }
    const char c = s_[pos_];
    if (c == '"') return basic_string(error);
    if (c == '\'') return literal_string(error);
    if (c == '[') return array(error);
    return scalar(error);
  }

 private:
  std::optional<nlohmann::json> basic_string(std::string& error) {
    std::string out;
    ++pos_;
    while (pos_ < s_.size()) {
      char c = s_[pos_++];
      if (c == '"') return nlohmann::json(out);
      if (c == '\\') {
        if (pos_ >= s_.size()) break;
        const char e = s_[pos_++];
        switch (e) {
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          default:
            error = std::string("unsupported escape '\\") + e + "'";
            return std::nullopt;
        }
      } else {
        out += c;
      }
    }
    error = "unterminated string";
    return std::nullopt;
  }

  std::optional<nlohmann::json> literal_string(std::string& error) {
    ++pos_;
    const auto end = s_.find('\'', pos_);
    if (end == std::string_view::npos) {
      error = "unterminated string";
      return std::nullopt;
    }
    std::string out(s_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return nlohmann::json(out);
  }

  std::optional<nlohmann::json> array(std::string& error) {
    ++pos_;
    nlohmann::json arr = nlohmann::json::array();
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return arr;
    }
    while (true) {
      auto v = value(error);
      if (!v) return std::nullopt;
      arr.push_back(std::move(*v));
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ',') {
        ++pos_;
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == ']') {
          ++pos_;
          return arr;
        }
        continue;
      }
      if (pos_ < s_.size() && s_[pos_] == ']') {
        ++pos_;
        return arr;
      }
      error = "expected ',' or ']' in array (arrays must fit on one line)";
      return std::nullopt;
    }
  }

  std::optional<nlohmann::json> scalar(std::string& error) {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '#' &&
           s_[pos_] != ' ' && s_[pos_] != '\t')
      ++pos_;
    std::string tok(s_.substr(start, pos_ - start));
    if (tok == "true") return nlohmann::json(true);
    if (tok == "false") return nlohmann::json(false);
    std::string digits;
    for (char ch : tok)
      if (ch != '_') digits += ch;
    if (digits.empty()) {
      error = "missing value";
      return std::nullopt;
    }
    const char* first = digits.data();
    const char* last = first + digits.size();
    const bool is_float = digits.find_first_of(".eEn") != std::string::npos;
    if (!is_float) {
      const char* p = first + (*first == '+' ? 1 : 0);
      if (*p == '-') {
        std::int64_t v = 0;
        auto [end, ec] = std::from_chars(p, last, v);
        if (ec == std::errc() && end == last) return nlohmann::json(v);
      } else {
        std::uint64_t v = 0;
        auto [end, ec] = std::from_chars(p, last, v);
        if (ec == std::errc() && end == last) return nlohmann::json(v);
      }
    } else {
      if (digits == "inf" || digits == "+inf" || digits == "-inf" || digits == "nan" ||
          digits == "+nan" || digits == "-nan") {
        error = "non-finite value '" + tok + "'";
        return std::nullopt;
      }
      double v = 0;
      auto [end, ec] = std::from_chars(first + (*first == '+' ? 1 : 0), last, v);
      if (ec == std::errc() && end == last) return nlohmann::json(v);
    }
    error = "cannot parse value '" + tok + "'";
    return std::nullopt;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline TomlParse parse_toml(std::string_view text) {
  TomlParse out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(start, end - start);
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    ++line_no;
    start = end + 1;

    detail::TomlLine line(raw);
    if (line.at_end_or_comment()) {
      if (end == text.size()) break;
      continue;
    }
    auto fail = [&](const std::string& field, const std::string& msg) {
      out.diagnostics.push_back({Diagnostic::Severity::error, field, line_no, msg});
    };
    if (line.rest().front() == '[') {
      fail("", "tables are not supported; use top-level keys");
    } else {
      std::string error;
      auto key = line.key(error);
      if (!key) {
        fail("", error);
      } else if (!line.expect('=')) {
        fail(*key, "expected '=' after key");
      } else if (auto v = line.value(error); !v) {
        fail(*key, error);
      } else if (!line.at_end_or_comment()) {
        fail(*key, "unexpected text after value");
      } else if (out.value.contains(*key)) {
        fail(*key, "duplicate key (first set on line " + std::to_string(out.lines[*key]) + ")");
      } else {
        out.value[*key] = std::move(*v);
        out.lines[*key] = line_no;
      }
    }
    if (end == text.size()) break;
  }
  return out;
}

// ---- validation ------------------------------------------------------------

namespace detail {

class SpecReader {
 public:
  SpecReader(const nlohmann::json& doc, const LineMap& lines, std::vector<Diagnostic>& diags)
      : doc_(doc), lines_(lines), diags_(diags) {}

  void error(const std::string& field, const std::string& msg) {
    diags_.push_back({Diagnostic::Severity::error, field, line_of(field), msg});
  }
  void warning(const std::string& field, const std::string& msg) {
    diags_.push_back({Diagnostic::Severity::warning, field, line_of(field), msg});
  }

  const nlohmann::json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = doc_.find(key);
    return it == doc_.end() || it->is_null() ? nullptr : &*it;
  }

  void real(const std::string& key, double& target) {
    if (const auto* v = find(key)) {
      if (!v->is_number()) return error(key, "expected a number");
      const double x = v->get<double>();
      if (!std::isfinite(x)) return error(key, "must be finite");
      target = x;
    }
  }

  void optional_real(const std::string& key, std::optional<double>& target) {
    if (find(key)) {
      double x = 0;
      real(key, x);
      target = x;
    }
  }

  template <typename Int>
  void integer(const std::string& key, Int& target) {
    if (const auto* v = find(key)) {
      if (auto x = as_integer<Int>(*v)) {
        target = *x;
      } else {
        error(key, "expected an integer in range");
      }
    }
  }

  template <typename Int>
  void integer_list(const std::string& key, std::vector<Int>& target) {
    if (const auto* v = find(key)) {
      if (!v->is_array()) return error(key, "expected an array of integers");
      std::vector<Int> out;
      for (const auto& e : *v) {
        auto x = as_integer<Int>(e);
        if (!x) return error(key, "expected an array of integers");
        out.push_back(*x);
      }
      target = std::move(out);
    }
  }

  void string(const std::string& key, std::optional<std::string>& target) {
    if (const auto* v = find(key)) {
      if (!v->is_string()) return error(key, "expected a string");
      target = v->get<std::string>();
    }
  }

  void reject_unknown() {
    for (const auto& [key, value] : doc_.items()) {
      (void)value;
      if (!seen_.count(key)) error(key, "unknown field");
    }
  }

 private:
  template <typename Int>
  static std::optional<Int> as_integer(const nlohmann::json& v) {
    if (v.is_number_unsigned()) {
      const auto x = v.get<std::uint64_t>();
      if (x <= static_cast<std::uint64_t>(std::numeric_limits<Int>::max())) return static_cast<Int>(x);
      return std::nullopt;
    }
    if (v.is_number_integer()) {
      const auto x = v.get<std::int64_t>();
      if (x < 0 && !std::is_signed_v<Int>) return std::nullopt;
      if (x < static_cast<std::int64_t>(std::numeric_limits<Int>::min()) ||
          (x > 0 && static_cast<std::uint64_t>(x) > static_cast<std::uint64_t>(std::numeric_limits<Int>::max())))
        return std::nullopt;
      return static_cast<Int>(x);
    }
    if (v.is_number_float()) {
      // Accept integral floats such as 1e4.
      const double x = v.get<double>();
      if (!std::isfinite(x) || std::floor(x) != x) return std::nullopt;
      if (x < static_cast<double>(std::numeric_limits<Int>::min()) ||
          x >= std::ldexp(1.0, std::numeric_limits<Int>::digits))
        return std::nullopt;
      return static_cast<Int>(x);
    }
    return std::nullopt;
  }

  std::optional<std::size_t> line_of(const std::string& field) const {
    const auto it = lines_.find(field);
    return it == lines_.end() ? std::nullopt : std::optional(it->second);
  }

  const nlohmann::json& doc_;
  const LineMap& lines_;
  std::vector<Diagnostic>& diags_;
  std::set<std::string> seen_;
};

/// Smallest Hessian eigenvalue bound for the spec's problem family, when it
/// is known without drawing the instance.
inline std::optional<double> known_m_tilde(const ExperimentSpec& s) {
  switch (s.kind) {
    case StudyKind::condition:
    case StudyKind::sample_size:
    case StudyKind::rate_check:
      return (1.0 - s.theta0) * std::pow(10.0, -s.xi);
    case StudyKind::svm_convergence:
    case StudyKind::svm_accuracy:
    case StudyKind::svm_regularization:
      return s.lambda;
    case StudyKind::dimension:
      return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace detail

/// Validates a spec document. `default_kind` applies when the document has no
/// "kind" field. Every violation is reported, not just the first.
inline SpecResult validate_spec(const nlohmann::json& doc, std::optional<StudyKind> default_kind = {},
                                const LineMap& lines = {}) {
  SpecResult result;
  auto& diags = result.diagnostics;
  if (!doc.is_object()) {
    diags.push_back({Diagnostic::Severity::error, "", std::nullopt, "spec must be an object"});
    return result;
  }
  detail::SpecReader in(doc, lines, diags);

  std::optional<StudyKind> kind = default_kind;
  std::optional<std::string> kind_name;
  in.string("kind", kind_name);
  if (kind_name) {
    const auto parsed = parse_study_kind(*kind_name);
    if (!parsed)
      in.error("kind", "unknown study kind '" + *kind_name + "'");
    else if (default_kind && *parsed != *default_kind)
      in.error("kind", "'" + *kind_name + "' does not match the requested study '" +
                           to_string(*default_kind) + "'");
    else
      kind = parsed;
  }
  if (!kind) {
    if (!kind_name) in.error("kind", "missing study kind");
    in.reject_unknown();
    return result;
  }

  ExperimentSpec s = defaults_for(*kind);
  SpecDocument out;
  in.integer("n", s.n);
  in.integer("xi", s.xi);
  in.real("theta0", s.theta0);
  in.integer_list("batch_sizes", s.batch_sizes);
  in.integer_list("dimensions", s.dimensions);
  in.real("w0_box", s.w0_box);
  in.integer("n_train", s.n_train);
  in.integer("n_test", s.n_test);
  in.real("lambda", s.lambda);
  std::optional<std::string> loss;
  in.string("loss", loss);
  if (loss) {
    try {
      s.loss = parse_loss_kind(*loss);
    } catch (const std::invalid_argument&) {
      in.error("loss", "unknown loss '" + *loss + "' (hinge, squared_hinge, log)");
    }
  }
  in.integer("budget", s.budget);
  in.real("target_objective", s.target_objective);
  in.optional_real("constant_step", s.constant_step);
  in.integer("L", s.res_L);
  in.real("delta", s.delta);
  in.real("Gamma", s.Gamma);
  in.real("eps0", s.eps0);
  in.real("T0", s.T0);
  in.optional_real("B0_scale", s.B0_scale);
  in.integer("sgd_L", s.sgd_L);
  in.integer("J", s.J);
  in.real("rho", s.criterion.rho);
  in.integer("cap", s.criterion.cap);
  in.integer("seed", s.seed);
  in.integer("parallel", s.parallel);
  in.real("c", s.c);
  in.real("b", s.b);
  in.real("t0", s.t0);
  in.real("u0", s.u0);
  in.integer("horizon", s.horizon);
  in.real("horizon_factor", s.horizon_factor);
  in.string("out", out.out);
  in.reject_unknown();

  const auto require = [&](bool ok, const char* field, const std::string& msg) {
    if (!ok) in.error(field, msg);
  };
  require(s.n >= 1, "n", "must be >= 1");
  require(s.xi >= 0, "xi", "must be >= 0");
  require(s.theta0 >= 0.0 && s.theta0 < 1.0, "theta0", "must lie in [0, 1)");
  require(!s.batch_sizes.empty(), "batch_sizes", "must not be empty");
  for (auto L : s.batch_sizes) require(L >= 1, "batch_sizes", "every batch size must be >= 1");
  require(!s.dimensions.empty(), "dimensions", "must not be empty");
  for (int n : s.dimensions) require(n >= 1, "dimensions", "every dimension must be >= 1");
  require(s.w0_box >= 0.0, "w0_box", "must be >= 0");
  require(s.n_train >= 2 && s.n_train % 2 == 0, "n_train", "must be even and >= 2 (balanced classes)");
  require(s.n_test >= 2 && s.n_test % 2 == 0, "n_test", "must be even and >= 2 (balanced classes)");
  require(s.lambda > 0.0, "lambda", "must be positive");
  require(s.budget >= 1, "budget", "must be >= 1");
  require(s.target_objective > 0.0, "target_objective", "must be positive");
  if (s.constant_step) require(*s.constant_step > 0.0, "constant_step", "must be positive");
  require(s.res_L >= 1, "L", "must be >= 1");
  require(s.delta >= 0.0, "delta", "must be >= 0");
  require(s.Gamma >= 0.0, "Gamma", "must be >= 0");
  require(s.eps0 > 0.0, "eps0", "must be positive");
  require(s.T0 > 0.0, "T0", "must be positive");
  if (s.B0_scale) require(*s.B0_scale > s.delta, "B0_scale", "must exceed delta");
  require(s.sgd_L >= 1, "sgd_L", "must be >= 1");
  require(s.J >= 1, "J", "must be >= 1");
  require(s.criterion.rho > 0.0, "rho", "must be positive");
  require(s.criterion.cap >= 1, "cap", "must be >= 1");
  require(s.c > 1.0, "c", "must exceed 1");
  require(s.b >= 0.0, "b", "must be >= 0");
  require(s.t0 > 0.0, "t0", "must be positive");
  require(s.u0 >= 0.0, "u0", "must be >= 0");
  require(s.horizon >= 1, "horizon", "must be >= 1");
  require(s.horizon_factor >= 1.0, "horizon_factor", "must be >= 1");
  if (s.kind == StudyKind::rate_check) {
    const double product = 2.0 * s.eps0 * s.T0 * s.Gamma;
    require(product > 1.0, "Gamma",
            "rate check needs 2*eps0*T0*Gamma > 1, got " + format_double(product));
    require(!s.constant_step, "constant_step", "rate check needs the decaying step schedule");
    if (s.c > s.t0)
      in.warning("c", "c > t0 makes 1 - c/(t+t0) negative for small t; the recursion bound may fail");
  }

  if (const auto m = detail::known_m_tilde(s); m && s.delta >= *m) {
    in.warning("delta", "delta = " + format_double(s.delta) +
                            " should be smaller than the smallest Hessian eigenvalue (" +
                            format_double(*m) + ")");
  }

  if (result.errors().empty()) {
    out.spec = std::move(s);
    result.document = std::move(out);
  }
  return result;
}

/// Parses JSON or TOML text. Text whose first non-blank character is '{' is
/// read as JSON.
inline SpecResult parse_spec(std::string_view text, std::optional<StudyKind> default_kind = {}) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string_view::npos && text[first] == '{') {
    try {
      return validate_spec(nlohmann::json::parse(text), default_kind);
    } catch (const nlohmann::json::parse_error& e) {
      SpecResult r;
      // nlohmann reports a byte offset; turn it into a line number.
      const auto upto = text.substr(0, std::min<std::size_t>(e.byte, text.size()));
      const auto line = static_cast<std::size_t>(std::count(upto.begin(), upto.end(), '\n')) + 1;
      r.diagnostics.push_back({Diagnostic::Severity::error, "", line, "invalid JSON"});
      return r;
    }
  }
  auto toml = parse_toml(text);
  // Validate whatever did parse so that one run reports every problem.
  SpecResult r = validate_spec(toml.value, default_kind, toml.lines);
  if (!toml.diagnostics.empty()) {
    r.document.reset();
    r.diagnostics.insert(r.diagnostics.begin(), toml.diagnostics.begin(), toml.diagnostics.end());
  }
  std::stable_sort(r.diagnostics.begin(), r.diagnostics.end(),
                   [](const Diagnostic& a, const Diagnostic& b) {
                     return a.line.value_or(SIZE_MAX) < b.line.value_or(SIZE_MAX);
                   });
  return r;
}

// ---- serialization ---------------------------------------------------------

inline nlohmann::json to_json(const ExperimentSpec& s, const std::optional<std::string>& out = {}) {
  nlohmann::json j;
  j["kind"] = to_string(s.kind);
  j["n"] = s.n;
  j["xi"] = s.xi;
  j["theta0"] = s.theta0;
  j["batch_sizes"] = s.batch_sizes;
  j["dimensions"] = s.dimensions;
  j["w0_box"] = s.w0_box;
  j["n_train"] = s.n_train;
  j["n_test"] = s.n_test;
  j["lambda"] = s.lambda;
  j["loss"] = to_string(s.loss);
  j["budget"] = s.budget;
  j["target_objective"] = s.target_objective;
  if (s.constant_step) j["constant_step"] = *s.constant_step;
  j["L"] = s.res_L;
  j["delta"] = s.delta;
  j["Gamma"] = s.Gamma;
  j["eps0"] = s.eps0;
  j["T0"] = s.T0;
  if (s.B0_scale) j["B0_scale"] = *s.B0_scale;
  j["sgd_L"] = s.sgd_L;
  j["J"] = s.J;
  j["rho"] = s.criterion.rho;
  j["cap"] = s.criterion.cap;
  j["seed"] = s.seed;
  j["parallel"] = s.parallel;
  j["c"] = s.c;
  j["b"] = s.b;
  j["t0"] = s.t0;
  j["u0"] = s.u0;
  j["horizon"] = s.horizon;
  j["horizon_factor"] = s.horizon_factor;
  if (out) j["out"] = *out;
  return j;
}

/// Flat TOML in the subset read by parse_toml. Floats use the shortest
/// representation that reads back exactly.
inline std::string to_toml(const ExperimentSpec& s, const std::optional<std::string>& out = {}) {
  const nlohmann::json j = to_json(s, out);
  std::ostringstream os;
  const auto scalar = [](const nlohmann::json& v) -> std::string {
    if (v.is_string()) return v.dump();
    if (v.is_number_float()) {
      char buf[32];
      const auto res = std::to_chars(buf, buf + sizeof buf, v.get<double>());
      std::string f(buf, res.ptr);
      if (f.find_first_of(".e") == std::string::npos) f += ".0";
      return f;
    }
    return v.dump();
  };
  for (const auto& [key, v] : j.items()) {
    os << key << " = ";
    if (v.is_array()) {
      os << '[';
      for (std::size_t k = 0; k < v.size(); ++k) os << (k ? ", " : "") << scalar(v[k]);
      os << ']';
    } else {
      os << scalar(v);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace res
