#include <gtest/gtest.h>

#include "res/spec.hpp"

using namespace res;

namespace {

bool has_error(const SpecResult& r, const std::string& field) {
  for (const auto& d : r.errors())
    if (d.field == field) return true;
  return false;
}

const StudyKind kAllKinds[] = {StudyKind::condition,       StudyKind::sample_size,
                               StudyKind::dimension,       StudyKind::svm_convergence,
                               StudyKind::svm_accuracy,    StudyKind::svm_regularization,
                               StudyKind::rate_check};

}  // namespace

TEST(Spec, EmptyDocumentGivesDefaults) {
  for (auto kind : kAllKinds) {
    const auto r = validate_spec(nlohmann::json::object(), kind);
    ASSERT_TRUE(r.ok()) << to_string(kind);
    EXPECT_EQ(r.document->spec, defaults_for(kind));
  }
}

TEST(Spec, StudyDefaults) {
  const auto c = defaults_for(StudyKind::condition);
  EXPECT_EQ(c.delta, 1e-3);
  EXPECT_EQ(c.Gamma, 1e-4);
  EXPECT_EQ(c.res_L, 5u);
  EXPECT_EQ(c.eps0, 1e-1);
  EXPECT_EQ(c.T0, 1e3);
  EXPECT_EQ(c.J, 100u);
  EXPECT_EQ(defaults_for(StudyKind::svm_accuracy).eps0, 3e-2);
  EXPECT_EQ(defaults_for(StudyKind::sample_size).criterion.cap, 10000u);
  EXPECT_EQ(defaults_for(StudyKind::dimension).criterion.cap, 500000u);
  EXPECT_EQ(defaults_for(StudyKind::dimension).criterion.rho, 1.0);
}

TEST(Spec, ZeroBatchRejected) {
  const auto r = parse_spec("L = 0\n", StudyKind::condition);
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(has_error(r, "L"));
}

TEST(Spec, EveryViolationIsListed) {
  const auto r = parse_spec("L = 0\nJ = 0\ntheta0 = 1.5\nbogus = 1\nrho = -1\n", StudyKind::condition);
  EXPECT_FALSE(r.ok());
  for (const char* f : {"L", "J", "theta0", "bogus", "rho"}) EXPECT_TRUE(has_error(r, f)) << f;
  // Line numbers follow the document.
  EXPECT_EQ(r.errors().front().line, std::optional<std::size_t>(1));
}

TEST(Spec, UnknownFieldRejected) {
  const auto r = validate_spec(nlohmann::json{{"colour", "red"}}, StudyKind::condition);
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(has_error(r, "colour"));
}

TEST(Spec, KindHandling) {
  EXPECT_FALSE(validate_spec(nlohmann::json::object()).ok());
  const auto named = validate_spec(nlohmann::json{{"kind", "dimension"}});
  ASSERT_TRUE(named.ok());
  EXPECT_EQ(named.document->spec.kind, StudyKind::dimension);
  EXPECT_FALSE(validate_spec(nlohmann::json{{"kind", "dimension"}}, StudyKind::condition).ok());
  EXPECT_FALSE(validate_spec(nlohmann::json{{"kind", "nope"}}).ok());
}

TEST(Spec, TypeErrors) {
  const auto r = validate_spec(nlohmann::json{{"n", 2.5}, {"delta", "small"}, {"batch_sizes", {1, -2}}},
                               StudyKind::sample_size);
  EXPECT_TRUE(has_error(r, "n"));
  EXPECT_TRUE(has_error(r, "delta"));
  EXPECT_TRUE(has_error(r, "batch_sizes"));
}

TEST(Spec, IntegralFloatsAccepted) {
  const auto r = parse_spec("cap = 1e4\n", StudyKind::condition);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.document->spec.criterion.cap, 10000u);
}

TEST(Spec, DeltaAboveSmallestEigenvalueWarns) {
  // xi = 2, theta0 = 0.5: m~ = 0.005.
  const auto r = validate_spec(nlohmann::json{{"delta", 0.01}}, StudyKind::condition);
  ASSERT_TRUE(r.ok());
  ASSERT_EQ(r.warnings().size(), 1u);
  EXPECT_NE(r.warnings()[0].message.find("smaller than the smallest Hessian eigenvalue"),
            std::string::npos);
  EXPECT_TRUE(validate_spec(nlohmann::json{{"delta", 1e-3}}, StudyKind::condition).warnings().empty());
}

TEST(Spec, RateCheckNeedsCompliantConfig) {
  const auto r = validate_spec(nlohmann::json{{"Gamma", 1e-4}}, StudyKind::rate_check);
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(has_error(r, "Gamma"));
}

TEST(Spec, JsonRoundTrip) {
  for (auto kind : kAllKinds) {
    auto s = defaults_for(kind);
    s.seed = 18446744073709551615ull;
    s.theta0 = 0.1;
    s.lambda = 1.0 / 3.0;
    const auto r = validate_spec(nlohmann::json::parse(to_json(s).dump()));
    ASSERT_TRUE(r.ok()) << to_string(kind);
    EXPECT_EQ(r.document->spec, s);
  }
}

TEST(Spec, TomlRoundTrip) {
  for (auto kind : kAllKinds) {
    auto s = defaults_for(kind);
    s.eps0 = 0.1 + 0.2;
    s.B0_scale = 2.5;
    s.batch_sizes = {3, 7};
    const auto r = parse_spec(to_toml(s, "results/x"));
    ASSERT_TRUE(r.ok()) << to_string(kind) << '\n' << to_toml(s);
    EXPECT_EQ(r.document->spec, s);
    EXPECT_EQ(r.document->out, std::optional<std::string>("results/x"));
  }
}

TEST(Toml, Syntax) {
  const auto t = parse_toml(
      "# comment\n"
      "a = 1          # trailing\n"
      "b = -2.5e-3\n"
      "c = \"x\\\"y\"\n"
      "d = 'lit'\n"
      "e = [1, 2, 3,]\n"
      "f = true\n"
      "g = 1_000\n");
  ASSERT_TRUE(t.diagnostics.empty()) << t.diagnostics.front().str();
  EXPECT_EQ(t.value["a"], 1);
  EXPECT_EQ(t.value["b"], -2.5e-3);
  EXPECT_EQ(t.value["c"], "x\"y");
  EXPECT_EQ(t.value["d"], "lit");
  EXPECT_EQ(t.value["e"].size(), 3u);
  EXPECT_EQ(t.value["f"], true);
  EXPECT_EQ(t.value["g"], 1000);
  EXPECT_EQ(t.lines.at("b"), 3u);
}

TEST(Toml, ErrorsCarryLines) {
  const auto t = parse_toml("a = 1\n[table]\nb = \nc = 1\nc = 2\nd = [1, 2\ne = nan\n");
  std::vector<std::size_t> lines;
  for (const auto& d : t.diagnostics) lines.push_back(*d.line);
  EXPECT_EQ(lines, (std::vector<std::size_t>{2, 3, 5, 6, 7}));
}

TEST(Spec, InvalidJsonReportsLine) {
  const auto r = parse_spec("{\n\"n\": 4,\n\"xi\": }\n", StudyKind::condition);
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.diagnostics.front().line, std::optional<std::size_t>(3));
}
