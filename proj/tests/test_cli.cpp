#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
};

Outcome run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + RES_CLI_PATH + " " + args + " 2>&1";
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return o;
  char buf[4096];
  std::size_t got;
  while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) o.out.append(buf, got);
  const int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("res_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name) << text;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenDataIsDeterministic) {
  ASSERT_EQ(run("gen-data --n 3 --N 20 --seed 4 --out " + path("a.csv")).code, 0);
  ASSERT_EQ(run("gen-data --n 3 --N 20 --seed 4 --out " + path("b.csv")).code, 0);
  const auto a = slurp(path("a.csv"));
  EXPECT_EQ(a, slurp(path("b.csv")));
  EXPECT_EQ(a.substr(0, a.find('\n')), "x_1,x_2,x_3,y");
  EXPECT_EQ(run("gen-data --n 3 --N 20 --seed 5").out.find(a), std::string::npos);
}

TEST_F(Cli, SeedFallsBackToEnvironment) {
  const auto flag = run("gen-data --n 2 --N 10 --seed 7");
  const auto env = run("gen-data --n 2 --N 10", "RES_SEED=7");
  ASSERT_EQ(flag.code, 0);
  EXPECT_EQ(flag.out, env.out);
  EXPECT_NE(run("gen-data --n 2 --N 10", "RES_SEED=8").out, flag.out);
  EXPECT_EQ(run("gen-data --n 2 --N 10", "RES_SEED=abc").code, 2);
}

TEST_F(Cli, RateCheckReportsNoViolations) {
  const auto o = run("rate-check --reps 2 --horizon 2000 --out " + path("rate"));
  ASSERT_EQ(o.code, 0) << o.out;
  EXPECT_NE(o.out.find("violations: 0"), std::string::npos) << o.out;
  EXPECT_TRUE(fs::exists(path("rate/recursion.csv")));
  EXPECT_TRUE(fs::exists(path("rate/rate_empirical.csv")));
}

TEST_F(Cli, MalformedSpecExitsTwoWithLine) {
  write("bad.toml", "n = 10\nL = 0\nxi = \n");
  const auto o = run("quad-condition --spec " + path("bad.toml"));
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.out.find("line 3"), std::string::npos) << o.out;
  EXPECT_NE(o.out.find("L"), std::string::npos) << o.out;
}

TEST_F(Cli, ZeroBatchFlagExitsTwo) {
  const auto o = run("quad-condition --L 0 --reps 1");
  EXPECT_EQ(o.code, 2) << o.out;
}

TEST_F(Cli, UnwritableOutputExitsThree) {
  write("file", "x");
  const auto o = run("quad-condition --reps 1 --n 5 --cap 100 --out " + path("file/sub"));
  EXPECT_EQ(o.code, 3) << o.out;
}

TEST_F(Cli, AllRunsFailingIsNonzero) {
  const auto o = run("quad-condition --reps 2 --n 5 --cap 1");
  EXPECT_NE(o.code, 0) << o.out;
}

TEST_F(Cli, IdenticalRunsGiveIdenticalFiles) {
  write("s.toml", "kind = \"condition\"\nn = 8\nJ = 4\ncap = 20000\nseed = 11\n");
  ASSERT_EQ(run("quad-condition --spec " + path("s.toml") + " --out " + path("a")).code, 0);
  ASSERT_EQ(run("quad-condition --spec " + path("s.toml") + " --parallel 2 --out " + path("b")).code, 0);
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(path("a"))) {
    EXPECT_EQ(slurp(e.path()), slurp(path("b") / e.path().filename())) << e.path();
    ++compared;
  }
  EXPECT_GE(compared, 5u);
}

TEST_F(Cli, JsonSpecAccepted) {
  write("s.json", R"({"kind": "sample_size", "n": 5, "batch_sizes": [1, 5], "J": 2, "cap": 5000})");
  const auto o = run("sample-size --spec " + path("s.json"));
  EXPECT_EQ(o.code, 0) << o.out;
  EXPECT_NE(o.out.find("L=5"), std::string::npos) << o.out;
}

TEST_F(Cli, TrainOnGeneratedData) {
  ASSERT_EQ(run("gen-data --n 4 --N 400 --seed 2 --out " + path("train.csv")).code, 0);
  ASSERT_EQ(run("gen-data --n 4 --N 400 --seed 3 --out " + path("test.csv")).code, 0);
  const auto o = run("train --data " + path("train.csv") + " --test-data " + path("test.csv") +
                     " --iters 300 --out " + path("model"));
  ASSERT_EQ(o.code, 0) << o.out;
  EXPECT_NE(o.out.find("test accuracy"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("model/trace.csv")));
  EXPECT_TRUE(fs::exists(path("model/weights.csv")));
}

TEST_F(Cli, TrainRejectsBadData) {
  write("bad.csv", "x_1,y\n0.1,1\nzz,-1\n");
  const auto o = run("train --data " + path("bad.csv"));
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.out.find("line 3"), std::string::npos) << o.out;
}
