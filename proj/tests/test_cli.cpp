#include <qboost/cli.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace qboost;
namespace fs = std::filesystem;

namespace {

const std::string kData = QBOOST_TEST_DATA;

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "qboost");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_command(static_cast<int>(argv.size()), argv.data(),
                                    out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qboost_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path tiny_config(const fs::path& dir) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << R"({"env": {"advertisers": 3, "ticks_per_day": 4,
    "impressions_min": 3, "impressions_max": 4, "seed": 1},
    "train": {"episodes": 2, "seed": 1}})";
  return p;
}

int line_count(const fs::path& p) {
  std::ifstream in(p);
  int n = 0;
  for (std::string l; std::getline(in, l);) ++n;
  return n;
}

}  // namespace

TEST(Cli, VerifyProjectionPasses) {
  const auto r = run({"verify", "--suite", "projection", "--trials", "200"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("passed=200"), std::string::npos) << r.out;
}

TEST(Cli, UnknownSuiteOrFlagIsValidationError) {
  EXPECT_EQ(run({"verify", "--suite", "bogus"}).code, 1);
  const auto r = run({"verify", "--suite", "projection", "--frobnicate"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Usage"), std::string::npos) << r.err;
}

TEST(Cli, MissingConfigFlagPrintsUsage) {
  const auto r = run({"train", "--out", scratch("noconf").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--config"), std::string::npos);
}

TEST(Cli, MissingFilesAreIoErrors) {
  const auto dir = scratch("missing");
  EXPECT_EQ(run({"train", "--config", (dir / "nope.json").string(), "--out",
                 dir.string()})
                .code,
            2);
  EXPECT_EQ(run({"eval", "--model", (dir / "nope.json").string(), "--policy",
                 "none", "--out", dir.string()})
                .code,
            2);
}

TEST(Cli, MalformedInputsAreValidationErrors) {
  const auto dir = scratch("malformed");
  std::ofstream(dir / "bad.json") << "{not json";
  EXPECT_EQ(run({"train", "--config", (dir / "bad.json").string(), "--out",
                 dir.string()})
                .code,
            1);
  std::ofstream(dir / "eta.json") << R"({"train": {"eta": 1.5}})";
  EXPECT_EQ(run({"train", "--config", (dir / "eta.json").string(), "--out",
                 dir.string()})
                .code,
            1);
  EXPECT_EQ(run({"eval", "--config", tiny_config(dir).string(), "--policy",
                 "greedy", "--out", dir.string()})
                .code,
            1);
  EXPECT_EQ(run({"eval", "--config", tiny_config(dir).string(), "--policy",
                 "qboost", "--out", dir.string()})
                .code,
            1);
}

TEST(Cli, TrainThenEvalThenReport) {
  const auto dir = scratch("flow");
  const auto cfg = tiny_config(dir);
  auto r = run({"train", "--config", cfg.string(), "--out",
                (dir / "train").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_TRUE(fs::exists(dir / "train" / "model.json"));
  EXPECT_EQ(line_count(dir / "train" / "per_tick.csv"), 1 + 2 * 4);

  for (const char* p : {"qboost", "none"}) {
    r = run({"eval", "--model", (dir / "train" / "model.json").string(),
             "--policy", p, "--episodes", "2", "--out",
             (dir / "runs" / p).string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(line_count(dir / "runs" / p / "summary.csv"), 3);
  }
  r = run({"report", "--in", (dir / "runs").string(), "--svg", "--out",
           (dir / "charts").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "charts" / "cum_ratio.svg"));
  EXPECT_TRUE(fs::exists(dir / "charts" / "loss.svg"));
  EXPECT_NE(slurp(dir / "charts" / "cum_ratio.svg").find(">qboost<"),
            std::string::npos);
}

TEST(Cli, EvalOnOneTickFixtureWritesOneRow) {
  const auto dir = scratch("fixture");
  const auto r = run({"eval", "--policy", "uniform_vq", "--accounts",
                      kData + "/accounts_small.csv", "--ticks",
                      kData + "/ticks_one.csv", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(line_count(dir / "per_tick.csv"), 2);
}

TEST(Cli, BadFixtureRowIsValidationError) {
  const auto dir = scratch("badfixture");
  const auto r = run({"eval", "--policy", "none", "--accounts",
                      kData + "/accounts_small.csv", "--ticks",
                      kData + "/ticks_bad_advertiser.csv", "--out",
                      dir.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find(":13:"), std::string::npos) << r.err;
}

TEST(Cli, SeedPrecedenceFlagOverEnvOverConfig) {
  const auto dir = scratch("seed");
  const auto cfg = tiny_config(dir);
  auto seed_of = [&](const std::string& sub) {
    const auto j = nlohmann::json::parse(slurp(dir / sub / "model.json"));
    return j.at("config").at("train").at("seed").get<std::uint64_t>();
  };
  ::unsetenv("QBOOST_SEED");
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--episodes", "0", "--out",
                 (dir / "a").string()})
                .code,
            0);
  EXPECT_EQ(seed_of("a"), 1u);
  ::setenv("QBOOST_SEED", "44", 1);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--episodes", "0", "--out",
                 (dir / "b").string()})
                .code,
            0);
  EXPECT_EQ(seed_of("b"), 44u);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--episodes", "0",
                 "--seed", "9", "--out", (dir / "c").string()})
                .code,
            0);
  EXPECT_EQ(seed_of("c"), 9u);
  ::setenv("QBOOST_SEED", "x1", 1);
  EXPECT_EQ(run({"train", "--config", cfg.string(), "--episodes", "0", "--out",
                 (dir / "d").string()})
                .code,
            1);
  ::unsetenv("QBOOST_SEED");
}

TEST(Cli, RerunsAreByteIdentical) {
  const auto dir = scratch("rerun");
  const auto cfg = tiny_config(dir);
  for (const char* sub : {"a", "b"}) {
    ASSERT_EQ(run({"train", "--config", cfg.string(), "--seed", "3", "--out",
                   (dir / sub).string()})
                  .code,
              0);
  }
  EXPECT_EQ(slurp(dir / "a" / "per_tick.csv"), slurp(dir / "b" / "per_tick.csv"));
  EXPECT_EQ(slurp(dir / "a" / "model.json"), slurp(dir / "b" / "model.json"));
}

TEST(Cli, BinaryHelpExitsZero) {
  const std::string cmd = std::string("\"") + QBOOST_CLI_PATH + "\" --help > /dev/null";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
}
