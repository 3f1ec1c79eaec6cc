// End-to-end checks of the dsol executable: exit codes and the synth -> run -> eval pipeline.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "dsol/io/dataset.hpp"
#include "dsol/io/trajectory.hpp"
#include "testing.hpp"

namespace dsol {
namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult Cli(const std::string& args) {
  const std::string cmd = std::string(DSOL_CLI_PATH) + " " + args + " 2>/dev/null";
  CliResult r;
  FILE* p = popen(cmd.c_str(), "r");
  if (p == nullptr) return r;
  char buf[4096];
  size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof(buf), p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string RunArgs(const testing::TempDir& d, const std::string& out) {
  return "run --left " + d / "left" + " --right " + d / "right" + " --calib " + d / "calib.txt" +
         " --times " + d / "times.txt" + " --out " + out;
}

TEST(Cli, SynthRunEvalPipeline) {
  testing::TempDir d;
  ASSERT_EQ(Cli("synth --frames 12 --motion linear:0.03,0.01,0 --out " + d.path().string()).code, 0);
  const auto run = Cli(RunArgs(d, d / "est.txt") + " --timing " + d / "timing.csv");
  ASSERT_EQ(run.code, 0);
  EXPECT_EQ(ReadTrajectory(d / "est.txt").size(), 12);

  std::ifstream timing(d / "timing.csv");
  std::string header;
  std::getline(timing, header);
  EXPECT_EQ(header, "stage,count,mean_ms,p50_ms,p90_ms,p99_ms,max_ms");

  const auto eval = Cli("eval --json --gt " + d / "groundtruth.txt" + " --est " + d / "est.txt");
  ASSERT_EQ(eval.code, 0);
  const auto j = nlohmann::json::parse(eval.out);
  EXPECT_EQ(j.at("matches").get<int>(), 12);
  EXPECT_LT(j.at("ape_trans_percent").get<double>(), 0.5);
  EXPECT_NEAR(j.at("sim3_scale").get<double>(), 1.0, 0.01);
}

TEST(Cli, MonoWithDepthImagesRuns) {
  testing::TempDir d;
  ASSERT_EQ(Cli("synth --frames 6 --motion linear:0.02,0,0 --out " + d.path().string()).code, 0);
  ASSERT_EQ(Cli("run --left " + d / "left" + " --depth " + d / "depth" + " --calib " + d / "calib.txt" +
                " --out " + d / "est.txt")
                .code,
            0);
  const auto eval = Cli("eval --gt " + d / "groundtruth.txt" + " --est " + d / "est.txt");
  EXPECT_EQ(eval.code, 0);
  EXPECT_EQ(eval.out.rfind("APE trans", 0), 0u);
  EXPECT_NE(eval.out.find("matches    6"), std::string::npos);
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(Cli("").code, 1);
  EXPECT_EQ(Cli("frobnicate").code, 1);
  EXPECT_EQ(Cli("run --left /nonexistent").code, 1);
  EXPECT_EQ(Cli("synth --frames 0 --motion static --out /tmp/x").code, 1);
  EXPECT_EQ(Cli("run --threads 0 --left a --calib b --out c").code, 1);
  EXPECT_EQ(Cli("--help").code, 0);
}

TEST(Cli, MalformedInputsExitOne) {
  testing::TempDir d;
  ASSERT_EQ(Cli("synth --frames 3 --motion static --out " + d.path().string()).code, 0);
  {
    std::ofstream f(d / "bad_calib.txt");
    f << "fx 400\nfy nope\n";
  }
  EXPECT_EQ(Cli("run --left " + d / "left" + " --right " + d / "right" + " --calib " + d / "bad_calib.txt" +
                " --out " + d / "est.txt")
                .code,
            1);
  {
    std::ofstream f(d / "bad_traj.txt");
    f << "0 1 2 3\n";
  }
  EXPECT_EQ(Cli("eval --gt " + d / "groundtruth.txt" + " --est " + d / "bad_traj.txt").code, 1);
  {
    std::ofstream f(d / "config.txt");
    f << "window.N = -3\n";
  }
  EXPECT_EQ(Cli(RunArgs(d, d / "est.txt") + " --config " + d / "config.txt").code, 1);
}

TEST(Cli, UnreadableFrameStopsWithPartialTrajectory) {
  testing::TempDir d;
  ASSERT_EQ(Cli("synth --frames 5 --motion linear:0.02,0,0 --out " + d.path().string()).code, 0);
  {
    std::ofstream f(d / "left/000003.png", std::ios::trunc);
    f << "not a png";
  }
  EXPECT_EQ(Cli(RunArgs(d, d / "est.txt")).code, 1);
  EXPECT_EQ(ReadTrajectory(d / "est.txt").size(), 3);
}

TEST(Cli, LostTrackingExitsTwo) {
  // After the first pair every frame is textureless, so each one re-initializes.
  testing::TempDir d;
  ASSERT_EQ(Cli("synth --frames 6 --motion static --out " + d.path().string()).code, 0);
  const Image flat(640, 480, 100.0F);
  for (int k = 1; k < 6; ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06d.png", k);
    WriteGray8(d / ("left/" + std::string(name)), flat);
    WriteGray8(d / ("right/" + std::string(name)), flat);
  }
  EXPECT_EQ(Cli(RunArgs(d, d / "est.txt")).code, 2);
  EXPECT_EQ(ReadTrajectory(d / "est.txt").size(), 6);
}

}  // namespace
}  // namespace dsol
