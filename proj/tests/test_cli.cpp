#include "mdsf/cli.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "mdsf_bench");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = mdsf::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  const Outcome bad = run({"oracle", "--which", "scan", "--bogus"});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("Usage"), std::string::npos);
  EXPECT_EQ(run({"oracle", "--which", "fft"}).code, 2);
  EXPECT_EQ(run({"oracle", "--which", "scan", "--trials", "-3"}).code, 2);
  EXPECT_EQ(run({"loss-surface", "--loss", "giou"}).code, 2);
  EXPECT_EQ(run({"smoke", "--steps", "2", "--disable", "decoder"}).code, 2);
  EXPECT_EQ(run({"gradcheck", "--module", "everything"}).code, 2);
  EXPECT_EQ(run({"scene", "--contrast", "0"}).code, 2);
}

TEST(Cli, HelpExitsZero) {
  const Outcome r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"scan-bench", "gradcheck", "oracle", "loss-surface", "smoke", "scene"})
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
}

TEST(Cli, OracleScan) {
  const Outcome r = run({"oracle", "--which", "scan", "--trials", "20"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("trials=20"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("max_abs_err="), std::string::npos) << r.out;
  EXPECT_EQ(run({"oracle", "--which", "msda", "--trials", "4"}).code, 0);
}

TEST(Cli, GradcheckLosses) {
  const Outcome r = run({"gradcheck", "--module", "losses", "--seed", "7"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("module losses max_rel_err="), std::string::npos) << r.out;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos) << r.out;
}

TEST(Cli, LossSurfaceCsv) {
  const Outcome r = run({"loss-surface", "--loss", "sawiou", "--sweep", "cx", "--steps", "10"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(first_line(r.out), "offset,loss,dloss_dcx,d_one_minus_iou_dcx");
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 12);
  EXPECT_EQ(run({"loss-surface", "--loss", "nwd"}).code, 0);
  EXPECT_EQ(run({"loss-surface", "--loss", "ciou"}).code, 0);
  EXPECT_EQ(run({"loss-surface", "--loss", "nwd", "--sweep", "cy"}).code, 2);
}

TEST(Cli, SmokeCsvIsDeterministic) {
  const auto dir = std::filesystem::temp_directory_path() / "mdsf_cli_smoke";
  std::filesystem::create_directories(dir);
  const Outcome a = run({"smoke", "--steps", "3", "--seed", "11", "-o", (dir / "a.csv").string()});
  const Outcome b = run({"smoke", "--steps", "3", "--seed", "11", "--output", (dir / "b.csv").string()});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  const std::string csv = slurp(dir / "a.csv");
  EXPECT_EQ(first_line(csv), "step,focal,sa_wiou,l1,csc,total");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(csv, slurp(dir / "b.csv"));
  const Outcome ablated = run({"smoke", "--steps", "2", "--disable", "hybrid", "--disable", "omega"});
  EXPECT_EQ(ablated.code, 0) << ablated.err;
  EXPECT_EQ(first_line(ablated.out), "step,focal,sa_wiou,l1,csc,total");
  std::filesystem::remove_all(dir);
}

TEST(Cli, SmokeDivergenceExitsOne) {
  const Outcome r = run({"smoke", "--steps", "20", "--lr", "1e6"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("non-finite"), std::string::npos) << r.err;
}

TEST(Cli, ScanBenchCsv) {
  const Outcome r = run({"scan-bench", "--lengths", "64,128", "--reps", "1"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(first_line(r.out), "length,scan_ns,attn_ns");
  EXPECT_NE(r.out.find("\n64,"), std::string::npos);
  EXPECT_NE(r.out.find("\n128,"), std::string::npos);
  EXPECT_EQ(run({"scan-bench", "--lengths", "64,abc"}).code, 2);
}

TEST(Cli, SceneExport) {
  const auto dir = std::filesystem::temp_directory_path() / "mdsf_cli_scene";
  std::filesystem::create_directories(dir);
  const Outcome r = run({"scene", "--size", "64", "--targets", "3", "--seed", "2", "-o", (dir / "s").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "s.tnsr"));
  const std::string notes = slurp(dir / "s.txt");
  EXPECT_EQ(std::count(notes.begin(), notes.end(), '\n'), 3);
  std::filesystem::remove_all(dir);
}
