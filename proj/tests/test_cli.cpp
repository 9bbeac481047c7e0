#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "hpvcal/hpvcal.hpp"

using namespace hpvcal;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = HPVCAL_SOURCE_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hpvcal_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(const std::string& args) {
  const std::string cmd = std::string(HPVCAL_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) { return io::read_file(p.string()); }

std::size_t data_lines(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') ++n;
  return n - 1;  // header
}

// A small config that writes to `dir` and reads observations from `obs`.
fs::path write_config(const fs::path& dir, const std::string& obs, const std::string& extra = "") {
  const fs::path path = dir / "run.json";
  std::ofstream(path) << R"({"variant": "hpv6", "seed": 5, "output_dir": ")" << dir.string()
                      << R"(", "data": {"observations": [")" << obs << R"("], "behavior": ")"
                      << (kSource / "data" / "behavior.json").string() << R"("}, )"
                      << R"("priors": {"DWTm": {"family": "gamma", "a": 2, "b": 0.15},
                                       "DWTf": {"family": "gamma", "a": 2, "b": 0.15}})"
                      << extra << "}";
  return path;
}

}  // namespace

TEST(Cli, SynthIsReproducible) {
  const auto a = scratch("synth_a"), b = scratch("synth_b");
  ASSERT_EQ(run("synth --config " + write_config(a, "x").string()), 0);
  ASSERT_EQ(run("synth --config " + write_config(b, "x").string()), 0);
  EXPECT_EQ(slurp(a / "observations.csv"), slurp(b / "observations.csv"));
  EXPECT_EQ(slurp(a / "truth.json"), slurp(b / "truth.json"));
  EXPECT_EQ(data_lines(a / "observations.csv"), 12u * 36u);
  ASSERT_EQ(run("synth --seed 6 --config " + write_config(b, "x").string()), 0);
  EXPECT_NE(slurp(a / "observations.csv"), slurp(b / "observations.csv"));
}

TEST(Cli, CalibrateThenPredict) {
  const auto dir = scratch("calibrate");
  const auto cfg = write_config(dir, (dir / "observations.csv").string(),
                                R"(, "vaccination": {"horizon": 0})");
  ASSERT_EQ(run("synth --config " + cfg.string()), 0);
  ASSERT_EQ(run("calibrate --iterations 100 --config " + cfg.string()), 0);
  for (const char* f : {"samples.csv", "diagnostics.json", "calibration_fit.csv",
                        "state_bands.csv", "manifest.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(data_lines(dir / "calibration_fit.csv"), 36u);
  EXPECT_EQ(data_lines(dir / "samples.csv"), 8u);  // (100 - 20) / 10

  const auto manifest = io::Json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest["command"], "calibrate");
  EXPECT_EQ(manifest["iterations"], 100);
  EXPECT_EQ(manifest["seed"], 5);

  ASSERT_EQ(run("predict --samples " + (dir / "samples.csv").string() + " --config " + cfg.string()), 0);
  // horizon 0: one time point for 2 genders x 10 age cells x 2 observables
  EXPECT_EQ(data_lines(dir / "predictive.csv"), 40u);
}

TEST(Cli, Simulate) {
  const auto dir = scratch("simulate");
  ASSERT_EQ(run("simulate --config " + write_config(dir, "x").string()), 0);
  EXPECT_EQ(data_lines(dir / "trajectory.csv"), 121u * 72u);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("codes");
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("calibrate --config /nonexistent.json"), 2);
  EXPECT_EQ(run("calibrate --variant hpv16 --config " + write_config(dir, "x").string()), 2);

  std::ofstream(dir / "bad.csv") << "time,gender,age_group,kind,value\n120,male,12,incidence,1\n";
  EXPECT_EQ(run("calibrate --iterations 50 --config " +
                write_config(dir, (dir / "bad.csv").string()).string()),
            3);
  std::ofstream(dir / "samples.csv") << "a,b\n1,2\n";
  EXPECT_EQ(run("predict --samples " + (dir / "samples.csv").string() + " --config " +
                write_config(dir, "x").string()),
            3);
}
