#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "tapcast/cli/app.hpp"
#include "test_util.hpp"

using namespace tapcast;
namespace fs = std::filesystem;
namespace tt = tapcast::testing;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "tapcast");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// A synthetic dataset plus a config that trains a tiny model in well under a second.
fs::path make_workspace(const std::string& name, std::size_t layers = 2) {
  const auto dir = tt::temp_dir(name);
  data::write_csv(tt::synth(data::SynthKind::sine_mix, 600, 2, 3), (dir / "data.csv").string());
  std::ofstream cfg(dir / "run.ini");
  cfg << "[run]\nname = " << name << "\noutput_root = " << (dir / "out").string() << "\n"
      << "[data]\nname = sine\npath = " << (dir / "data.csv").string() << "\n"
      << "[model]\nseq_len = 48\nn_layers = " << layers
      << "\nd_model = 16\nn_heads = 2\nd_ff = 32\nmax_patches = 16\n"
      << "[train]\nhorizons = 8\nepochs = 1\nmax_steps = 4\nbatch_size = 8\nlr = 1e-3\n";
  return dir;
}

}  // namespace

TEST(Cli, TrainWritesArtifactsAndAppliesOverrides) {
  const auto dir = make_workspace("cli_train");
  const auto r = run_cli({"train", "--config", (dir / "run.ini").string(), "--set", "train.seed=7"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto run = dir / "out" / "cli_train";
  for (const char* f : {"metrics.csv", "report.txt", "weights.bin"}) EXPECT_TRUE(fs::exists(run / f)) << f;
  EXPECT_NE(r.out.find("long_term T=8 mse="), std::string::npos) << r.out;
  const auto report = tt::read_file(run / "report.txt");
  EXPECT_NE(report.find("seed = 7"), std::string::npos);
  EXPECT_NE(report.find("n_layers = 2"), std::string::npos);
}

TEST(Cli, OutputRootFlagWins) {
  const auto dir = make_workspace("cli_outflag");
  const auto r = run_cli({"train", "-c", (dir / "run.ini").string(), "--out", (dir / "elsewhere").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "elsewhere" / "cli_outflag" / "metrics.csv"));
  EXPECT_FALSE(fs::exists(dir / "out" / "cli_outflag"));
}

TEST(Cli, RepeatedRunsWriteIdenticalMetrics) {
  const auto dir = make_workspace("cli_repeat");
  const auto metrics = dir / "out" / "cli_repeat" / "metrics.csv";
  ASSERT_EQ(run_cli({"train", "-c", (dir / "run.ini").string()}).code, 0);
  const auto first = tt::read_file(metrics);
  ASSERT_EQ(run_cli({"train", "-c", (dir / "run.ini").string()}).code, 0);
  EXPECT_EQ(first, tt::read_file(metrics));
}

TEST(Cli, EvalReloadsSavedWeights) {
  const auto dir = make_workspace("cli_eval");
  ASSERT_EQ(run_cli({"train", "-c", (dir / "run.ini").string()}).code, 0);
  const auto trained = tt::read_file(dir / "out" / "cli_eval" / "metrics.csv");
  const auto weights = (dir / "out" / "cli_eval" / "weights.bin").string();
  const auto r = run_cli({"eval", "-c", (dir / "run.ini").string(), "--weights", weights});
  ASSERT_EQ(r.code, 0) << r.err;
  // The reloaded model scores exactly what training reported.
  const auto p = r.out.find("mse=");
  ASSERT_NE(p, std::string::npos) << r.out;
  const auto mse = r.out.substr(p + 4, r.out.find(' ', p) - p - 4);
  EXPECT_NE(trained.find("," + mse + ","), std::string::npos) << r.out << trained;
  EXPECT_EQ(run_cli({"eval", "-c", (dir / "run.ini").string()}).code, 1);
}

TEST(Cli, ProbeAllLayersWritesOneMatrixPerTap) {
  const auto dir = make_workspace("cli_probe", 3);
  const auto r = run_cli({"probe", "-c", (dir / "run.ini").string(), "--layer", "all"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto run = dir / "out" / "cli_probe";
  for (int n = 0; n <= 3; ++n) EXPECT_TRUE(fs::exists(run / ("sim_layer_" + std::to_string(n) + ".csv"))) << n;
  EXPECT_FALSE(fs::exists(run / "sim_layer_4.csv"));
  EXPECT_EQ(run_cli({"probe", "-c", (dir / "run.ini").string(), "--layer", "9"}).code, 1);
  const auto ch1 = run_cli({"probe", "-c", (dir / "run.ini").string(), "--layer", "2", "--set", "probe.channel=1"});
  EXPECT_EQ(ch1.code, 0) << ch1.err;
  EXPECT_NE(tt::read_file(run / "report.txt").find("channel = 1"), std::string::npos);
}

TEST(Cli, AblateWritesOneRowPerValue) {
  const auto dir = make_workspace("cli_ablate");
  const auto r = run_cli({"ablate", "-c", (dir / "run.ini").string(), "--axis", "fusion_variant", "--values",
                          "mixer,add,cross,none", "--set", "ablate.protocol=long_term"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = tt::read_file(dir / "out" / "cli_ablate" / "ablation.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  // The default few-shot protocol needs a longer training prefix than this dataset has.
  EXPECT_EQ(run_cli({"ablate", "-c", (dir / "run.ini").string()}).code, 2);
}

TEST(Cli, GradcheckPassesAndFailsOnTolerance) {
  auto r = run_cli({"gradcheck"});
  ASSERT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("max relative error"), std::string::npos);
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
  r = run_cli({"gradcheck", "--set", "gradcheck.tolerance=0"});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("FAIL"), std::string::npos);
}

TEST(Cli, SynthWritesDeterministicFiles) {
  const auto dir = tt::temp_dir("cli_synth");
  for (const char* f : {"a.csv", "b.csv"})
    ASSERT_EQ(run_cli({"synth", "--kind", "ramp", "--length", "500", "--output", (dir / f).string()}).code, 0);
  EXPECT_EQ(tt::read_file(dir / "a.csv"), tt::read_file(dir / "b.csv"));
  EXPECT_EQ(run_cli({"synth", "--length", "100", "--output", (dir / "c.csv").string()}).code, 1);
  EXPECT_EQ(run_cli({"synth", "--length", "500", "--output", (dir / "nested" / "d.csv").string()}).code, 0);
  EXPECT_EQ(run_cli({"synth", "--length", "500", "--output", (dir / "a.csv" / "x.csv").string()}).code, 2);
}

TEST(Cli, FailuresHaveDistinctCodesAndMessages) {
  const auto dir = make_workspace("cli_errors");
  auto unknown_flag = run_cli({"train", "--bogus"});
  EXPECT_EQ(unknown_flag.code, 1);
  auto missing_file = run_cli({"train", "--config", (dir / "nope.ini").string()});
  EXPECT_EQ(missing_file.code, 1);
  EXPECT_NE(missing_file.err.find("nope.ini"), std::string::npos) << missing_file.err;
  auto no_config = run_cli({"train"});
  EXPECT_EQ(no_config.code, 1);
  EXPECT_NE(no_config.err.find("needs --config"), std::string::npos) << no_config.err;
  auto bad_key = run_cli({"train", "-c", (dir / "run.ini").string(), "--set", "train.sed=1"});
  EXPECT_EQ(bad_key.code, 1);
  EXPECT_NE(bad_key.err.find("train.sed"), std::string::npos);

  std::ofstream(dir / "bad.csv") << "date,a\nx,1\ny,NaN\n";
  auto bad_data = run_cli({"train", "-c", (dir / "run.ini").string(), "--set", "data.path=" + (dir / "bad.csv").string()});
  EXPECT_EQ(bad_data.code, 2);
  EXPECT_NE(bad_data.err.find("data error"), std::string::npos) << bad_data.err;
  EXPECT_NE(run_cli({}).code, 0);
}

TEST(Cli, InstalledBinaryRuns) {
  const auto dir = tt::temp_dir("cli_binary");
  const auto csv = (dir / "s.csv").string();
  const std::string cmd = std::string(TAPCAST_CLI_PATH) + " synth --kind noise --length 500 --output " + csv + " > /dev/null";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(csv));
  const std::string bad = std::string(TAPCAST_CLI_PATH) + " nonsense > /dev/null 2>&1";
  const int status = std::system(bad.c_str());
  EXPECT_TRUE(WIFEXITED(status) && WEXITSTATUS(status) == 1);
}
