#include <gtest/gtest.h>

#include <sys/wait.h>

#include "support.hpp"

using testing_support::read_file;
using testing_support::scratch_dir;
using testing_support::write_file;

namespace {

/// Runs the CLI with `args`, stdout and stderr to files in `dir`; returns the exit code.
int cli(const std::string& dir, const std::string& args) {
  const std::string cmd =
      std::string(FLOWFORMER_CLI) + " " + args + " >" + dir + "/stdout.txt 2>" + dir + "/stderr.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, SynthValidateAndStats) {
  const auto dir = scratch_dir("cli-synth");
  ASSERT_EQ(cli(dir, "synth --task noise --rows 500 --seed 3 --out-dir " + dir + "/data"), 0);
  EXPECT_EQ(cli(dir, "spec validate " + dir + "/data/spec.yaml " + dir + "/data/data.csv"), 0);
  EXPECT_EQ(cli(dir, "ingest stats " + dir + "/data/spec.yaml " + dir + "/data/data.csv"), 0);
  EXPECT_NE(read_file(dir + "/stdout.txt").find("500"), std::string::npos);
}

TEST(Cli, PreprocessFitAndTransform) {
  const auto dir = scratch_dir("cli-pre");
  ASSERT_EQ(cli(dir, "synth --rows 200 --out-dir " + dir), 0);
  const auto common = " --spec " + dir + "/spec.yaml --data " + dir + "/data.csv";
  ASSERT_EQ(cli(dir, "preprocess fit" + common + " --levels 4 --out " + dir + "/state.json"), 0);
  const auto state = flowformer::load_preprocessor(dir + "/state.json");
  EXPECT_EQ(state.output_width(), 30u + 8u * 5u);
  ASSERT_EQ(cli(dir, "preprocess transform" + common + " --state " + dir + "/state.json --out " + dir + "/m.csv"), 0);
  const auto m = read_file(dir + "/m.csv");
  EXPECT_EQ(std::count(m.begin(), m.end(), '\n'), 201);
}

TEST(Cli, RunWritesResults) {
  const auto dir = scratch_dir("cli-run");
  ASSERT_EQ(cli(dir, "synth --rows 600 --seed 1 --out-dir " + dir), 0);
  write_file(dir + "/run.json", R"({"model": {"window": 4, "layers": 1, "ff_dim": 16, "encoder_d_model": 16},
                                    "protocol": {"max_epochs": 2}, "timing": {"enabled": false}})");
  ASSERT_EQ(cli(dir, "run --spec " + dir + "/spec.yaml --data " + dir + "/data.csv --config " + dir +
                         "/run.json --out " + dir + "/store"),
            0)
      << read_file(dir + "/stderr.txt");
  EXPECT_NE(read_file(dir + "/stdout.txt").find("record-projection,last-token"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(dir + "/store/results.csv"));
}

TEST(Cli, InvalidInputsExitWithTwo) {
  const auto dir = scratch_dir("cli-bad");
  ASSERT_EQ(cli(dir, "synth --rows 300 --out-dir " + dir), 0);
  EXPECT_EQ(cli(dir, "spec validate " + dir + "/missing.yaml"), 2);
  EXPECT_EQ(cli(dir, "no-such-command"), 2);
  write_file(dir + "/bad.yaml", "version: 1\nname: x\n");
  EXPECT_EQ(cli(dir, "spec validate " + dir + "/bad.yaml"), 2);
  EXPECT_FALSE(read_file(dir + "/stderr.txt").empty());
  write_file(dir + "/run.json", R"({"model": {"heads": 7}})");
  EXPECT_EQ(cli(dir, "run --spec " + dir + "/spec.yaml --data " + dir + "/data.csv --config " + dir + "/run.json --out " +
                         dir + "/s"),
            2);
  write_file(dir + "/run.json", "{not json");
  EXPECT_EQ(cli(dir, "run --spec " + dir + "/spec.yaml --data " + dir + "/data.csv --config " + dir + "/run.json --out " +
                         dir + "/s"),
            2);
  EXPECT_EQ(cli(dir, "synth --task other --out-dir " + dir), 2);
}

TEST(Cli, AllDivergedExitsWithThree) {
  const auto dir = scratch_dir("cli-diverge");
  ASSERT_EQ(cli(dir, "synth --rows 400 --out-dir " + dir), 0);
  write_file(dir + "/run.json", R"({"model": {"window": 4, "layers": 1, "ff_dim": 16, "encoder_d_model": 16,
                                              "learning_rate": 1e30}, "timing": {"enabled": false}})");
  EXPECT_EQ(cli(dir, "run --spec " + dir + "/spec.yaml --data " + dir + "/data.csv --config " + dir +
                         "/run.json --out " + dir + "/store"),
            3);
}
