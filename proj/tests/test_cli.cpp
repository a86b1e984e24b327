// Copyright 2026 The cdcfm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"

namespace cdcfm::cli {
namespace {

namespace fs = std::filesystem;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("cdcfm_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::vector<std::string>& args) {
    out_.str("");
    err_.str("");
    return run_cli(args, out_, err_);
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write_config(const std::string& name, const std::string& extra = "") {
    std::ofstream f(dir_ / name);
    f << "K = 3\nbase_size = 4\nsteps_per_stage = 2,2,2\nbatch_size = 4\ntrain_steps = 10\n"
      << "hidden_channels = 4\ndepth = 2\nembed_dim = 4\nlr = 0.001\nnum_classes = 8\n"
      << "data_dir = " << path("data") << "\nout_dir = " << path("out") << "\n"
      << extra;
  }

  fs::path dir_;
  std::ostringstream out_;
  std::ostringstream err_;
};

TEST_F(CliTest, MissingConfigFileIsConfigError) {
  const std::string missing = path("absent.cfg");
  EXPECT_EQ(run({"train", "--config", missing}), kExitConfig);
  EXPECT_NE(err_.str().find(missing), std::string::npos);
}

TEST_F(CliTest, UnknownKeyReportsLine) {
  write_config("bad.cfg", "mystery = 4\n");
  EXPECT_EQ(run({"train", "--config", path("bad.cfg")}), kExitConfig);
  EXPECT_NE(err_.str().find("line 13"), std::string::npos) << err_.str();
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run({}), kExitConfig);
  EXPECT_EQ(run({"frobnicate"}), kExitConfig);
  EXPECT_EQ(run({"sample"}), kExitConfig);
  EXPECT_EQ(run({"--help"}), kExitOk);
}

TEST_F(CliTest, SynthRejectsIndivisibleSize) {
  EXPECT_EQ(run({"synth", "--out", path("data"), "--size", "18", "--stages", "3"}), kExitConfig);
}

TEST_F(CliTest, RuntimeFailureExitsOne) {
  EXPECT_EQ(run({"sample", "--checkpoint", path("nothing.cdcm")}), kExitRuntime);
}

TEST_F(CliTest, PipelineAndGuidanceDegeneracy) {
  ASSERT_EQ(run({"synth", "--out", path("data"), "--per-class", "2", "--size", "16"}), kExitOk) << err_.str();
  write_config("run.cfg");
  ASSERT_EQ(run({"train", "--config", path("run.cfg")}), kExitOk) << err_.str();
  ASSERT_TRUE(fs::exists(path("out/model.cdcm")));
  ASSERT_TRUE(fs::exists(path("out/loss.csv")));

  const std::string ck = path("out/model.cdcm");
  ASSERT_EQ(run({"sample", "--checkpoint", ck, "--count", "3", "--seed", "5", "--out", path("uncond")}), kExitOk);
  ASSERT_EQ(run({"sample", "--checkpoint", ck, "--count", "3", "--seed", "5", "--cfg-scale", "0", "--class", "3",
                 "--save-intermediates", "--out", path("zero")}),
            kExitOk);
  for (int i = 0; i < 3; ++i) {
    const std::string name = "sample_000" + std::to_string(i) + ".rten";
    EXPECT_EQ(read_file_bytes(dir_ / "uncond" / name), read_file_bytes(dir_ / "zero" / name));
  }
  EXPECT_TRUE(fs::exists(dir_ / "zero" / "sample_0000_stage1.rten"));
  EXPECT_EQ(run({"sample", "--checkpoint", ck, "--class", "9"}), kExitConfig);

  ASSERT_EQ(run({"analyze", "--checkpoint", ck, "--data-dir", path("data"), "--n", "100", "--samples", "4",
                 "--trials", "3", "--out", path("report")}),
            kExitOk)
      << err_.str();
  for (const char* f : {"costs.csv", "timing.csv", "marginals.csv"}) EXPECT_TRUE(fs::exists(dir_ / "report" / f)) << f;

  ASSERT_EQ(run({"sweep", "--config", path("run.cfg"), "--gammas", "1,2", "--samples", "4", "--trials", "3", "--out",
                 path("sweep")}),
            kExitOk)
      << err_.str();
  std::ifstream csv(dir_ / "sweep" / "gamma_sweep.csv");
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  EXPECT_EQ(lines, 3);
  EXPECT_EQ(run({"sweep", "--config", path("run.cfg"), "--gammas", "7"}), kExitConfig);
}

}  // namespace
}  // namespace cdcfm::cli
