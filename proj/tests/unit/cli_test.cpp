// Copyright 2026 The epicorr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "epicorr/io/config.hpp"
#include "epicorr/io/volume.hpp"
#include "epicorr/metrics.hpp"
#include "epicorr/optimizer.hpp"
#include "oracles.hpp"

namespace epicorr::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "epicorr");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("epicorr_cli_" + std::string(
                                            ::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Two small slices and a short optimizer schedule.
  fs::path write_small_config() const {
    io::RunConfig c;
    c.slices = 2;
    c.phantom.n_fe = 40;
    c.phantom.n_pe = 32;
    c.phantom.amplitude_bound = 3.0;
    c.phantom.width_min = 5.0;
    c.phantom.width_max = 8.0;
    c.phantom.noise_sd = 0.005;
    c.optimizer.iterations = 20;
    const fs::path p = dir_ / "small.ini";
    std::ofstream(p) << io::serialize_config(c);
    return p;
  }

  fs::path dir_;
};

TEST_F(CliTest, MissingRequiredFlagIsAUsageError) {
  const Result r = run_cli({"distort", "--image", "a.epiv", "--polarity", "bu", "--out", "b.epiv"});
  EXPECT_EQ(r.code, kUsage);
  EXPECT_NE(r.err.find("--field"), std::string::npos) << r.err;
  EXPECT_EQ(run_cli({}).code, kUsage);
  EXPECT_EQ(run_cli({"frobnicate"}).code, kUsage);
  EXPECT_EQ(run_cli({"distort", "--image", "a", "--field", "f", "--polarity", "up", "--out", "o"}).code, kUsage);
}

TEST_F(CliTest, HelpGoesToStdout) {
  const Result r = run_cli({"--help"});
  EXPECT_EQ(r.code, kOk);
  EXPECT_NE(r.out.find("correct"), std::string::npos);
}

TEST_F(CliTest, MissingInputIsADataError) {
  const Result r = run_cli({"distort", "--image", (dir_ / "nope.epiv").string(), "--field",
                            (dir_ / "nope.epiv").string(), "--polarity", "bu", "--out", (dir_ / "o.epiv").string()});
  EXPECT_EQ(r.code, kDataError);
  EXPECT_FALSE(r.err.empty());
}

TEST_F(CliTest, ZeroFieldUnwarpIsBitExact) {
  const Matrix img = oracle::random_matrix(6, 8, 1);
  io::write_volume(io::make_volume({img}, io::VolumeKind::Image), dir_ / "img.epiv");
  io::write_volume(io::make_volume({Matrix::Zero(6, 8)}, io::VolumeKind::Field), dir_ / "zero.epiv");
  for (const char* pol : {"bu", "bd"}) {
    for (const char* cmd : {"distort", "unwarp"}) {
      const fs::path out = dir_ / (std::string(cmd) + pol + ".epiv");
      const Result r = run_cli({cmd, "--image", (dir_ / "img.epiv").string(), "--field", (dir_ / "zero.epiv").string(),
                                "--polarity", pol, "--out", out.string()});
      ASSERT_EQ(r.code, kOk) << r.err;
      EXPECT_EQ(io::read_volume(out).payload, io::read_volume(dir_ / "img.epiv").payload) << cmd << " " << pol;
    }
  }
}

TEST_F(CliTest, DistortMatchesLibrary) {
  const Matrix img = oracle::smooth_image(6, 10, 2);
  const Matrix f = oracle::random_matrix(6, 10, 3, -2, 2);
  io::write_volume(io::make_volume({img}, io::VolumeKind::Image), dir_ / "img.epiv");
  io::write_volume(io::make_volume({f}, io::VolumeKind::Field), dir_ / "f.epiv");
  ASSERT_EQ(run_cli({"distort", "--image", (dir_ / "img.epiv").string(), "--field", (dir_ / "f.epiv").string(),
                     "--polarity", "bd", "--out", (dir_ / "o.epiv").string()})
                .code,
            kOk);
  const Matrix img32 = io::slice_matrix(io::read_volume(dir_ / "img.epiv"), 0);
  const Matrix f32 = io::slice_matrix(io::read_volume(dir_ / "f.epiv"), 0);
  const Matrix want =
      forward_distort(ImageSlice(img32), DisplacementField(f32), PePolarity::BlipDown).matrix().cast<float>().cast<double>();
  EXPECT_EQ(io::slice_matrix(io::read_volume(dir_ / "o.epiv"), 0), want);
}

TEST_F(CliTest, FieldEvaluationNeedsAMask) {
  io::write_volume(io::make_volume({Matrix::Ones(16, 16)}, io::VolumeKind::Field), dir_ / "f.epiv");
  const Result r = run_cli({"evaluate", "--ref", (dir_ / "f.epiv").string(), "--test", (dir_ / "f.epiv").string(),
                            "--report", (dir_ / "r.txt").string()});
  EXPECT_EQ(r.code, kDataError);
}

TEST_F(CliTest, SimulateCorrectEvaluatePipeline) {
  const fs::path cfg = write_small_config();
  const fs::path sim = dir_ / "sim";
  Result r = run_cli({"simulate", "--spec", cfg.string(), "--out-dir", sim.string(), "--seed", "5"});
  ASSERT_EQ(r.code, kOk) << r.err;
  for (const char* f : {"image.epiv", "field.epiv", "bu.epiv", "bd.epiv", "mask.epiv", "config.ini", "provenance.json"}) {
    EXPECT_TRUE(fs::exists(sim / f)) << f;
  }
  EXPECT_NE(slurp(sim / "provenance.json").find("\"seed\""), std::string::npos);

  // Same command line apart from --threads, so every output byte must match.
  const fs::path out = dir_ / "out";
  const fs::path out1 = dir_ / "out1";
  r = run_cli({"--threads", "1", "correct", "--bu", (sim / "bu.epiv").string(), "--bd", (sim / "bd.epiv").string(),
               "--config", cfg.string(), "--out-dir", out.string()});
  ASSERT_EQ(r.code, kOk) << r.err;
  fs::rename(out, out1);
  r = run_cli({"correct", "--bu", (sim / "bu.epiv").string(), "--bd", (sim / "bd.epiv").string(), "--config",
               cfg.string(), "--out-dir", out.string(), "--threads", "8"});
  ASSERT_EQ(r.code, kOk) << r.err;
  for (const char* f : {"image.epiv", "field.epiv", "rigid.csv", "loss_trace.csv", "config.ini", "provenance.json"}) {
    EXPECT_FALSE(slurp(out1 / f).empty()) << f;
    EXPECT_TRUE(slurp(out1 / f) == slurp(out / f)) << f;
  }
  EXPECT_NE(slurp(out1 / "provenance.json").find("config_hash"), std::string::npos);
  EXPECT_EQ(slurp(out1 / "rigid.csv").substr(0, 5), "slice");

  r = run_cli({"evaluate", "--ref", (sim / "field.epiv").string(), "--test", (out1 / "field.epiv").string(),
               "--mask-from", (sim / "image.epiv").string(), "--report", (dir_ / "report.txt").string()});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(r.out, slurp(dir_ / "report.txt"));
  EXPECT_NE(r.out.find("slices=2\n"), std::string::npos);

  // The report reproduces an in-process evaluation of the same data.
  const io::RunConfig config = io::read_config(cfg);
  const io::VolumeContainer bu = io::read_volume(sim / "bu.epiv"), bd = io::read_volume(sim / "bd.epiv");
  std::vector<ReversedPePair> pairs;
  for (int s = 0; s < 2; ++s) pairs.push_back({ImageSlice(io::slice_matrix(bu, s)), ImageSlice(io::slice_matrix(bd, s))});
  const auto results = estimate_volume(pairs, config.optimizer, 1);
  const io::VolumeContainer truth = io::read_volume(sim / "field.epiv");
  const io::VolumeContainer image = io::read_volume(sim / "image.epiv");
  double mean_rmse = 0.0;
  for (int s = 0; s < 2; ++s) {
    const Mask m = mask_median_otsu(io::slice_matrix(image, s));
    const Matrix est = results[static_cast<std::size_t>(s)].field.matrix().cast<float>().cast<double>();
    mean_rmse += 0.5 * masked_rmse(io::slice_matrix(truth, s), est, &m);
  }
  const auto at = r.out.find("rmse_mean=");
  ASSERT_NE(at, std::string::npos);
  EXPECT_NEAR(std::stod(r.out.substr(at + 10)), mean_rmse, 1e-9 + 1e-6 * mean_rmse);
  EXPECT_LT(mean_rmse, 0.5);
}

}  // namespace
}  // namespace epicorr::cli
