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

#include "epicorr/multires.hpp"

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace epicorr {
namespace {

double inner(const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); }

// Block means of an already-blurred image.
Matrix block_mean(const Matrix& x, int f) {
  Matrix out(x.rows() / f, x.cols() / f);
  for (Index i = 0; i < out.rows(); ++i) {
    for (Index j = 0; j < out.cols(); ++j) out(i, j) = x.block(i * f, j * f, f, f).mean();
  }
  return out;
}

TEST(GaussianTaps, RadiusAndNormalization) {
  EXPECT_EQ(gaussian_radius(0.5), 2);
  EXPECT_EQ(gaussian_radius(1.5), 6);
  EXPECT_EQ(gaussian_radius(2.5), 10);
  const auto taps = gaussian_taps(1.5);
  ASSERT_EQ(taps.size(), 13u);
  double sum = 0.0;
  for (double t : taps) sum += t;
  EXPECT_NEAR(sum, 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(taps[0], taps[12]);
  EXPECT_NEAR(taps[7] / taps[6], std::exp(-1.0 / (2 * 1.5 * 1.5)), 1e-15);
}

TEST(GaussianBlur, ConstantIsUnchanged) {
  const Matrix c = Matrix::Constant(9, 11, 0.37);
  for (double s : {0.5, 1.5, 2.5}) EXPECT_LE((gaussian_blur(c, s) - c).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GaussianBlur, ImpulseMatchesTwoDimensionalGaussian) {
  Matrix x = Matrix::Zero(31, 31);
  x(15, 15) = 1.0;
  const Matrix b = gaussian_blur(x, 2.5);
  EXPECT_LE((b - oracle::blur2d(x, 2.5)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_NEAR(b.sum(), 1.0, 1e-12);
  EXPECT_NEAR(b(15, 18) / b(15, 15), std::exp(-9.0 / (2 * 6.25)), 1e-12);
}

TEST(GaussianBlur, MatchesDenseOracleWithReplicatePadding) {
  const Matrix x = oracle::random_matrix(13, 10, 4);
  for (double s : {0.5, 1.5, 2.5}) {
    EXPECT_LE((gaussian_blur(x, s) - oracle::blur2d(x, s)).cwiseAbs().maxCoeff(), 1e-13) << s;
  }
}

TEST(GaussianBlur, AdjointIdentity) {
  const Matrix x = oracle::random_matrix(12, 9, 5), y = oracle::random_matrix(12, 9, 6);
  for (double s : {0.5, 1.5, 2.5}) {
    EXPECT_NEAR(inner(gaussian_blur(x, s), y), inner(x, gaussian_blur_adjoint(y, s)), 1e-12);
  }
}

TEST(GaussianBlur, NonPositiveSigmaThrows) { EXPECT_THROW(gaussian_blur(Matrix::Zero(4, 4), 0.0), InvalidInput); }

TEST(Downsample, ConstantStaysConstant) {
  const Matrix d = downsample(Matrix::Constant(8, 12, 2.0), 4);
  ASSERT_EQ(d.rows(), 2);
  ASSERT_EQ(d.cols(), 3);
  EXPECT_LE((d.array() - 2.0).abs().maxCoeff(), 1e-15);
}

TEST(Downsample, MatchesBlurThenBlockMean) {
  const Matrix x = oracle::random_matrix(16, 8, 7);
  for (int f : {2, 4}) {
    const Matrix want = block_mean(oracle::blur2d(x, f / 2.0), f);
    EXPECT_LE((downsample(x, f) - want).cwiseAbs().maxCoeff(), 1e-13) << f;
  }
}

TEST(Downsample, CheckerboardAveragesOutInTheInterior) {
  Matrix x(16, 16);
  for (Index i = 0; i < 16; ++i) {
    for (Index j = 0; j < 16; ++j) x(i, j) = static_cast<double>((i + j) % 2);
  }
  const Matrix d = downsample(x, 2);
  for (Index i = 2; i < 6; ++i) {
    for (Index j = 2; j < 6; ++j) EXPECT_NEAR(d(i, j), 0.5, 1e-12);
  }
}

TEST(Downsample, IndivisibleOrBadFactorThrows) {
  EXPECT_THROW(downsample(Matrix::Zero(10, 8), 4), InvalidInput);
  EXPECT_THROW(downsample(Matrix::Zero(9, 9), 3), InvalidInput);
}

TEST(Downsample, AdjointIdentity) {
  const Matrix x = oracle::random_matrix(8, 16, 8);
  for (int f : {2, 4}) {
    const Matrix y = oracle::random_matrix(8 / f, 16 / f, 9);
    EXPECT_NEAR(inner(downsample(x, f), y), inner(x, downsample_adjoint(y, f, 8, 16)), 1e-12);
  }
}

TEST(Upsample, ConstantAndInteriorRamp) {
  const Matrix c = upsample_bilinear(Matrix::Constant(3, 4, 1.5), 2);
  ASSERT_EQ(c.rows(), 6);
  ASSERT_EQ(c.cols(), 8);
  EXPECT_LE((c.array() - 1.5).abs().maxCoeff(), 1e-15);

  // Coarse centre i sits at fine coordinate 2i + 0.5.
  Matrix coarse(4, 4);
  for (Index i = 0; i < 4; ++i) {
    for (Index j = 0; j < 4; ++j) coarse(i, j) = 2.0 * i + 0.5 + 3.0 * (2.0 * j + 0.5);
  }
  const Matrix fine = upsample_bilinear(coarse, 2);
  for (Index i = 1; i < 7; ++i) {
    for (Index j = 1; j < 7; ++j) EXPECT_NEAR(fine(i, j), i + 3.0 * j, 1e-12);
  }
}

TEST(MultiresConfig, LevelCountsAndDefaultWeights) {
  MultiresConfig c;
  const std::pair<MultiresMode, std::size_t> cases[] = {
      {MultiresMode::None, 1}, {MultiresMode::Multiblur, 4}, {MultiresMode::Multiscale, 3}, {MultiresMode::Both, 6}};
  for (auto [mode, n] : cases) {
    c.mode = mode;
    EXPECT_EQ(c.level_count(), n);
    EXPECT_EQ(c.resolved_weights().size(), n);
    EXPECT_EQ(level_specs(c).size(), n);
  }
  EXPECT_EQ(default_level_weights(MultiresMode::Multiblur), (std::vector<double>{0.4, 0.3, 0.2, 0.1}));
  EXPECT_EQ(default_level_weights(MultiresMode::Multiscale), (std::vector<double>{0.6, 0.3, 0.1}));
  EXPECT_EQ(default_level_weights(MultiresMode::Both), (std::vector<double>{0.5, 0.15, 0.05, 0.15, 0.1, 0.05}));
}

TEST(MultiresConfig, LevelOrderIsFullThenDownsampledThenBlurred) {
  MultiresConfig c;
  c.mode = MultiresMode::Both;
  const auto specs = level_specs(c);
  EXPECT_EQ(specs[0].kind, LevelKind::Full);
  EXPECT_EQ(specs[1].kind, LevelKind::Downsampled);
  EXPECT_EQ(specs[1].factor, 2);
  EXPECT_EQ(specs[2].factor, 4);
  EXPECT_EQ(specs[3].kind, LevelKind::Blurred);
  EXPECT_EQ(specs[3].sigma, 0.5);
  EXPECT_EQ(specs[5].sigma, 2.5);
  EXPECT_EQ(specs[4].weight, 0.1);
}

TEST(MultiresConfig, InvalidSettingsRejected) {
  MultiresConfig c;
  c.weights = {1.0, 2.0};
  EXPECT_THROW(c.validate(), InvalidInput);
  c = {};
  c.blur_sigmas = {0.5, -1.0, 2.5};
  EXPECT_THROW(c.validate(), InvalidInput);
  c = {};
  c.mode = MultiresMode::Multiscale;
  c.downsample_factors = {3};
  EXPECT_THROW(c.validate(), InvalidInput);
  EXPECT_THROW(parse_multires_mode("sideways"), InvalidInput);
  EXPECT_EQ(parse_multires_mode("both"), MultiresMode::Both);
}

TEST(MakeLevels, ViewsOfEachLevel) {
  MultiresConfig c;
  c.mode = MultiresMode::Both;
  const ImageSlice img(oracle::random_matrix(8, 8, 10));
  const DisplacementField field(8, 8, 4.0);
  const ReversedPePair pair{ImageSlice(oracle::random_matrix(8, 8, 11)), ImageSlice(oracle::random_matrix(8, 8, 12))};
  const auto levels = make_levels(img, field, pair, c);
  ASSERT_EQ(levels.size(), 6u);
  EXPECT_EQ(levels[0].image, img);
  EXPECT_EQ(levels[1].image.rows(), 4);
  EXPECT_EQ(levels[2].field.rows(), 2);
  EXPECT_NEAR(levels[1].field(1, 1), 2.0, 1e-12);
  EXPECT_NEAR(levels[2].field(0, 0), 1.0, 1e-12);
  EXPECT_LE((levels[4].measured.blip_up.matrix() - oracle::blur2d(pair.blip_up.matrix(), 1.5)).cwiseAbs().maxCoeff(),
            1e-13);
  EXPECT_LE((levels[5].image.matrix() - oracle::blur2d(img.matrix(), 2.5)).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(LevelViews, AdjointsMatchViews) {
  MultiresConfig c;
  c.mode = MultiresMode::Both;
  const Matrix x = oracle::random_matrix(8, 8, 13);
  for (const LevelSpec& spec : level_specs(c)) {
    const Matrix vi = level_image_view(x, spec);
    const Matrix vf = level_field_view(x, spec);
    const Matrix y = oracle::random_matrix(vi.rows(), vi.cols(), 14);
    EXPECT_NEAR(inner(vi, y), inner(x, level_image_adjoint(y, spec, 8, 8)), 1e-12);
    EXPECT_NEAR(inner(vf, y), inner(x, level_field_adjoint(y, spec, 8, 8)), 1e-12);
  }
}

}  // namespace
}  // namespace epicorr
