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

#include "epicorr/optimizer.hpp"

#include <gtest/gtest.h>

#include "epicorr/kmatrix.hpp"
#include "epicorr/metrics.hpp"
#include "epicorr/phantom.hpp"
#include "oracles.hpp"

namespace epicorr {
namespace {

PhantomSpec small_phantom(std::uint64_t seed) {
  PhantomSpec s;
  s.n_fe = 40;
  s.n_pe = 32;
  s.amplitude_bound = 3.0;
  s.width_min = 5.0;
  s.width_max = 8.0;
  s.seed = seed;
  return s;
}

OptimizerConfig quick_config() {
  OptimizerConfig c;
  c.iterations = 30;
  c.rigid_enabled = false;
  return c;
}

TEST(SolveImage, ZeroFieldGivesRidgeAverage) {
  const Matrix fu = oracle::random_matrix(5, 7, 1), fd = oracle::random_matrix(5, 7, 2);
  const ImageSlice x = solve_image(DisplacementField(5, 7, 0.0), {ImageSlice(fu), ImageSlice(fd)}, RigidParams{},
                                   1e-9, false);
  EXPECT_LE((x.matrix() - (fu + fd) / 2.0).cwiseAbs().maxCoeff(), 1e-9);
  const ImageSlice r = solve_image(DisplacementField(5, 7, 0.0), {ImageSlice(fu), ImageSlice(fd)}, RigidParams{},
                                   0.5, false);
  EXPECT_LE((r.matrix() - (fu + fd) / 2.5).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SolveImage, RecoversNoiselessImage) {
  const Matrix rho = oracle::smooth_image(12, 32, 3);
  const DisplacementField field(oracle::smooth_image(12, 32, 4) * 4.0 - Matrix::Constant(12, 32, 1.0));
  const ImageSlice bu = forward_distort(ImageSlice(rho), field, PePolarity::BlipUp);
  const ImageSlice bd = forward_distort(ImageSlice(rho), field, PePolarity::BlipDown);
  const ImageSlice x = solve_image(field, {bu, bd}, RigidParams{}, 1e-12, false);
  EXPECT_LE((x.matrix() - rho).block(0, 2, 12, 28).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(SolveImage, NormalEquationsHold) {
  const Matrix fu = oracle::random_matrix(3, 9, 5), fd = oracle::random_matrix(3, 9, 6);
  const Matrix f = oracle::random_matrix(3, 9, 7, -2, 2);
  const double eps = 1e-3;
  const ImageSlice x = solve_image(DisplacementField(f), {ImageSlice(fu), ImageSlice(fd)}, RigidParams{}, eps, false);
  for (Index i = 0; i < 3; ++i) {
    const Matrix ku = oracle::k_matrix(oracle::row_of(f, i), true);
    const Matrix kd = oracle::k_matrix(oracle::row_of(f, i), false);
    const Eigen::VectorXd xi = x.matrix().row(i).transpose();
    const Eigen::VectorXd r = (ku.transpose() * ku + kd.transpose() * kd) * xi + eps * xi -
                              ku.transpose() * fu.row(i).transpose() - kd.transpose() * fd.row(i).transpose();
    EXPECT_LE(r.cwiseAbs().maxCoeff(), 1e-8) << "row " << i;
  }
}

TEST(SolveImage, RidgeShrinksTheSolution) {
  const ReversedPePair p{ImageSlice(oracle::random_matrix(4, 10, 8)), ImageSlice(oracle::random_matrix(4, 10, 9))};
  const DisplacementField f(oracle::random_matrix(4, 10, 10, -1.5, 1.5));
  double previous = std::numeric_limits<double>::infinity();
  for (double eps : {1e-4, 1e-2, 1.0, 100.0}) {
    const double norm = solve_image(f, p, RigidParams{}, eps, false).matrix().norm();
    EXPECT_LT(norm, previous) << eps;
    previous = norm;
  }
}

TEST(SolveImage, SingularSystemWithoutRidgeThrows) {
  // Columns 1 and 2 clip to the last pixel for BU and the first for BD.
  Matrix f = Matrix::Zero(1, 4);
  f(0, 1) = 10.0;
  f(0, 2) = 10.0;
  const ReversedPePair p{ImageSlice(Matrix::Ones(1, 4)), ImageSlice(Matrix::Ones(1, 4))};
  EXPECT_THROW(solve_image(DisplacementField(f), p, RigidParams{}, 0.0), NumericalFailure);
  EXPECT_NO_THROW(solve_image(DisplacementField(f), p, RigidParams{}, 1e-3));
  EXPECT_THROW(solve_image(DisplacementField(f), p, RigidParams{}, -1.0), InvalidInput);
}

TEST(SolveImage, ProjectionClampsNegatives) {
  const ReversedPePair p{ImageSlice(Matrix::Constant(2, 4, -1.0)), ImageSlice(Matrix::Constant(2, 4, -1.0))};
  const ImageSlice x = solve_image(DisplacementField(2, 4, 0.0), p, RigidParams{}, 1e-6);
  EXPECT_EQ(x.matrix().cwiseAbs().maxCoeff(), 0.0);
}

TEST(FieldStep, ZeroGradientLeavesFieldUnchanged) {
  const DisplacementField f(oracle::random_matrix(4, 4, 11, -3, 3));
  FieldStepState st;
  EXPECT_EQ(field_step(f, DisplacementField(4, 4, 0.0), st, 0.5, 32.0), f);
  EXPECT_EQ(st.steps, 1);
}

TEST(FieldStep, FirstStepIsPlainGradientDescent) {
  const DisplacementField f(4, 4, 1.0);
  DisplacementField g(4, 4, 0.0);
  g(2, 1) = 2.0;
  FieldStepState st;
  const DisplacementField out = field_step(f, g, st, 0.25, 32.0);
  for (Index i = 0; i < 4; ++i) {
    for (Index j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(out(i, j), (i == 2 && j == 1) ? 0.5 : 1.0);
  }
}

TEST(FieldStep, MomentumIsBiasCorrected) {
  const DisplacementField g(2, 2, 1.0);
  FieldStepState st;
  DisplacementField f(2, 2, 0.0);
  f = field_step(f, g, st, 1.0, 32.0);
  f = field_step(f, g, st, 1.0, 32.0);
  // A constant gradient keeps a unit bias-corrected moment.
  EXPECT_NEAR(f(0, 0), -2.0, 1e-12);
  EXPECT_EQ(st.steps, 2);
}

TEST(FieldStep, ClampsToValleyMargin) {
  const DisplacementField f(2, 2, 0.0);
  FieldStepState st;
  const DisplacementField out = field_step(f, DisplacementField(2, 2, -1.0), st, 100.0, 4.0);
  EXPECT_EQ(out.matrix().maxCoeff(), 12.0);
  EXPECT_THROW(field_step(f, DisplacementField(2, 2, std::nan("")), st, 1.0, 4.0), NumericalFailure);
}

TEST(EstimateSlice, UndistortedPairIsAFixedPoint) {
  const ImageSlice x = make_phantom(small_phantom(1));
  OptimizerConfig c = quick_config();
  c.rigid_enabled = true;
  const CorrectionResult r = estimate_slice({x, x}, c);
  EXPECT_LE(r.field.matrix().cwiseAbs().maxCoeff(), 0.05);
  EXPECT_GE(psnr(x.matrix(), r.image.matrix()), 50.0);
}

TEST(EstimateSlice, TraceIsMonotoneWithinEachLevel) {
  const SimulatedPair sim = simulate_phantom(small_phantom(2));
  const CorrectionResult r = estimate_slice(sim.pair, quick_config());
  ASSERT_EQ(r.trace.size(), 3u);
  EXPECT_EQ(r.trace[0].factor, 4);
  EXPECT_EQ(r.trace[2].factor, 1);
  for (const auto& level : r.trace) {
    ASSERT_FALSE(level.loss.empty());
    for (std::size_t k = 1; k < level.loss.size(); ++k) EXPECT_LE(level.loss[k], level.loss[k - 1]);
  }
}

TEST(EstimateSlice, ReducesFieldErrorOnSmallPhantom) {
  const SimulatedPair sim = simulate_phantom(small_phantom(3));
  const Mask mask = mask_median_otsu(sim.image.matrix(), {1, 256, 4});
  const CorrectionResult r = estimate_slice(sim.pair, quick_config());
  const double before = masked_rmse(sim.field.matrix(), Matrix::Zero(40, 32), &mask);
  const double after = masked_rmse(sim.field.matrix(), r.field.matrix(), &mask);
  EXPECT_LT(after, 0.25 * before) << before << " -> " << after;
}

TEST(EstimateSlice, IsDeterministic) {
  const SimulatedPair sim = simulate_phantom(small_phantom(4));
  OptimizerConfig c = quick_config();
  c.rigid_enabled = true;
  const CorrectionResult a = estimate_slice(sim.pair, c);
  const CorrectionResult b = estimate_slice(sim.pair, c);
  EXPECT_EQ(a.field, b.field);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.rigid, b.rigid);
}

TEST(EstimateSlice, RejectsBadInput) {
  ImageSlice x(40, 32, 0.5);
  x(3, 3) = std::nan("");
  EXPECT_THROW(estimate_slice({x, x}, quick_config()), InvalidInput);
  const ImageSlice tiny(3, 3, 0.5);
  EXPECT_THROW(estimate_slice({tiny, tiny}, quick_config()), InvalidInput);
  OptimizerConfig bad = quick_config();
  bad.iterations = 0;
  EXPECT_THROW(bad.validate(), InvalidInput);
}

TEST(EstimateVolume, ThreadCountAndOrderDoNotChangeResults) {
  std::vector<ReversedPePair> pairs;
  for (std::uint64_t s = 5; s < 8; ++s) pairs.push_back(simulate_phantom(small_phantom(s)).pair);
  OptimizerConfig c = quick_config();
  c.iterations = 10;
  const auto one = estimate_volume(pairs, c, 1);
  const auto many = estimate_volume(pairs, c, 8);
  std::vector<ReversedPePair> reversed(pairs.rbegin(), pairs.rend());
  const auto rev = estimate_volume(reversed, c, 2);
  ASSERT_EQ(one.size(), 3u);
  for (std::size_t s = 0; s < 3; ++s) {
    EXPECT_EQ(one[s].field, many[s].field);
    EXPECT_EQ(one[s].image, many[s].image);
    EXPECT_EQ(one[s].field, rev[2 - s].field);
  }
  EXPECT_EQ(one[0].field, estimate_slice(pairs[0], c).field);
}

TEST(EstimateVolume, ErrorsNameTheSlice) {
  std::vector<ReversedPePair> pairs(2, {ImageSlice(40, 32, 0.5), ImageSlice(40, 32, 0.5)});
  pairs[1].blip_up(0, 0) = std::nan("");
  try {
    estimate_volume(pairs, quick_config(), 2);
    FAIL() << "expected InvalidInput";
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("slice 1"), std::string::npos) << e.what();
  }
  pairs[1] = {ImageSlice(40, 30, 0.5), ImageSlice(40, 30, 0.5)};
  EXPECT_THROW(estimate_volume(pairs, quick_config(), 1), InvalidInput);
}

}  // namespace
}  // namespace epicorr
