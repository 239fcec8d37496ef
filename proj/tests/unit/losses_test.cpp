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

#include "epicorr/losses.hpp"

#include <gtest/gtest.h>

#include "gradient_check.hpp"
#include "oracles.hpp"

namespace epicorr {
namespace {

ReversedPePair pair_of(const Matrix& bu, const Matrix& bd) { return {ImageSlice(bu), ImageSlice(bd)}; }

TEST(MseLoss, IdenticalPairsGiveZero) {
  const Matrix a = oracle::random_matrix(4, 4, 1);
  EXPECT_EQ(mse_loss(pair_of(a, a), pair_of(a, a)), 0.0);
}

TEST(MseLoss, ConstantOffsetFixture) {
  const Matrix a = Matrix::Zero(2, 2);
  const Matrix b = Matrix::Constant(2, 2, 3.0);
  EXPECT_DOUBLE_EQ(mse_loss(pair_of(a, a), pair_of(b, a)), 4.5);
}

TEST(MseLoss, MatchesLoopOracleAndIsSymmetric) {
  const Matrix mu = oracle::random_matrix(4, 4, 2), md = oracle::random_matrix(4, 4, 3);
  const Matrix du = oracle::random_matrix(4, 4, 4), dd = oracle::random_matrix(4, 4, 5);
  const double v = mse_loss(pair_of(mu, md), pair_of(du, dd));
  EXPECT_NEAR(v, oracle::mse(mu, md, du, dd), 1e-12 * v);
  EXPECT_DOUBLE_EQ(v, mse_loss(pair_of(du, dd), pair_of(mu, md)));
}

TEST(MseLoss, ShapeMismatchThrows) {
  EXPECT_THROW(mse_loss(pair_of(Matrix::Zero(2, 2), Matrix::Zero(2, 2)),
                        pair_of(Matrix::Zero(2, 3), Matrix::Zero(2, 3))),
               InvalidInput);
}

TEST(BendingEnergy, ConstantAndAffineFieldsAreFree) {
  EXPECT_EQ(bending_energy(Matrix::Constant(5, 6, 2.5)), 0.0);
  Matrix ramp(6, 7);
  for (Index i = 0; i < 6; ++i) {
    for (Index j = 0; j < 7; ++j) ramp(i, j) = 0.7 * i - 1.3 * j + 4.0;
  }
  EXPECT_NEAR(bending_energy(ramp), 0.0, 1e-24);
}

TEST(BendingEnergy, QuadraticFixture) {
  Matrix f(5, 5);
  for (Index i = 0; i < 5; ++i) {
    for (Index j = 0; j < 5; ++j) f(i, j) = static_cast<double>(j * j);
  }
  EXPECT_DOUBLE_EQ(bending_energy(f), 60.0);
  EXPECT_DOUBLE_EQ(oracle::bending_energy(f), 60.0);
}

TEST(BendingEnergy, MatchesLoopOracleAndIsAffineInvariant) {
  const Matrix f = oracle::random_matrix(7, 9, 8, -3, 3);
  EXPECT_NEAR(bending_energy(f), oracle::bending_energy(f), 1e-12);
  Matrix g = f;
  for (Index i = 0; i < 7; ++i) {
    for (Index j = 0; j < 9; ++j) g(i, j) += 0.3 * i - 2.0 * j + 1.5;
  }
  EXPECT_NEAR(bending_energy(g), bending_energy(f), 1e-10);
}

TEST(BendingEnergy, TooSmallGridThrows) {
  EXPECT_THROW(bending_energy(Matrix::Zero(2, 5)), InvalidInput);
}

TEST(BendingEnergy, GradientMatchesFiniteDifferences) {
  const Matrix f = oracle::random_matrix(5, 6, 9, -2, 2);
  const Matrix g = bending_energy_gradient(f);
  for (Index k = 0; k < f.size(); ++k) {
    auto e = [&](double v) {
      Matrix p = f;
      p.data()[k] = v;
      return bending_energy(p);
    };
    EXPECT_NEAR(g.data()[k], oracle::central_difference(e, f.data()[k], 1e-4), 1e-6);
  }
}

TEST(ValleyLoss, Fixtures) {
  EXPECT_EQ(valley_loss(Matrix::Constant(3, 3, 1.9), 2.0), 0.0);
  Matrix single = Matrix::Zero(3, 3);
  single(1, 2) = 4.0;
  EXPECT_DOUBLE_EQ(valley_loss(single, 2.0), 2.0);
  Matrix row(1, 3);
  row << 0.0, 3.0, -4.0;
  EXPECT_DOUBLE_EQ(valley_loss(row, 2.0), 3.0);
  EXPECT_DOUBLE_EQ(oracle::valley(row, 2.0), 3.0);
}

TEST(ValleyLoss, GradientIsZeroBelowThresholdAndSignAbove) {
  EXPECT_EQ(valley_loss_gradient(Matrix::Constant(3, 4, 31.0), 32.0), Matrix::Zero(3, 4));
  Matrix row(1, 4);
  row << 33.0, -40.0, 32.0, 0.0;
  const Matrix g = valley_loss_gradient(row, 32.0);
  EXPECT_EQ(g(0, 0), 1.0);
  EXPECT_EQ(g(0, 1), -1.0);
  EXPECT_EQ(g(0, 2), 0.0);  // kink
  EXPECT_EQ(g(0, 3), 0.0);
}

TEST(ValleyLoss, NonPositiveTauThrows) { EXPECT_THROW(valley_loss(Matrix::Zero(2, 2), 0.0), InvalidInput); }

TEST(RigidLoss, Fixtures) {
  EXPECT_EQ(rigid_loss({0, 0, 0}), 0.0);
  EXPECT_EQ(rigid_loss({1, 2, 3}), 14.0);
  EXPECT_EQ(rigid_loss({-1, 0, 0}), 1.0);
}

TEST(LossWeights, Defaults) {
  const LossWeights w = LossWeights::fdnet_defaults();
  EXPECT_EQ(w.omega, (std::vector<double>{0.4, 0.3, 0.2, 0.1}));
  EXPECT_EQ(w.lambda, (std::vector<double>(4, 1e-5)));
  EXPECT_EQ(w.tau, (std::vector<double>(4, 32.0)));
  EXPECT_EQ(w.gamma, 0.01);
  EXPECT_EQ(w.valley_scale, 1e3);
  EXPECT_NO_THROW(w.validate(4));
  EXPECT_THROW(w.validate(3), InvalidInput);
}

TEST(LossWeights, InvalidValuesRejected) {
  LossWeights w = LossWeights::fdnet_defaults();
  w.tau[2] = 0.0;
  EXPECT_THROW(w.validate(4), InvalidInput);
  w = LossWeights::fdnet_defaults();
  w.omega = {0, 0, 0, 0};
  EXPECT_THROW(w.validate(4), InvalidInput);
  w = LossWeights::fdnet_defaults();
  w.gamma = -1;
  EXPECT_THROW(w.validate(4), InvalidInput);
}

TEST(TotalLoss, ZeroEverythingIsZero) {
  const ReversedPePair p = pair_of(Matrix::Zero(4, 4), Matrix::Zero(4, 4));
  const DisplacementField f(4, 4, 0.0);
  LossWeights w;
  w.omega = {1.0};
  w.lambda = {1e-5};
  w.tau = {32};
  const LevelTerms lv{&p, &p, &f};
  const LossBreakdown b = total_loss(std::span(&lv, 1), RigidParams{}, w);
  EXPECT_EQ(b.total, 0.0);
}

TEST(TotalLoss, TwoLevelsRecombineByHand) {
  const ReversedPePair m0 = pair_of(oracle::random_matrix(5, 5, 1), oracle::random_matrix(5, 5, 2));
  const ReversedPePair d0 = pair_of(oracle::random_matrix(5, 5, 3), oracle::random_matrix(5, 5, 4));
  const ReversedPePair m1 = pair_of(oracle::random_matrix(5, 5, 5), oracle::random_matrix(5, 5, 6));
  const ReversedPePair d1 = pair_of(oracle::random_matrix(5, 5, 7), oracle::random_matrix(5, 5, 8));
  const DisplacementField f0(oracle::random_matrix(5, 5, 9, -5, 5));
  const DisplacementField f1(oracle::random_matrix(5, 5, 10, -5, 5));
  LossWeights w;
  w.omega = {0.7, 0.3};
  w.lambda = {1e-2, 2e-2};
  w.tau = {3.0, 4.0};
  w.gamma = 0.05;
  const RigidParams r{0.3, -0.2, 0.01};
  const LevelTerms lv[2] = {{&m0, &d0, &f0}, {&m1, &d1, &f1}};
  const LossBreakdown b = total_loss(lv, r, w);

  const double by_hand =
      0.7 * (oracle::mse(m0.blip_up.matrix(), m0.blip_down.matrix(), d0.blip_up.matrix(), d0.blip_down.matrix()) +
             1e-2 * (oracle::bending_energy(f0.matrix()) + 1e3 * oracle::valley(f0.matrix(), 3.0))) +
      0.3 * (oracle::mse(m1.blip_up.matrix(), m1.blip_down.matrix(), d1.blip_up.matrix(), d1.blip_down.matrix()) +
             2e-2 * (oracle::bending_energy(f1.matrix()) + 1e3 * oracle::valley(f1.matrix(), 4.0))) +
      0.05 * (0.09 + 0.04 + 0.0001);
  EXPECT_NEAR(b.total, by_hand, 1e-12 * std::abs(by_hand));
  EXPECT_NEAR(b.recombine(w), b.total, 1e-12 * std::abs(b.total));
  EXPECT_EQ(b.mse.size(), 2u);
}

TEST(TotalLoss, IncompleteLevelThrows) {
  const ReversedPePair p = pair_of(Matrix::Zero(3, 3), Matrix::Zero(3, 3));
  LossWeights w;
  w.omega = {1.0};
  w.lambda = {0.0};
  w.tau = {1.0};
  const LevelTerms lv{&p, nullptr, nullptr};
  EXPECT_THROW(total_loss(std::span(&lv, 1), RigidParams{}, w), InvalidInput);
}

TEST(Objective, EvaluateDecomposesExactly) {
  const ReversedPePair m = pair_of(oracle::random_matrix(12, 12, 1), oracle::random_matrix(12, 12, 2));
  ObjectiveSettings s;
  s.multires.mode = MultiresMode::Both;
  const Objective obj(m, s);
  const LossBreakdown b = obj.evaluate(ImageSlice(oracle::random_matrix(12, 12, 3)),
                                       DisplacementField(oracle::random_matrix(12, 12, 4, -1, 1)),
                                       RigidParams{0.2, 0.1, 0.02});
  EXPECT_EQ(b.mse.size(), 6u);
  EXPECT_NEAR(b.recombine(obj.weights()), b.total, 1e-12 * b.total);
}

TEST(LossGradients, ZeroResidualGivesZeroDataGradients) {
  const Matrix img = oracle::random_matrix(6, 6, 5);
  const DisplacementField f(oracle::random_matrix(6, 6, 6, -1, 1));
  const ImageSlice bu = forward_distort(ImageSlice(img), f, PePolarity::BlipUp);
  const ImageSlice bd = forward_distort(ImageSlice(img), f, PePolarity::BlipDown);
  ObjectiveSettings s;
  s.multires.mode = MultiresMode::None;
  s.lambda = 0.0;
  s.gamma = 0.0;
  const LossGradients g = loss_gradients(ImageSlice(img), f, {bu, bd}, RigidParams{}, s);
  EXPECT_LE(g.image.matrix().cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE(g.field.matrix().cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(g.loss.total, 0.0);
}

class GradientCheck : public ::testing::TestWithParam<MultiresMode> {};

TEST_P(GradientCheck, RandomInstancesMatchCentralDifferences) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto inst = testing_support::random_instance(12, 12, seed, GetParam());
    const auto report = testing_support::check_gradients(inst, 1e-4);
    EXPECT_LE(report.max_relative_error, 1e-4) << "seed " << seed << " worst " << report.worst;
    EXPECT_GE(report.checked, 270) << report.skipped << " skipped";
  }
}

INSTANTIATE_TEST_SUITE_P(Modes, GradientCheck,
                         ::testing::Values(MultiresMode::None, MultiresMode::Multiblur,
                                           MultiresMode::Multiscale, MultiresMode::Both),
                         [](const auto& info) { return std::string(to_string(info.param)); });

}  // namespace
}  // namespace epicorr
