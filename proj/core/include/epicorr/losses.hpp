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

// Forward-distortion objective:
//
//   L = sum_m w_m [ MSE_m + lambda_m (BE_m + 1e3 * valley_m) ] + gamma * rigid
//
// MSE_m compares the measured pair with the forward-distorted estimate at
// level m; BE and valley act on the level's field; rigid = s_x^2 + s_y^2 + r^2.

#pragma once

#include <array>
#include <span>
#include <vector>

#include "epicorr/image.hpp"
#include "epicorr/kmatrix.hpp"
#include "epicorr/multires.hpp"
#include "epicorr/rigid.hpp"

namespace epicorr {

/// Per-level weights, fully resolved.
struct LossWeights {
  std::vector<double> omega;
  std::vector<double> lambda;
  std::vector<double> tau;
  double gamma = 0.01;
  double valley_scale = 1e3;

  /// lambda = 1e-5, omega = (0.4, 0.3, 0.2, 0.1) for (full, S, M, H),
  /// gamma = 0.01, tau = 32.
  static LossWeights fdnet_defaults();
  /// One lambda / tau for every level; tau is divided by the level's
  /// downsample factor.
  static LossWeights for_levels(std::span<const LevelSpec> specs, double lambda, double gamma,
                                double tau);

  void validate(std::size_t level_count) const;
};

struct LossBreakdown {
  std::vector<double> mse;
  std::vector<double> bending;
  std::vector<double> valley;
  double rigid = 0.0;
  double total = 0.0;

  /// Recombines the parts with the given weights.
  double recombine(const LossWeights& w) const;
};

/// The inputs of one level's loss terms.
struct LevelTerms {
  const ReversedPePair* measured = nullptr;
  const ReversedPePair* distorted = nullptr;
  const DisplacementField* field = nullptr;
};

double mse_loss(const ReversedPePair& measured, const ReversedPePair& distorted);

/// Sum of squared second differences (xx, yy, xy, yx). Each term is
/// evaluated only where its central stencil fits inside the grid.
double bending_energy(const Matrix& field);
double bending_energy(const DisplacementField& field);
Matrix bending_energy_gradient(const Matrix& field);

/// sum max(|field| - tau, 0)
double valley_loss(const Matrix& field, double tau);
double valley_loss(const DisplacementField& field, double tau);
/// Subgradient; 0 at |field| = tau.
Matrix valley_loss_gradient(const Matrix& field, double tau);

double rigid_loss(const RigidParams& params);

LossBreakdown total_loss(std::span<const LevelTerms> levels, const RigidParams& rigid,
                         const LossWeights& weights);

/// Everything needed to evaluate the objective for a given measured pair.
struct ObjectiveSettings {
  MultiresConfig multires;
  double lambda = 1e-5;
  double gamma = 0.01;
  double tau = 32.0;
  InterpKernel kernel;
  /// Rigid shifts are stored in pixels of a grid this many times finer
  /// than the one being evaluated (pyramid levels).
  double rigid_grid_factor = 1.0;
  bool rigid_enabled = true;
};

struct LossGradients {
  ImageSlice image;
  DisplacementField field;
  std::array<double, 3> rigid{0.0, 0.0, 0.0};
  LossBreakdown loss;
};

/// The objective bound to one measured pair, with the measured views of
/// every level precomputed.
class Objective {
 public:
  Objective(ReversedPePair measured, ObjectiveSettings settings);

  LossBreakdown evaluate(const ImageSlice& image, const DisplacementField& field,
                         const RigidParams& rigid) const;
  LossGradients gradients(const ImageSlice& image, const DisplacementField& field,
                          const RigidParams& rigid) const;

  const ObjectiveSettings& settings() const { return settings_; }
  const LossWeights& weights() const { return weights_; }
  const std::vector<LevelSpec>& specs() const { return specs_; }
  const ReversedPePair& measured() const { return measured_; }

 private:
  ReversedPePair measured_;
  ObjectiveSettings settings_;
  std::vector<LevelSpec> specs_;
  LossWeights weights_;
  std::vector<ReversedPePair> measured_levels_;
};

/// Gradients of the full objective with respect to image, field and rigid
/// parameters.
LossGradients loss_gradients(const ImageSlice& image, const DisplacementField& field,
                             const ReversedPePair& pair, const RigidParams& rigid,
                             const ObjectiveSettings& settings);

}  // namespace epicorr
