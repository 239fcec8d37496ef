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

// Joint estimation of the undistorted image, the displacement field and the
// blip-down rigid motion from one reversed-PE pair.
//
// The field is optimized per pixel, coarse to fine over an image pyramid.
// Each outer iteration at a pyramid level:
//
//   1. solves for the image in closed form (per-row ridge least squares),
//   2. takes `field_steps_per_solve` momentum descent steps on the field,
//      each guarded by a backtracking line search,
//   3. takes one guarded gradient step on the rigid parameters.
//
// The recorded objective is therefore non-increasing within a level. The
// configured multiresolution loss is used at the finest pyramid level only.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "epicorr/image.hpp"
#include "epicorr/losses.hpp"
#include "epicorr/multires.hpp"
#include "epicorr/rigid.hpp"

namespace epicorr {

struct OptimizerConfig {
  std::vector<int> pyramid_factors{4, 2, 1};
  int iterations = 200;  // field steps per pyramid level
  int field_steps_per_solve = 10;

  // Field step length is expressed as the largest per-pixel move, in pixels
  // of the current pyramid level.
  double initial_step = 0.5;
  double max_step = 2.0;
  double step_growth = 1.25;
  double step_shrink = 0.5;
  int max_backtracks = 12;
  double momentum = 0.9;
  // Sigma of the Gaussian smoothing S applied as S^T S to the field gradient
  // (level pixels); 0 disables it.
  double gradient_smoothing = 2.0;

  // Tikhonov epsilon of the image solve, as a multiple of the squared mean
  // measured intensity.
  double image_epsilon = 1e-3;
  // Stop a level when the relative change of the objective between outer
  // iterations drops below this.
  double tolerance = 1e-6;

  bool rigid_enabled = true;
  bool freeze_rigid_after_coarsest = false;
  double rigid_initial_step = 0.25;  // pixels; rotation is scaled by the image half-diagonal

  double lambda = 1e-5;
  double gamma = 0.01;
  double tau = 32.0;
  MultiresConfig multires;

  void validate() const;
  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

struct LevelTrace {
  int factor = 1;
  std::vector<double> loss;  // objective after each outer iteration; loss[0] is the start
  bool converged = false;
};

struct CorrectionResult {
  ImageSlice image;
  DisplacementField field;
  RigidParams rigid;
  std::vector<LevelTrace> trace;
  bool converged = false;
};

/// NumericalFailure raised by estimate_slice; carries the trace so far.
class OptimizationFailure : public NumericalFailure {
 public:
  OptimizationFailure(const std::string& what, std::vector<LevelTrace> trace)
      : NumericalFailure(what), trace_(std::move(trace)) {}
  const std::vector<LevelTrace>& trace() const { return trace_; }

 private:
  std::vector<LevelTrace> trace_;
};

/// Per FE row, minimizes |K_BU x - f_BU|^2 + |K_BD x - R^-1 f_BD|^2 + eps |x|^2
/// through a Cholesky solve of the normal equations. R^-1 f_BD resamples the
/// measured blip-down slice with the inverse rigid transform, which ignores
/// the interpolation blur of the forward model's rigid step.
ImageSlice solve_image(const DisplacementField& field, const ReversedPePair& pair,
                       const RigidParams& rigid, double epsilon, bool project_nonnegative = true);

struct FieldStepState {
  Matrix moment;  // first-moment estimate of the gradient
  int steps = 0;
  double beta = 0.9;
};

/// Bias-corrected first moment after folding in `gradient`; does not modify `state`.
Matrix momentum_direction(const FieldStepState& state, const DisplacementField& gradient);

/// field - step * m_hat with m = beta m + (1 - beta) g and the usual bias
/// correction m_hat = m / (1 - beta^t); values are clamped to
/// [-(tau + 8), tau + 8].
DisplacementField field_step(const DisplacementField& field, const DisplacementField& gradient,
                             FieldStepState& state, double step, double tau);

CorrectionResult estimate_slice(const ReversedPePair& pair, const OptimizerConfig& config);

/// Slices are independent; results do not depend on `threads`.
std::vector<CorrectionResult> estimate_volume(std::span<const ReversedPePair> pairs,
                                              const OptimizerConfig& config,
                                              unsigned threads = 1);

}  // namespace epicorr
