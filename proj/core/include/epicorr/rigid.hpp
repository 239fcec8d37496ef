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

// In-plane rigid transform applied to the blip-down image.
//
// A pixel at p = (row, col) of the output samples the input at
//
//     q = Rot(-r) (p - c - s) + c,     c = ((n_FE - 1) / 2, (n_PE - 1) / 2)
//
// i.e. the input is rotated by r about the centre c and then translated by
// s = (s_x, s_y). Sampling is bilinear; pixels outside the grid read as 0.

#pragma once

#include <array>

#include "epicorr/image.hpp"

namespace epicorr {

struct RigidParams {
  double shift_fe = 0.0;  // s_x, pixels along rows
  double shift_pe = 0.0;  // s_y, pixels along columns
  double rotation = 0.0;  // r, radians

  std::array<double, 3> as_array() const { return {shift_fe, shift_pe, rotation}; }
  static RigidParams from_array(const std::array<double, 3>& a) { return {a[0], a[1], a[2]}; }
  bool is_identity() const { return shift_fe == 0.0 && shift_pe == 0.0 && rotation == 0.0; }
  void validate() const;

  friend bool operator==(const RigidParams&, const RigidParams&) = default;
};

/// Shifts divided by `factor`, rotation unchanged: the same motion on a grid
/// `factor` times coarser.
RigidParams scaled_for_grid(const RigidParams& params, double factor);

/// The transform that undoes `params` (rotation -r, shift -Rot(-r) s).
RigidParams inverse(const RigidParams& params);

ImageSlice apply_rigid(const ImageSlice& slice, const RigidParams& params);

/// Transpose of apply_rigid as a linear map of the slice.
ImageSlice apply_rigid_adjoint(const ImageSlice& upstream, const RigidParams& params);

/// d/dparams of <upstream, apply_rigid(slice, params)>, analytic through
/// the bilinear weights. Undefined (one-sided) exactly on cell boundaries.
std::array<double, 3> apply_rigid_param_vjp(const ImageSlice& slice, const RigidParams& params,
                                            const ImageSlice& upstream);

/// Finite-difference steps used by rigid_gradient.
struct RigidFdSteps {
  double shift = 1e-3;
  double rotation = 1e-4;
};

/// Blip-down alignment objective:
/// 1/(2 N) sum (apply_rigid(moving) - measured)^2 + gamma (s_x^2 + s_y^2 + r^2).
double rigid_alignment_loss(const ImageSlice& measured, const ImageSlice& moving,
                            const RigidParams& params, double gamma);

/// Central finite-difference gradient of rigid_alignment_loss.
std::array<double, 3> rigid_gradient(const ImageSlice& measured, const ImageSlice& moving,
                                     const RigidParams& params, double gamma,
                                     const RigidFdSteps& steps = {});

}  // namespace epicorr
