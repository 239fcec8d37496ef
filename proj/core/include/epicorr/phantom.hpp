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

// Synthetic ground truth: ellipse-composite anatomy, Gaussian-bump fields,
// and simulated reversed-PE pairs.

#pragma once

#include <cstdint>
#include <vector>

#include "epicorr/image.hpp"
#include "epicorr/rigid.hpp"

namespace epicorr {

struct GaussianBump {
  double row = 0.0;
  double col = 0.0;
  double amplitude = 0.0;  // pixels
  double width = 1.0;      // standard deviation, pixels

  friend bool operator==(const GaussianBump&, const GaussianBump&) = default;
};

struct PhantomSpec {
  Index n_fe = 168;
  Index n_pe = 144;

  int ellipse_count = 7;
  double intensity_min = 0.15;
  double intensity_max = 0.6;
  double edge_width = 1.0;         // pixels of the soft boundary of inner ellipses
  double texture_amplitude = 0.15;  // relative smooth modulation inside ellipses

  int bump_count = 3;
  double amplitude_bound = 10.0;  // pixels; the generated field's sup-norm
  double width_min = 14.0;
  double width_max = 26.0;
  /// Used instead of random bumps when non-empty (then only rescaled if
  /// their sum exceeds amplitude_bound).
  std::vector<GaussianBump> bumps;

  RigidParams rigid;
  double noise_sd = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
  friend bool operator==(const PhantomSpec&, const PhantomSpec&) = default;
};

/// Intensities in [0, 1]; deterministic in spec.seed.
ImageSlice make_phantom(const PhantomSpec& spec);

/// Sum of Gaussian bumps scaled so that max |field| = amplitude_bound.
DisplacementField make_field(const PhantomSpec& spec);

struct SimulatedPair {
  ReversedPePair pair;
  ImageSlice image;
  DisplacementField field;
  RigidParams rigid;
  double noise_sd = 0.0;
  std::uint64_t seed = 0;
};

/// BU = K_BU image + noise, BD = apply_rigid(K_BD image) + noise.
SimulatedPair simulate_pair(const ImageSlice& image, const DisplacementField& field,
                            const RigidParams& rigid, double noise_sd, std::uint64_t seed);

/// make_phantom + make_field + simulate_pair for one spec.
SimulatedPair simulate_phantom(const PhantomSpec& spec);

}  // namespace epicorr
