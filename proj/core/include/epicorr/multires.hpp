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

#pragma once

#include <string_view>
#include <vector>

#include "epicorr/image.hpp"

namespace epicorr {

enum class MultiresMode { None, Multiblur, Multiscale, Both };

std::string_view to_string(MultiresMode mode);
MultiresMode parse_multires_mode(std::string_view text);

/// Which views of the full-resolution variables enter the loss.
///
/// Level order is always: full resolution, then the downsampled levels
/// (Multiscale / Both), then the blurred levels (Multiblur / Both).
/// An empty `weights` selects the defaults for the mode.
struct MultiresConfig {
  MultiresMode mode = MultiresMode::Multiblur;
  std::vector<double> blur_sigmas{0.5, 1.5, 2.5};
  std::vector<int> downsample_factors{2, 4};
  std::vector<double> weights;

  std::size_t level_count() const;
  /// `weights` if set, otherwise the per-mode defaults.
  std::vector<double> resolved_weights() const;
  void validate() const;

  friend bool operator==(const MultiresConfig&, const MultiresConfig&) = default;
};

std::vector<double> default_level_weights(MultiresMode mode);

enum class LevelKind { Full, Downsampled, Blurred };

struct LevelSpec {
  LevelKind kind = LevelKind::Full;
  double sigma = 0.0;  // Blurred
  int factor = 1;      // Downsampled
  double weight = 1.0;
};

std::vector<LevelSpec> level_specs(const MultiresConfig& config);

/// One view of (image, field, measured pair) at a multiresolution level.
struct Level {
  LevelSpec spec;
  ImageSlice image;
  DisplacementField field;
  ReversedPePair measured;
};

/// Half-width of the sampled Gaussian: ceil(4 sigma) taps on each side,
/// 2 * ceil(4 sigma) + 1 taps in total.
int gaussian_radius(double sigma);
/// Normalized sampled Gaussian of length 2 * gaussian_radius(sigma) + 1.
std::vector<double> gaussian_taps(double sigma);

/// Separable Gaussian blur with replicate padding.
Matrix gaussian_blur(const Matrix& values, double sigma);
ImageSlice gaussian_blur(const ImageSlice& slice, double sigma);
/// Exact transpose of gaussian_blur (replicate padding makes it differ
/// from the blur itself near the edges).
Matrix gaussian_blur_adjoint(const Matrix& values, double sigma);

/// Anti-alias blur (sigma = factor / 2) followed by f x f block averaging.
/// Coarse pixel (i, j) is centred on fine coordinate (i f + (f-1)/2, j f + (f-1)/2).
Matrix downsample(const Matrix& values, int factor);
ImageSlice downsample(const ImageSlice& slice, int factor);
Matrix downsample_adjoint(const Matrix& values, int factor, Index fine_rows, Index fine_cols);

/// Bilinear upsampling consistent with the downsample grid alignment;
/// coordinates beyond the outermost coarse centres are clamped.
Matrix upsample_bilinear(const Matrix& values, int factor);

/// Builds the per-level views. Level 0 is the unmodified input. Downsampled
/// fields are divided by the factor so they stay in pixels of their grid.
std::vector<Level> make_levels(const ImageSlice& image, const DisplacementField& field,
                               const ReversedPePair& pair, const MultiresConfig& config);

/// Transforms applied to the variables (image and field) for one level.
Matrix level_image_view(const Matrix& image, const LevelSpec& spec);
Matrix level_field_view(const Matrix& field, const LevelSpec& spec);
/// Adjoints of the two views above, mapping level gradients back to full resolution.
Matrix level_image_adjoint(const Matrix& grad, const LevelSpec& spec, Index rows, Index cols);
Matrix level_field_adjoint(const Matrix& grad, const LevelSpec& spec, Index rows, Index cols);

}  // namespace epicorr
