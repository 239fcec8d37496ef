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

// Per-row distortion operator along the phase-encode axis.
//
// For FE row i, source pixel j (0-based) is deposited at
//
//     dest(j) = clamp(j + s * field(i, j), 0, n_PE - 1),   s = +1 (BU), -1 (BD)
//
// and the operator entry is K(k, j) = kernel(dest(j) - k). This is the
// 1-based grid construction shifted by one on both axes, so differences
// and therefore K are unchanged. The distorted row is K * row; unwarping
// applies K^T.

#pragma once

#include <span>

#include "epicorr/image.hpp"

namespace epicorr {

enum class KernelKind { Sinc };

/// Interpolation kernel used to build K. `support` truncates the kernel to
/// |xi| <= support; 0 keeps the full row.
struct InterpKernel {
  KernelKind kind = KernelKind::Sinc;
  double support = 0.0;

  double value(double xi) const;
  double derivative(double xi) const;
};

/// sin(pi x) / (pi x), with sinc(0) = 1.
double sinc(double x);
/// d/dx sinc(x).
double sinc_derivative(double x);

/// Dense n_PE x n_PE operator for one FE line.
Matrix build_k_row(std::span<const double> field_row, PePolarity polarity,
                   const InterpKernel& kernel = {});

/// Row-wise K * image.
ImageSlice forward_distort(const ImageSlice& image, const DisplacementField& field,
                           PePolarity polarity, const InterpKernel& kernel = {});

/// Row-wise K^T * image, optionally pre-weighted by clamp(1 / W, 0, 1).
ImageSlice unwarp(const ImageSlice& image, const DisplacementField& field, PePolarity polarity,
                  bool compensate, const InterpKernel& kernel = {});

/// Row-wise K * 1 (the pileup map W).
ImageSlice density_map(const DisplacementField& field, PePolarity polarity,
                       const InterpKernel& kernel = {});

/// Vector-Jacobian product of forward_distort with respect to the field:
/// out(i, j) = sum_k upstream(i, k) * d[K_i image_i](k) / d field(i, j).
/// Clipped destinations have zero derivative.
DisplacementField forward_distort_field_vjp(const ImageSlice& image,
                                            const DisplacementField& field,
                                            PePolarity polarity, const ImageSlice& upstream,
                                            const InterpKernel& kernel = {});

/// True where the destination of a source pixel was clipped to the FOV edge.
Mask clipped_destinations(const DisplacementField& field, PePolarity polarity);

}  // namespace epicorr
