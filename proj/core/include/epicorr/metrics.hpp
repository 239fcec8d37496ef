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

#include <optional>

#include "epicorr/image.hpp"

namespace epicorr {

/// 20 log10(peak / RMSE) with peak = max of the reference over the evaluated
/// region. Returns +infinity when the residual is exactly zero.
double psnr(const Matrix& reference, const Matrix& test, const Mask* mask = nullptr);

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean local SSIM over window positions that fit inside the image; with a
/// mask, only windows centred on masked pixels are averaged. The dynamic
/// range is max - min of the reference (1 if the reference is constant).
double ssim(const Matrix& reference, const Matrix& test, const Mask* mask = nullptr,
            const SsimParams& params = {});

/// Local SSIM map; entries whose window does not fit are NaN.
Matrix ssim_map(const Matrix& reference, const Matrix& test, const SsimParams& params = {});

struct OtsuMaskParams {
  int median_radius = 1;  // 3x3
  int bins = 256;
  Index min_component = 16;
};

/// Otsu threshold (upper edge of the optimal bin) over `bins` bins spanning
/// [min, max] of the values.
double otsu_threshold(const Matrix& values, int bins = 256);

/// Median filter, Otsu threshold, then removal of 8-connected components
/// smaller than min_component pixels.
Mask mask_median_otsu(const Matrix& reference, const OtsuMaskParams& params = {});

/// Root-mean-square difference over the masked pixels (all pixels if null).
double masked_rmse(const Matrix& a, const Matrix& b, const Mask* mask = nullptr);

/// Mean absolute value over the masked pixels (all pixels if null).
double masked_mean_abs(const Matrix& a, const Mask* mask = nullptr);

}  // namespace epicorr
