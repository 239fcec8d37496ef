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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace epicorr {
namespace {

bool is_power_of_two(int f) { return f >= 1 && (f & (f - 1)) == 0; }

// y[i] = sum_t w[t] x[clamp(i + t - r)] along one axis.
Matrix convolve_axis(const Matrix& x, const std::vector<double>& taps, int axis) {
  const auto r = static_cast<Index>(taps.size() / 2);
  Matrix y = Matrix::Zero(x.rows(), x.cols());
  const Index n = axis == 0 ? x.rows() : x.cols();
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      const Index c = axis == 0 ? i : j;
      double acc = 0.0;
      for (Index t = -r; t <= r; ++t) {
        const Index s = std::clamp<Index>(c + t, 0, n - 1);
        acc += taps[static_cast<std::size_t>(t + r)] * (axis == 0 ? x(s, j) : x(i, s));
      }
      y(i, j) = acc;
    }
  }
  return y;
}

Matrix convolve_axis_adjoint(const Matrix& y, const std::vector<double>& taps, int axis) {
  const auto r = static_cast<Index>(taps.size() / 2);
  Matrix x = Matrix::Zero(y.rows(), y.cols());
  const Index n = axis == 0 ? y.rows() : y.cols();
  for (Index i = 0; i < y.rows(); ++i) {
    for (Index j = 0; j < y.cols(); ++j) {
      const Index c = axis == 0 ? i : j;
      const double v = y(i, j);
      for (Index t = -r; t <= r; ++t) {
        const Index s = std::clamp<Index>(c + t, 0, n - 1);
        const double w = taps[static_cast<std::size_t>(t + r)] * v;
        if (axis == 0) {
          x(s, j) += w;
        } else {
          x(i, s) += w;
        }
      }
    }
  }
  return x;
}

void require_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw InvalidInput("gaussian_blur: sigma must be positive, got " + std::to_string(sigma));
  }
}

void require_factor(int factor, Index rows, Index cols) {
  if (!is_power_of_two(factor)) {
    throw InvalidInput("downsample: factor must be a power of two, got " + std::to_string(factor));
  }
  if (rows % factor != 0 || cols % factor != 0) {
    throw InvalidInput("downsample: " + std::to_string(rows) + "x" + std::to_string(cols) +
                       " is not divisible by " + std::to_string(factor));
  }
}

}  // namespace

std::string_view to_string(MultiresMode mode) {
  switch (mode) {
    case MultiresMode::None: return "none";
    case MultiresMode::Multiblur: return "multiblur";
    case MultiresMode::Multiscale: return "multiscale";
    case MultiresMode::Both: return "both";
  }
  return "none";
}

MultiresMode parse_multires_mode(std::string_view text) {
  if (text == "none") return MultiresMode::None;
  if (text == "multiblur") return MultiresMode::Multiblur;
  if (text == "multiscale") return MultiresMode::Multiscale;
  if (text == "both") return MultiresMode::Both;
  throw InvalidInput("unknown multiresolution mode '" + std::string(text) + "'");
}

std::vector<double> default_level_weights(MultiresMode mode) {
  switch (mode) {
    case MultiresMode::None: return {1.0};
    case MultiresMode::Multiblur: return {0.4, 0.3, 0.2, 0.1};
    case MultiresMode::Multiscale: return {0.6, 0.3, 0.1};
    case MultiresMode::Both: return {0.5, 0.15, 0.05, 0.15, 0.1, 0.05};
  }
  return {1.0};
}

std::size_t MultiresConfig::level_count() const {
  std::size_t n = 1;
  if (mode == MultiresMode::Multiscale || mode == MultiresMode::Both) n += downsample_factors.size();
  if (mode == MultiresMode::Multiblur || mode == MultiresMode::Both) n += blur_sigmas.size();
  return n;
}

std::vector<double> MultiresConfig::resolved_weights() const {
  if (!weights.empty()) return weights;
  auto w = default_level_weights(mode);
  // Defaults only cover the default sigma / factor lists.
  if (w.size() != level_count()) w.assign(level_count(), 1.0 / static_cast<double>(level_count()));
  return w;
}

void MultiresConfig::validate() const {
  for (double s : blur_sigmas) {
    if (!(s > 0.0)) throw InvalidInput("multires: blur sigmas must be positive");
  }
  for (int f : downsample_factors) {
    if (f < 2 || !is_power_of_two(f)) {
      throw InvalidInput("multires: downsample factors must be powers of two >= 2");
    }
  }
  const auto w = resolved_weights();
  if (w.size() != level_count()) {
    throw InvalidInput("multires: " + std::to_string(w.size()) + " weights for " +
                       std::to_string(level_count()) + " levels");
  }
  double total = 0.0;
  for (double v : w) {
    if (!(v >= 0.0)) throw InvalidInput("multires: level weights must be non-negative");
    total += v;
  }
  if (!(total > 0.0)) throw InvalidInput("multires: level weights must not all be zero");
}

std::vector<LevelSpec> level_specs(const MultiresConfig& config) {
  config.validate();
  const auto w = config.resolved_weights();
  std::vector<LevelSpec> specs;
  specs.push_back({LevelKind::Full, 0.0, 1, w[0]});
  if (config.mode == MultiresMode::Multiscale || config.mode == MultiresMode::Both) {
    for (int f : config.downsample_factors) specs.push_back({LevelKind::Downsampled, 0.0, f, 0.0});
  }
  if (config.mode == MultiresMode::Multiblur || config.mode == MultiresMode::Both) {
    for (double s : config.blur_sigmas) specs.push_back({LevelKind::Blurred, s, 1, 0.0});
  }
  for (std::size_t m = 0; m < specs.size(); ++m) specs[m].weight = w[m];
  return specs;
}

int gaussian_radius(double sigma) {
  require_sigma(sigma);
  return static_cast<int>(std::ceil(4.0 * sigma));
}

std::vector<double> gaussian_taps(double sigma) {
  const int r = gaussian_radius(sigma);
  std::vector<double> taps(static_cast<std::size_t>(2 * r + 1));
  for (int t = -r; t <= r; ++t) {
    taps[static_cast<std::size_t>(t + r)] = std::exp(-0.5 * t * t / (sigma * sigma));
  }
  const double sum = std::accumulate(taps.begin(), taps.end(), 0.0);
  for (double& v : taps) v /= sum;
  return taps;
}

Matrix gaussian_blur(const Matrix& values, double sigma) {
  const auto taps = gaussian_taps(sigma);
  return convolve_axis(convolve_axis(values, taps, 1), taps, 0);
}

ImageSlice gaussian_blur(const ImageSlice& slice, double sigma) {
  return ImageSlice(gaussian_blur(slice.matrix(), sigma));
}

Matrix gaussian_blur_adjoint(const Matrix& values, double sigma) {
  const auto taps = gaussian_taps(sigma);
  return convolve_axis_adjoint(convolve_axis_adjoint(values, taps, 0), taps, 1);
}

Matrix downsample(const Matrix& values, int factor) {
  require_factor(factor, values.rows(), values.cols());
  if (factor == 1) return values;
  const Matrix blurred = gaussian_blur(values, 0.5 * factor);
  const Index rows = values.rows() / factor;
  const Index cols = values.cols() / factor;
  const double inv_area = 1.0 / static_cast<double>(factor * factor);
  Matrix out = Matrix::Zero(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      out(i, j) = blurred.block(i * factor, j * factor, factor, factor).sum() * inv_area;
    }
  }
  return out;
}

ImageSlice downsample(const ImageSlice& slice, int factor) {
  return ImageSlice(downsample(slice.matrix(), factor));
}

Matrix downsample_adjoint(const Matrix& values, int factor, Index fine_rows, Index fine_cols) {
  require_factor(factor, fine_rows, fine_cols);
  if (values.rows() * factor != fine_rows || values.cols() * factor != fine_cols) {
    throw InvalidInput("downsample_adjoint: coarse/fine shape mismatch");
  }
  if (factor == 1) return values;
  const double inv_area = 1.0 / static_cast<double>(factor * factor);
  Matrix spread(fine_rows, fine_cols);
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) {
      spread.block(i * factor, j * factor, factor, factor).setConstant(values(i, j) * inv_area);
    }
  }
  return gaussian_blur_adjoint(spread, 0.5 * factor);
}

Matrix upsample_bilinear(const Matrix& values, int factor) {
  if (!is_power_of_two(factor)) throw InvalidInput("upsample: factor must be a power of two");
  if (factor == 1) return values;
  const Index rows = values.rows() * factor;
  const Index cols = values.cols() * factor;
  const double offset = 0.5 * (factor - 1);
  auto coord = [&](Index x, Index n) {
    const double u = std::clamp((static_cast<double>(x) - offset) / factor, 0.0,
                                static_cast<double>(n - 1));
    const auto lo = std::min<Index>(static_cast<Index>(std::floor(u)), std::max<Index>(n - 2, 0));
    return std::pair<Index, double>{lo, u - static_cast<double>(lo)};
  };
  Matrix out(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto [i0, a] = coord(i, values.rows());
    const Index i1 = std::min<Index>(i0 + 1, values.rows() - 1);
    for (Index j = 0; j < cols; ++j) {
      const auto [j0, b] = coord(j, values.cols());
      const Index j1 = std::min<Index>(j0 + 1, values.cols() - 1);
      out(i, j) = (1 - a) * ((1 - b) * values(i0, j0) + b * values(i0, j1)) +
                  a * ((1 - b) * values(i1, j0) + b * values(i1, j1));
    }
  }
  return out;
}

Matrix level_image_view(const Matrix& image, const LevelSpec& spec) {
  switch (spec.kind) {
    case LevelKind::Full: return image;
    case LevelKind::Downsampled: return downsample(image, spec.factor);
    case LevelKind::Blurred: return gaussian_blur(image, spec.sigma);
  }
  return image;
}

Matrix level_field_view(const Matrix& field, const LevelSpec& spec) {
  if (spec.kind == LevelKind::Downsampled) return downsample(field, spec.factor) / spec.factor;
  return level_image_view(field, spec);
}

Matrix level_image_adjoint(const Matrix& grad, const LevelSpec& spec, Index rows, Index cols) {
  switch (spec.kind) {
    case LevelKind::Full: return grad;
    case LevelKind::Downsampled: return downsample_adjoint(grad, spec.factor, rows, cols);
    case LevelKind::Blurred: return gaussian_blur_adjoint(grad, spec.sigma);
  }
  return grad;
}

Matrix level_field_adjoint(const Matrix& grad, const LevelSpec& spec, Index rows, Index cols) {
  if (spec.kind == LevelKind::Downsampled) {
    return downsample_adjoint(grad, spec.factor, rows, cols) / spec.factor;
  }
  return level_image_adjoint(grad, spec, rows, cols);
}

std::vector<Level> make_levels(const ImageSlice& image, const DisplacementField& field,
                               const ReversedPePair& pair, const MultiresConfig& config) {
  require_same_shape(image, field, "make_levels");
  require_same_shape(image, pair.blip_up, "make_levels");
  require_pair_shape(pair, "make_levels");
  std::vector<Level> levels;
  for (const auto& spec : level_specs(config)) {
    if (spec.kind == LevelKind::Full) {
      levels.push_back({spec, image, field, pair});
      continue;
    }
    levels.push_back({spec, ImageSlice(level_image_view(image.matrix(), spec)),
                      DisplacementField(level_field_view(field.matrix(), spec)),
                      ReversedPePair{ImageSlice(level_image_view(pair.blip_up.matrix(), spec)),
                                     ImageSlice(level_image_view(pair.blip_down.matrix(), spec))}});
  }
  return levels;
}

}  // namespace epicorr
