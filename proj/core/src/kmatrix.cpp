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

#include "epicorr/kmatrix.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace epicorr {
namespace {

constexpr double kPi = std::numbers::pi;
// Below this |xi| the closed-form sinc derivative loses digits to
// cancellation; switch to its Taylor series.
constexpr double kSeriesCutoff = 1e-3;

// Where one source pixel lands, plus the trig values needed to evaluate the
// kernel against every integer grid position with one sin/cos per column:
// sin(pi (dest - k)) = (-1)^(nearest - k) sin(pi frac).
struct Placement {
  double dest = 0.0;
  double frac = 0.0;
  double sin_frac = 0.0;
  double cos_frac = 1.0;
  Index nearest = 0;
  bool clipped = false;
};

Placement place(double field_value, Index j, Index n, PePolarity polarity) {
  const double shift = polarity == PePolarity::BlipUp ? field_value : -field_value;
  const double raw = static_cast<double>(j) + shift;
  const double hi = static_cast<double>(n - 1);
  Placement p;
  p.clipped = raw < 0.0 || raw > hi;
  p.dest = std::clamp(raw, 0.0, hi);
  p.nearest = static_cast<Index>(std::nearbyint(p.dest));
  p.frac = p.dest - static_cast<double>(p.nearest);
  if (p.frac != 0.0) {
    p.sin_frac = std::sin(kPi * p.frac);
    p.cos_frac = std::cos(kPi * p.frac);
  }
  return p;
}

// Row range [lo, hi) of K that can be nonzero for this column.
std::pair<Index, Index> support_range(const Placement& p, Index n, const InterpKernel& kernel) {
  if (p.frac == 0.0) return {p.nearest, p.nearest + 1};
  if (kernel.support <= 0.0) return {0, n};
  const auto lo = static_cast<Index>(std::ceil(p.dest - kernel.support));
  const auto hi = static_cast<Index>(std::floor(p.dest + kernel.support)) + 1;
  return {std::max<Index>(lo, 0), std::min<Index>(hi, n)};
}

// Grid positions k and signs (-1)^k as doubles, so the inner loops are
// branch-free and vectorize: (-1)^(nearest - k) = sign[nearest] * sign[k].
struct GridTables {
  explicit GridTables(Index n) : pos(static_cast<std::size_t>(n)), sign(static_cast<std::size_t>(n)) {
    for (Index k = 0; k < n; ++k) {
      pos[static_cast<std::size_t>(k)] = static_cast<double>(k);
      sign[static_cast<std::size_t>(k)] = (k & 1) ? -1.0 : 1.0;
    }
  }
  std::vector<double> pos;
  std::vector<double> sign;
};

// Row j of kt holds column j of K, i.e. kt = K^T.
void fill_kernel(const std::vector<Placement>& placements, const GridTables& grid,
                 const InterpKernel& kernel, Matrix& kt) {
  const auto n = static_cast<Index>(placements.size());
  kt.setZero(n, n);
  for (Index j = 0; j < n; ++j) {
    const auto& p = placements[static_cast<std::size_t>(j)];
    double* row = kt.row(j).data();
    if (p.frac == 0.0) {
      row[p.nearest] = 1.0;
      continue;
    }
    const auto [lo, hi] = support_range(p, n, kernel);
    const double c = grid.sign[static_cast<std::size_t>(p.nearest)] * p.sin_frac / kPi;
    const double d = p.dest;
    const double* __restrict a = grid.sign.data();
    const double* __restrict x = grid.pos.data();
    double* __restrict r = row;
    for (Index k = lo; k < hi; ++k) r[k] = c * a[k] / (d - x[k]);
  }
}

// Row j of dt holds d K(k, j) / d dest for every k; zero for clipped columns.
void fill_kernel_derivative(const std::vector<Placement>& placements,
                            const GridTables& grid, const InterpKernel& kernel,
                            Matrix& dt) {
  const auto n = static_cast<Index>(placements.size());
  dt.setZero(n, n);
  for (Index j = 0; j < n; ++j) {
    const auto& p = placements[static_cast<std::size_t>(j)];
    if (p.clipped) continue;
    Index lo = 0;
    Index hi = n;
    if (kernel.support > 0.0) {
      lo = std::max<Index>(static_cast<Index>(std::ceil(p.dest - kernel.support)), 0);
      hi = std::min<Index>(static_cast<Index>(std::floor(p.dest + kernel.support)) + 1, n);
    }
    double* row = dt.row(j).data();
    const double sign = grid.sign[static_cast<std::size_t>(p.nearest)];
    const double cf = p.cos_frac;
    const double sf = p.sin_frac / kPi;
    const double d = p.dest;
    const double* __restrict a = grid.sign.data();
    const double* __restrict x = grid.pos.data();
    double* __restrict r = row;
    for (Index k = lo; k < hi; ++k) {
      const double inv = 1.0 / (d - x[k]);
      r[k] = sign * a[k] * (cf - sf * inv) * inv;
    }
    // The nearest grid point can sit arbitrarily close to the destination.
    if (p.nearest >= lo && p.nearest < hi) {
      const double xi = p.frac;
      row[p.nearest] = std::abs(xi) < kSeriesCutoff
                           ? -(kPi * kPi / 3.0) * xi + (kPi * kPi * kPi * kPi / 30.0) * xi * xi * xi
                           : (cf - sf / xi) / xi;
    }
  }
}

void require_valid_field(const DisplacementField& field, const char* what) {
  if (field.cols() < 2 || field.rows() < 1) {
    throw InvalidInput(std::string(what) + ": need n_FE >= 1 and n_PE >= 2");
  }
  if (!field.all_finite()) throw InvalidInput(std::string(what) + ": non-finite field value");
}

std::vector<Placement> place_row(std::span<const double> field_row, PePolarity polarity) {
  const auto n = static_cast<Index>(field_row.size());
  std::vector<Placement> row(field_row.size());
  for (Index j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] = place(field_row[static_cast<std::size_t>(j)], j, n, polarity);
  return row;
}

}  // namespace

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = kPi * x;
  return std::sin(px) / px;
}

double sinc_derivative(double x) {
  if (std::abs(x) < kSeriesCutoff) {
    return -(kPi * kPi / 3.0) * x + (kPi * kPi * kPi * kPi / 30.0) * x * x * x;
  }
  const double px = kPi * x;
  return std::cos(px) / x - std::sin(px) / (px * x);
}

double InterpKernel::value(double xi) const {
  if (support > 0.0 && std::abs(xi) > support) return 0.0;
  return sinc(xi);
}

double InterpKernel::derivative(double xi) const {
  if (support > 0.0 && std::abs(xi) > support) return 0.0;
  return sinc_derivative(xi);
}

Matrix build_k_row(std::span<const double> field_row, PePolarity polarity,
                   const InterpKernel& kernel) {
  const auto n = static_cast<Index>(field_row.size());
  if (n < 2) throw InvalidInput("build_k_row: need n_PE >= 2");
  for (double v : field_row) {
    if (!std::isfinite(v)) throw InvalidInput("build_k_row: non-finite field value");
  }
  Matrix kt;
  fill_kernel(place_row(field_row, polarity), GridTables(n), kernel, kt);
  return kt.transpose();
}

ImageSlice forward_distort(const ImageSlice& image, const DisplacementField& field,
                           PePolarity polarity, const InterpKernel& kernel) {
  require_same_shape(image, field, "forward_distort");
  require_valid_field(field, "forward_distort");
  const Index n = image.cols();
  const GridTables grid(n);
  Matrix kt;
  ImageSlice out(image.rows(), n, 0.0);
  for (Index i = 0; i < image.rows(); ++i) {
    fill_kernel(place_row(field.row(i), polarity), grid, kernel, kt);
    out.matrix().row(i).noalias() = image.matrix().row(i) * kt;
  }
  return out;
}

ImageSlice density_map(const DisplacementField& field, PePolarity polarity,
                       const InterpKernel& kernel) {
  require_valid_field(field, "density_map");
  return forward_distort(ImageSlice(field.rows(), field.cols(), 1.0), field, polarity, kernel);
}

ImageSlice unwarp(const ImageSlice& image, const DisplacementField& field, PePolarity polarity,
                  bool compensate, const InterpKernel& kernel) {
  require_same_shape(image, field, "unwarp");
  require_valid_field(field, "unwarp");
  const Index n = image.cols();

  ImageSlice weighted = image;
  if (compensate) {
    const ImageSlice w = density_map(field, polarity, kernel);
    for (Index i = 0; i < image.rows(); ++i) {
      for (Index k = 0; k < n; ++k) {
        weighted(i, k) *= std::clamp(1.0 / w(i, k), 0.0, 1.0);
      }
    }
  }

  const GridTables grid(n);
  Matrix kt;
  ImageSlice out(image.rows(), n, 0.0);
  for (Index i = 0; i < image.rows(); ++i) {
    fill_kernel(place_row(field.row(i), polarity), grid, kernel, kt);
    out.matrix().row(i).noalias() = (kt * weighted.matrix().row(i).transpose()).transpose();
  }
  return out;
}

DisplacementField forward_distort_field_vjp(const ImageSlice& image,
                                            const DisplacementField& field,
                                            PePolarity polarity, const ImageSlice& upstream,
                                            const InterpKernel& kernel) {
  require_same_shape(image, field, "forward_distort_field_vjp");
  require_same_shape(image, upstream, "forward_distort_field_vjp");
  require_valid_field(field, "forward_distort_field_vjp");
  const Index n = image.cols();
  const double dshift = polarity == PePolarity::BlipUp ? 1.0 : -1.0;
  const GridTables grid(n);
  Matrix dt;
  Eigen::VectorXd acc(n);
  DisplacementField out(image.rows(), n, 0.0);
  for (Index i = 0; i < image.rows(); ++i) {
    fill_kernel_derivative(place_row(field.row(i), polarity), grid, kernel, dt);
    acc.noalias() = dt * upstream.matrix().row(i).transpose();
    out.matrix().row(i) = dshift * image.matrix().row(i).cwiseProduct(acc.transpose());
  }
  return out;
}

Mask clipped_destinations(const DisplacementField& field, PePolarity polarity) {
  require_valid_field(field, "clipped_destinations");
  Mask mask(field.rows(), field.cols(), false);
  for (Index i = 0; i < field.rows(); ++i) {
    for (Index j = 0; j < field.cols(); ++j) {
      mask.set(i, j, place(field(i, j), j, field.cols(), polarity).clipped);
    }
  }
  return mask;
}

}  // namespace epicorr
