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

#include "epicorr/rigid.hpp"

#include <cmath>
#include <numbers>

namespace epicorr {
namespace {

struct Sampler {
  double cos_r;
  double sin_r;
  double cx;
  double cy;
  double sx;
  double sy;

  explicit Sampler(const ImageSlice& s, const RigidParams& p)
      : cos_r(std::cos(p.rotation)),
        sin_r(std::sin(p.rotation)),
        cx(0.5 * static_cast<double>(s.rows() - 1)),
        cy(0.5 * static_cast<double>(s.cols() - 1)),
        sx(p.shift_fe),
        sy(p.shift_pe) {}

  // Source coordinate for output pixel (i, j), plus the offset u = p - c - s.
  void source(Index i, Index j, double& qx, double& qy, double& ux, double& uy) const {
    ux = static_cast<double>(i) - cx - sx;
    uy = static_cast<double>(j) - cy - sy;
    qx = cos_r * ux + sin_r * uy + cx;
    qy = -sin_r * ux + cos_r * uy + cy;
  }
};

struct Cell {
  Index x0;
  Index y0;
  double a;
  double b;
};

Cell locate(double qx, double qy) {
  const double fx = std::floor(qx);
  const double fy = std::floor(qy);
  return {static_cast<Index>(fx), static_cast<Index>(fy), qx - fx, qy - fy};
}

double at(const ImageSlice& s, Index x, Index y) {
  if (x < 0 || y < 0 || x >= s.rows() || y >= s.cols()) return 0.0;
  return s(x, y);
}

void scatter(ImageSlice& s, Index x, Index y, double v) {
  if (x < 0 || y < 0 || x >= s.rows() || y >= s.cols()) return;
  s(x, y) += v;
}

}  // namespace

void RigidParams::validate() const {
  if (!std::isfinite(shift_fe) || !std::isfinite(shift_pe) || !std::isfinite(rotation)) {
    throw InvalidInput("rigid parameters must be finite");
  }
  if (!(std::abs(rotation) < std::numbers::pi)) {
    throw InvalidInput("rigid rotation must satisfy |r| < pi");
  }
}

RigidParams scaled_for_grid(const RigidParams& params, double factor) {
  return {params.shift_fe / factor, params.shift_pe / factor, params.rotation};
}

RigidParams inverse(const RigidParams& params) {
  const double c = std::cos(params.rotation);
  const double s = std::sin(params.rotation);
  return {-(c * params.shift_fe + s * params.shift_pe),
          -(-s * params.shift_fe + c * params.shift_pe), -params.rotation};
}

ImageSlice apply_rigid(const ImageSlice& slice, const RigidParams& params) {
  params.validate();
  if (params.is_identity()) return slice;
  const Sampler m(slice, params);
  ImageSlice out(slice.rows(), slice.cols(), 0.0);
  for (Index i = 0; i < slice.rows(); ++i) {
    for (Index j = 0; j < slice.cols(); ++j) {
      double qx, qy, ux, uy;
      m.source(i, j, qx, qy, ux, uy);
      const Cell c = locate(qx, qy);
      out(i, j) = (1 - c.a) * ((1 - c.b) * at(slice, c.x0, c.y0) + c.b * at(slice, c.x0, c.y0 + 1)) +
                  c.a * ((1 - c.b) * at(slice, c.x0 + 1, c.y0) + c.b * at(slice, c.x0 + 1, c.y0 + 1));
    }
  }
  return out;
}

ImageSlice apply_rigid_adjoint(const ImageSlice& upstream, const RigidParams& params) {
  params.validate();
  if (params.is_identity()) return upstream;
  const Sampler m(upstream, params);
  ImageSlice out(upstream.rows(), upstream.cols(), 0.0);
  for (Index i = 0; i < upstream.rows(); ++i) {
    for (Index j = 0; j < upstream.cols(); ++j) {
      const double v = upstream(i, j);
      if (v == 0.0) continue;
      double qx, qy, ux, uy;
      m.source(i, j, qx, qy, ux, uy);
      const Cell c = locate(qx, qy);
      scatter(out, c.x0, c.y0, v * (1 - c.a) * (1 - c.b));
      scatter(out, c.x0, c.y0 + 1, v * (1 - c.a) * c.b);
      scatter(out, c.x0 + 1, c.y0, v * c.a * (1 - c.b));
      scatter(out, c.x0 + 1, c.y0 + 1, v * c.a * c.b);
    }
  }
  return out;
}

std::array<double, 3> apply_rigid_param_vjp(const ImageSlice& slice, const RigidParams& params,
                                            const ImageSlice& upstream) {
  params.validate();
  require_same_shape(slice, upstream, "apply_rigid_param_vjp");
  const Sampler m(slice, params);
  std::array<double, 3> g{0.0, 0.0, 0.0};
  for (Index i = 0; i < slice.rows(); ++i) {
    for (Index j = 0; j < slice.cols(); ++j) {
      const double v = upstream(i, j);
      if (v == 0.0) continue;
      double qx, qy, ux, uy;
      m.source(i, j, qx, qy, ux, uy);
      const Cell c = locate(qx, qy);
      const double i00 = at(slice, c.x0, c.y0);
      const double i01 = at(slice, c.x0, c.y0 + 1);
      const double i10 = at(slice, c.x0 + 1, c.y0);
      const double i11 = at(slice, c.x0 + 1, c.y0 + 1);
      const double d_qx = (1 - c.b) * (i10 - i00) + c.b * (i11 - i01);
      const double d_qy = (1 - c.a) * (i01 - i00) + c.a * (i11 - i10);
      g[0] += v * (d_qx * -m.cos_r + d_qy * m.sin_r);
      g[1] += v * (d_qx * -m.sin_r + d_qy * -m.cos_r);
      g[2] += v * (d_qx * (-m.sin_r * ux + m.cos_r * uy) + d_qy * (-m.cos_r * ux - m.sin_r * uy));
    }
  }
  return g;
}

double rigid_alignment_loss(const ImageSlice& measured, const ImageSlice& moving,
                            const RigidParams& params, double gamma) {
  require_same_shape(measured, moving, "rigid_alignment_loss");
  const ImageSlice aligned = apply_rigid(moving, params);
  const double n = static_cast<double>(measured.size());
  const double data = (aligned.matrix() - measured.matrix()).squaredNorm() / (2.0 * n);
  const double reg = params.shift_fe * params.shift_fe + params.shift_pe * params.shift_pe +
                     params.rotation * params.rotation;
  return data + gamma * reg;
}

std::array<double, 3> rigid_gradient(const ImageSlice& measured, const ImageSlice& moving,
                                     const RigidParams& params, double gamma,
                                     const RigidFdSteps& steps) {
  require_same_shape(measured, moving, "rigid_gradient");
  const auto base = params.as_array();
  const std::array<double, 3> h{steps.shift, steps.shift, steps.rotation};
  std::array<double, 3> g{};
  for (std::size_t k = 0; k < 3; ++k) {
    auto plus = base;
    auto minus = base;
    plus[k] += h[k];
    minus[k] -= h[k];
    g[k] = (rigid_alignment_loss(measured, moving, RigidParams::from_array(plus), gamma) -
            rigid_alignment_loss(measured, moving, RigidParams::from_array(minus), gamma)) /
           (2.0 * h[k]);
  }
  return g;
}

}  // namespace epicorr
