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

#include "epicorr/losses.hpp"

#include <cmath>
#include <string>

namespace epicorr {
namespace {

void require_be_grid(const Matrix& f) {
  if (f.rows() < 3 || f.cols() < 3) {
    throw InvalidInput("bending_energy: field must be at least 3x3, got " +
                       std::to_string(f.rows()) + "x" + std::to_string(f.cols()));
  }
}

double level_mse(const ImageSlice& measured_bu, const ImageSlice& measured_bd,
                 const ImageSlice& dist_bu, const ImageSlice& dist_bd) {
  const double n = static_cast<double>(measured_bu.size());
  return ((dist_bu.matrix() - measured_bu.matrix()).squaredNorm() +
          (dist_bd.matrix() - measured_bd.matrix()).squaredNorm()) /
         (2.0 * n);
}

}  // namespace

LossWeights LossWeights::fdnet_defaults() {
  LossWeights w;
  w.omega = {0.4, 0.3, 0.2, 0.1};
  w.lambda.assign(4, 1e-5);
  w.tau.assign(4, 32.0);
  w.gamma = 0.01;
  return w;
}

LossWeights LossWeights::for_levels(std::span<const LevelSpec> specs, double lambda, double gamma,
                                    double tau) {
  LossWeights w;
  w.gamma = gamma;
  for (const auto& s : specs) {
    w.omega.push_back(s.weight);
    w.lambda.push_back(lambda);
    w.tau.push_back(s.kind == LevelKind::Downsampled ? tau / s.factor : tau);
  }
  return w;
}

void LossWeights::validate(std::size_t level_count) const {
  if (level_count == 0) throw InvalidInput("loss: at least one level is required");
  if (omega.size() != level_count || lambda.size() != level_count || tau.size() != level_count) {
    throw InvalidInput("loss: weight vectors must have one entry per level (" +
                       std::to_string(level_count) + ")");
  }
  double total = 0.0;
  for (std::size_t m = 0; m < level_count; ++m) {
    if (!(omega[m] >= 0.0)) throw InvalidInput("loss: omega must be non-negative");
    if (!(lambda[m] >= 0.0)) throw InvalidInput("loss: lambda must be non-negative");
    if (!(tau[m] > 0.0)) throw InvalidInput("loss: tau must be positive");
    total += omega[m];
  }
  if (!(total > 0.0)) throw InvalidInput("loss: omega must not sum to zero");
  if (!(gamma >= 0.0)) throw InvalidInput("loss: gamma must be non-negative");
}

double LossBreakdown::recombine(const LossWeights& w) const {
  double total_value = 0.0;
  for (std::size_t m = 0; m < mse.size(); ++m) {
    total_value += w.omega[m] * (mse[m] + w.lambda[m] * (bending[m] + w.valley_scale * valley[m]));
  }
  return total_value + w.gamma * rigid;
}

double mse_loss(const ReversedPePair& measured, const ReversedPePair& distorted) {
  require_pair_shape(measured, "mse_loss");
  require_pair_shape(distorted, "mse_loss");
  require_same_shape(measured.blip_up, distorted.blip_up, "mse_loss");
  return level_mse(measured.blip_up, measured.blip_down, distorted.blip_up, distorted.blip_down);
}

double bending_energy(const Matrix& f) {
  require_be_grid(f);
  const Index rows = f.rows();
  const Index cols = f.cols();
  double sum = 0.0;
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      const bool row_in = i > 0 && i + 1 < rows;
      const bool col_in = j > 0 && j + 1 < cols;
      if (row_in) {
        const double dxx = f(i + 1, j) - 2.0 * f(i, j) + f(i - 1, j);
        sum += dxx * dxx;
      }
      if (col_in) {
        const double dyy = f(i, j + 1) - 2.0 * f(i, j) + f(i, j - 1);
        sum += dyy * dyy;
      }
      if (row_in && col_in) {
        const double dxy =
            0.25 * (f(i + 1, j + 1) - f(i + 1, j - 1) - f(i - 1, j + 1) + f(i - 1, j - 1));
        sum += 2.0 * dxy * dxy;  // xy and yx
      }
    }
  }
  return sum;
}

double bending_energy(const DisplacementField& field) { return bending_energy(field.matrix()); }

Matrix bending_energy_gradient(const Matrix& f) {
  require_be_grid(f);
  const Index rows = f.rows();
  const Index cols = f.cols();
  Matrix g = Matrix::Zero(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      const bool row_in = i > 0 && i + 1 < rows;
      const bool col_in = j > 0 && j + 1 < cols;
      if (row_in) {
        const double t = 2.0 * (f(i + 1, j) - 2.0 * f(i, j) + f(i - 1, j));
        g(i + 1, j) += t;
        g(i, j) -= 2.0 * t;
        g(i - 1, j) += t;
      }
      if (col_in) {
        const double t = 2.0 * (f(i, j + 1) - 2.0 * f(i, j) + f(i, j - 1));
        g(i, j + 1) += t;
        g(i, j) -= 2.0 * t;
        g(i, j - 1) += t;
      }
      if (row_in && col_in) {
        const double dxy =
            0.25 * (f(i + 1, j + 1) - f(i + 1, j - 1) - f(i - 1, j + 1) + f(i - 1, j - 1));
        const double t = 4.0 * dxy * 0.25;
        g(i + 1, j + 1) += t;
        g(i + 1, j - 1) -= t;
        g(i - 1, j + 1) -= t;
        g(i - 1, j - 1) += t;
      }
    }
  }
  return g;
}

double valley_loss(const Matrix& field, double tau) {
  if (!(tau > 0.0)) throw InvalidInput("valley_loss: tau must be positive");
  return (field.array().abs() - tau).max(0.0).sum();
}

double valley_loss(const DisplacementField& field, double tau) {
  return valley_loss(field.matrix(), tau);
}

Matrix valley_loss_gradient(const Matrix& field, double tau) {
  if (!(tau > 0.0)) throw InvalidInput("valley_loss: tau must be positive");
  Matrix g = Matrix::Zero(field.rows(), field.cols());
  for (Index i = 0; i < field.rows(); ++i) {
    for (Index j = 0; j < field.cols(); ++j) {
      const double v = field(i, j);
      if (std::abs(v) > tau) g(i, j) = v > 0.0 ? 1.0 : -1.0;
    }
  }
  return g;
}

double rigid_loss(const RigidParams& p) {
  return p.shift_fe * p.shift_fe + p.shift_pe * p.shift_pe + p.rotation * p.rotation;
}

LossBreakdown total_loss(std::span<const LevelTerms> levels, const RigidParams& rigid,
                         const LossWeights& weights) {
  weights.validate(levels.size());
  LossBreakdown out;
  for (std::size_t m = 0; m < levels.size(); ++m) {
    const auto& lv = levels[m];
    if (!lv.measured || !lv.distorted || !lv.field) {
      throw InvalidInput("total_loss: level " + std::to_string(m) + " is incomplete");
    }
    out.mse.push_back(mse_loss(*lv.measured, *lv.distorted));
    out.bending.push_back(bending_energy(*lv.field));
    out.valley.push_back(valley_loss(*lv.field, weights.tau[m]));
  }
  out.rigid = rigid_loss(rigid);
  out.total = out.recombine(weights);
  return out;
}

Objective::Objective(ReversedPePair measured, ObjectiveSettings settings)
    : measured_(std::move(measured)), settings_(std::move(settings)) {
  require_pair_shape(measured_, "Objective");
  specs_ = level_specs(settings_.multires);
  weights_ = LossWeights::for_levels(specs_, settings_.lambda, settings_.gamma, settings_.tau);
  weights_.validate(specs_.size());
  for (const auto& spec : specs_) {
    measured_levels_.push_back(
        {ImageSlice(level_image_view(measured_.blip_up.matrix(), spec)),
         ImageSlice(level_image_view(measured_.blip_down.matrix(), spec))});
  }
}

LossBreakdown Objective::evaluate(const ImageSlice& image, const DisplacementField& field,
                                  const RigidParams& rigid) const {
  require_same_shape(image, measured_.blip_up, "Objective::evaluate");
  require_same_shape(field, measured_.blip_up, "Objective::evaluate");
  const RigidParams effective = settings_.rigid_enabled ? rigid : RigidParams{};
  LossBreakdown out;
  for (std::size_t m = 0; m < specs_.size(); ++m) {
    const auto& spec = specs_[m];
    const ImageSlice img(level_image_view(image.matrix(), spec));
    const DisplacementField fld(level_field_view(field.matrix(), spec));
    const RigidParams motion = scaled_for_grid(effective, settings_.rigid_grid_factor * spec.factor);
    const ImageSlice bu = forward_distort(img, fld, PePolarity::BlipUp, settings_.kernel);
    const ImageSlice bd =
        apply_rigid(forward_distort(img, fld, PePolarity::BlipDown, settings_.kernel), motion);
    const auto& meas = measured_levels_[m];
    out.mse.push_back(level_mse(meas.blip_up, meas.blip_down, bu, bd));
    out.bending.push_back(bending_energy(fld));
    out.valley.push_back(valley_loss(fld, weights_.tau[m]));
  }
  out.rigid = rigid_loss(effective);
  out.total = out.recombine(weights_);
  return out;
}

LossGradients Objective::gradients(const ImageSlice& image, const DisplacementField& field,
                                   const RigidParams& rigid) const {
  require_same_shape(image, measured_.blip_up, "Objective::gradients");
  require_same_shape(field, measured_.blip_up, "Objective::gradients");
  const RigidParams effective = settings_.rigid_enabled ? rigid : RigidParams{};
  const Index rows = image.rows();
  const Index cols = image.cols();

  LossGradients out;
  out.image = ImageSlice(rows, cols, 0.0);
  out.field = DisplacementField(rows, cols, 0.0);

  for (std::size_t m = 0; m < specs_.size(); ++m) {
    const auto& spec = specs_[m];
    const double omega = weights_.omega[m];
    const ImageSlice img(level_image_view(image.matrix(), spec));
    const DisplacementField fld(level_field_view(field.matrix(), spec));
    const double grid = settings_.rigid_grid_factor * spec.factor;
    const RigidParams motion = scaled_for_grid(effective, grid);
    const auto& meas = measured_levels_[m];

    const ImageSlice bu = forward_distort(img, fld, PePolarity::BlipUp, settings_.kernel);
    const ImageSlice bd_raw = forward_distort(img, fld, PePolarity::BlipDown, settings_.kernel);
    const ImageSlice bd = apply_rigid(bd_raw, motion);

    const double n = static_cast<double>(img.size());
    out.loss.mse.push_back(level_mse(meas.blip_up, meas.blip_down, bu, bd));
    out.loss.bending.push_back(bending_energy(fld));
    out.loss.valley.push_back(valley_loss(fld, weights_.tau[m]));

    // d/d(distorted) of omega * MSE
    const ImageSlice g_bu((bu.matrix() - meas.blip_up.matrix()) * (omega / n));
    const ImageSlice g_bd((bd.matrix() - meas.blip_down.matrix()) * (omega / n));
    const ImageSlice g_bd_raw = apply_rigid_adjoint(g_bd, motion);

    Matrix g_img = unwarp(g_bu, fld, PePolarity::BlipUp, false, settings_.kernel).matrix() +
                   unwarp(g_bd_raw, fld, PePolarity::BlipDown, false, settings_.kernel).matrix();
    Matrix g_fld =
        forward_distort_field_vjp(img, fld, PePolarity::BlipUp, g_bu, settings_.kernel).matrix() +
        forward_distort_field_vjp(img, fld, PePolarity::BlipDown, g_bd_raw, settings_.kernel)
            .matrix();
    const double reg = omega * weights_.lambda[m];
    if (reg != 0.0) {
      g_fld += reg * (bending_energy_gradient(fld.matrix()) +
                      weights_.valley_scale * valley_loss_gradient(fld.matrix(), weights_.tau[m]));
    }

    out.image.matrix() += level_image_adjoint(g_img, spec, rows, cols);
    out.field.matrix() += level_field_adjoint(g_fld, spec, rows, cols);

    if (settings_.rigid_enabled) {
      const auto gr = apply_rigid_param_vjp(bd_raw, motion, g_bd);
      out.rigid[0] += gr[0] / grid;
      out.rigid[1] += gr[1] / grid;
      out.rigid[2] += gr[2];
    }
  }

  out.loss.rigid = rigid_loss(effective);
  out.loss.total = out.loss.recombine(weights_);
  if (settings_.rigid_enabled) {
    out.rigid[0] += 2.0 * weights_.gamma * effective.shift_fe;
    out.rigid[1] += 2.0 * weights_.gamma * effective.shift_pe;
    out.rigid[2] += 2.0 * weights_.gamma * effective.rotation;
  }
  return out;
}

LossGradients loss_gradients(const ImageSlice& image, const DisplacementField& field,
                             const ReversedPePair& pair, const RigidParams& rigid,
                             const ObjectiveSettings& settings) {
  return Objective(pair, settings).gradients(image, field, rigid);
}

}  // namespace epicorr
