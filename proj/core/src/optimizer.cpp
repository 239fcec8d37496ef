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

#include "epicorr/optimizer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <string>
#include <thread>

#include <Eigen/Cholesky>

#include "epicorr/kmatrix.hpp"

namespace epicorr {
namespace {

// Relative pivot below which the normal matrix is treated as singular.
constexpr double kSingularPivot = 1e-14;
// Field values are boxed to +-(tau + kFieldBoxMargin).
constexpr double kFieldBoxMargin = 8.0;

ReversedPePair downsample_pair(const ReversedPePair& pair, int factor) {
  return {downsample(pair.blip_up, factor), downsample(pair.blip_down, factor)};
}

Matrix pad_replicate(const Matrix& m, Index rows, Index cols) {
  Matrix out(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      out(i, j) = m(std::min(i, m.rows() - 1), std::min(j, m.cols() - 1));
    }
  }
  return out;
}

double mean_intensity(const ReversedPePair& pair) {
  return 0.5 * (pair.blip_up.matrix().mean() + pair.blip_down.matrix().mean());
}

// S^T S g: a symmetric positive semi-definite smoothing of the gradient, so
// the smoothed direction stays a descent direction.
Matrix smooth_gradient(const Matrix& g, double sigma) {
  if (sigma <= 0.0) return g;
  return gaussian_blur_adjoint(gaussian_blur(g, sigma), sigma);
}

bool converged_between(double previous, double current, double tolerance) {
  const double scale = std::max(std::abs(previous), 1e-300);
  return std::abs(previous - current) / scale < tolerance;
}

// Per-level optimization state and the three guarded update kinds.
class LevelSolver {
 public:
  LevelSolver(const OptimizerConfig& config, const ReversedPePair& pair, int factor,
              bool finest, DisplacementField field, RigidParams rigid, bool rigid_active)
      : config_(config),
        pair_(pair),
        factor_(factor),
        objective_(pair, settings_for(config, factor, finest)),
        field_(std::move(field)),
        rigid_(rigid),
        rigid_active_(rigid_active),
        epsilon_(config.image_epsilon * std::pow(mean_intensity(pair), 2)),
        step_(config.initial_step),
        rigid_step_(config.rigid_initial_step) {
    moment_.beta = config.momentum;
    // Rotation is measured in pixels of arc at the full-resolution half-diagonal.
    radius_ = 0.5 * std::hypot(static_cast<double>(pair.rows() * factor),
                               static_cast<double>(pair.cols() * factor));
    image_ = solve_image(field_, pair_, level_rigid(), epsilon_, false);
    loss_ = objective_.evaluate(image_, field_, rigid_).total;
  }

  double loss() const { return loss_; }
  const ImageSlice& image() const { return image_; }
  const DisplacementField& field() const { return field_; }
  const RigidParams& rigid() const { return rigid_; }

  void image_update() {
    const ImageSlice candidate = solve_image(field_, pair_, level_rigid(), epsilon_, false);
    double t = 1.0;
    for (int k = 0; k <= config_.max_backtracks; ++k, t *= 0.5) {
      const ImageSlice trial =
          k == 0 ? candidate : ImageSlice(image_.matrix() + t * (candidate.matrix() - image_.matrix()));
      const double value = objective_.evaluate(trial, field_, rigid_).total;
      if (value <= loss_) {
        image_ = trial;
        loss_ = value;
        return;
      }
    }
  }

  // Returns false when no step along the (reset) direction lowers the loss.
  bool field_update() {
    const LossGradients grads = objective_.gradients(image_, field_, rigid_);
    const DisplacementField g(smooth_gradient(grads.field.matrix(), config_.gradient_smoothing));
    if (!g.all_finite()) throw NumericalFailure("non-finite field gradient");
    if (g.matrix().cwiseAbs().maxCoeff() == 0.0) return false;

    for (int attempt = 0; attempt < 2; ++attempt) {
      const Matrix dir = momentum_direction(moment_, g);
      const double peak = dir.cwiseAbs().maxCoeff();
      if (peak > 0.0) {
        double step = step_;
        for (int k = 0; k <= config_.max_backtracks; ++k, step *= config_.step_shrink) {
          FieldStepState trial_state = moment_;
          DisplacementField trial = field_step(field_, g, trial_state, step / peak, level_tau());
          const double value = objective_.evaluate(image_, trial, rigid_).total;
          if (value <= loss_) {
            field_ = std::move(trial);
            moment_ = std::move(trial_state);
            loss_ = value;
            step_ = std::min(step * config_.step_growth, config_.max_step);
            return true;
          }
        }
      }
      // The momentum direction failed; restart from the plain gradient.
      moment_ = FieldStepState{Matrix(), 0, config_.momentum};
      step_ = config_.initial_step;
    }
    return false;
  }

  void rigid_update() {
    if (!rigid_active_) return;
    const LossGradients grads = objective_.gradients(image_, field_, rigid_);
    const std::array<double, 3> gq{grads.rigid[0], grads.rigid[1], grads.rigid[2] / radius_};
    const double norm = std::sqrt(gq[0] * gq[0] + gq[1] * gq[1] + gq[2] * gq[2]);
    if (!(norm > 0.0)) return;
    double step = rigid_step_;
    for (int k = 0; k <= config_.max_backtracks; ++k, step *= config_.step_shrink) {
      RigidParams trial{rigid_.shift_fe - step * gq[0] / norm, rigid_.shift_pe - step * gq[1] / norm,
                        rigid_.rotation - step * gq[2] / norm / radius_};
      const double value = objective_.evaluate(image_, field_, trial).total;
      if (value <= loss_) {
        rigid_ = trial;
        loss_ = value;
        rigid_step_ = std::min(step * config_.step_growth, 4.0 * config_.rigid_initial_step);
        return;
      }
    }
    rigid_step_ = step;
  }

 private:
  static ObjectiveSettings settings_for(const OptimizerConfig& config, int factor, bool finest) {
    ObjectiveSettings s;
    s.multires = finest ? config.multires : MultiresConfig{MultiresMode::None, {}, {}, {}};
    s.lambda = config.lambda;
    s.gamma = config.gamma;
    s.tau = config.tau / factor;
    s.rigid_grid_factor = factor;
    s.rigid_enabled = config.rigid_enabled;
    return s;
  }

  RigidParams level_rigid() const {
    return config_.rigid_enabled ? scaled_for_grid(rigid_, factor_) : RigidParams{};
  }
  double level_tau() const { return config_.tau / factor_; }

  const OptimizerConfig& config_;
  const ReversedPePair& pair_;
  int factor_;
  Objective objective_;
  ImageSlice image_;
  DisplacementField field_;
  RigidParams rigid_;
  bool rigid_active_;
  double epsilon_;
  double step_;
  double rigid_step_;
  double radius_ = 1.0;
  double loss_ = 0.0;
  FieldStepState moment_;
};

}  // namespace

void OptimizerConfig::validate() const {
  if (pyramid_factors.empty()) throw InvalidInput("optimizer: pyramid_factors must not be empty");
  for (std::size_t k = 0; k < pyramid_factors.size(); ++k) {
    const int f = pyramid_factors[k];
    if (f < 1 || (f & (f - 1)) != 0) {
      throw InvalidInput("optimizer: pyramid factors must be powers of two");
    }
    if (k > 0 && f >= pyramid_factors[k - 1]) {
      throw InvalidInput("optimizer: pyramid factors must be strictly decreasing");
    }
  }
  if (pyramid_factors.back() != 1) throw InvalidInput("optimizer: the last pyramid factor must be 1");
  if (iterations < 1) throw InvalidInput("optimizer: iterations must be >= 1");
  if (field_steps_per_solve < 1) throw InvalidInput("optimizer: field_steps_per_solve must be >= 1");
  if (!(initial_step > 0.0) || !(max_step >= initial_step)) {
    throw InvalidInput("optimizer: need 0 < initial_step <= max_step");
  }
  if (!(step_growth >= 1.0) || !(step_shrink > 0.0 && step_shrink < 1.0)) {
    throw InvalidInput("optimizer: need step_growth >= 1 and 0 < step_shrink < 1");
  }
  if (max_backtracks < 0) throw InvalidInput("optimizer: max_backtracks must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidInput("optimizer: momentum must be in [0, 1)");
  if (!(gradient_smoothing >= 0.0)) throw InvalidInput("optimizer: gradient_smoothing must be >= 0");
  if (!(image_epsilon >= 0.0)) throw InvalidInput("optimizer: image_epsilon must be >= 0");
  if (!(tolerance > 0.0)) throw InvalidInput("optimizer: tolerance must be > 0");
  if (!(rigid_initial_step > 0.0)) throw InvalidInput("optimizer: rigid_initial_step must be > 0");
  if (!(lambda >= 0.0) || !(gamma >= 0.0) || !(tau > 0.0)) {
    throw InvalidInput("optimizer: need lambda >= 0, gamma >= 0, tau > 0");
  }
  multires.validate();
}

ImageSlice solve_image(const DisplacementField& field, const ReversedPePair& pair,
                       const RigidParams& rigid, double epsilon, bool project_nonnegative) {
  require_pair_shape(pair, "solve_image");
  require_same_shape(field, pair.blip_up, "solve_image");
  if (!(epsilon >= 0.0)) throw InvalidInput("solve_image: epsilon must be >= 0");
  rigid.validate();
  const ImageSlice bd = rigid.is_identity() ? pair.blip_down : apply_rigid(pair.blip_down, inverse(rigid));

  const Index n = pair.cols();
  ImageSlice out(pair.rows(), n, 0.0);
  Eigen::MatrixXd normal(n, n);
  Eigen::VectorXd rhs(n);
  for (Index i = 0; i < pair.rows(); ++i) {
    const Matrix ku = build_k_row(field.row(i), PePolarity::BlipUp);
    const Matrix kd = build_k_row(field.row(i), PePolarity::BlipDown);
    normal.setZero();
    normal.diagonal().setConstant(epsilon);
    normal.selfadjointView<Eigen::Lower>().rankUpdate(ku.transpose());
    normal.selfadjointView<Eigen::Lower>().rankUpdate(kd.transpose());
    const Eigen::Map<const Eigen::VectorXd> fu(pair.blip_up.row(i).data(), n);
    const Eigen::Map<const Eigen::VectorXd> fd(bd.row(i).data(), n);
    rhs.noalias() = ku.transpose() * fu;
    rhs.noalias() += kd.transpose() * fd;

    const Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(normal);
    bool singular = llt.info() != Eigen::Success;
    if (!singular) {
      const auto d = llt.matrixLLT().diagonal().cwiseAbs();
      singular = !(d.minCoeff() > kSingularPivot * d.maxCoeff());
    }
    if (singular) {
      throw NumericalFailure("solve_image: normal matrix of row " + std::to_string(i) +
                             " is singular; use epsilon > 0");
    }
    const Eigen::VectorXd x = llt.solve(rhs);
    for (Index j = 0; j < n; ++j) out(i, j) = project_nonnegative ? std::max(x(j), 0.0) : x(j);
  }
  return out;
}

Matrix momentum_direction(const FieldStepState& state, const DisplacementField& gradient) {
  const int t = state.steps + 1;
  Matrix m = (1.0 - state.beta) * gradient.matrix();
  if (state.moment.size() == gradient.size()) m += state.beta * state.moment;
  return m / (1.0 - std::pow(state.beta, t));
}

DisplacementField field_step(const DisplacementField& field, const DisplacementField& gradient,
                             FieldStepState& state, double step, double tau) {
  require_same_shape(field, gradient, "field_step");
  if (!gradient.all_finite()) throw NumericalFailure("field_step: non-finite gradient");
  const Matrix dir = momentum_direction(state, gradient);
  Matrix moment = (1.0 - state.beta) * gradient.matrix();
  if (state.moment.size() == gradient.size()) moment += state.beta * state.moment;
  state.moment = std::move(moment);
  state.steps += 1;
  const double box = tau + kFieldBoxMargin;
  return DisplacementField((field.matrix() - step * dir).cwiseMax(-box).cwiseMin(box));
}

CorrectionResult estimate_slice(const ReversedPePair& pair, const OptimizerConfig& config) {
  config.validate();
  require_pair_shape(pair, "estimate_slice");
  if (!pair.blip_up.all_finite() || !pair.blip_down.all_finite()) {
    throw InvalidInput("estimate_slice: non-finite input intensities");
  }

  // Replicate-pad to a multiple of the coarsest factor; cropped on output.
  const int coarsest = config.pyramid_factors.front();
  const Index rows = pair.rows();
  const Index cols = pair.cols();
  const Index padded_rows = (rows + coarsest - 1) / coarsest * coarsest;
  const Index padded_cols = (cols + coarsest - 1) / coarsest * coarsest;
  const ReversedPePair padded{ImageSlice(pad_replicate(pair.blip_up.matrix(), padded_rows, padded_cols)),
                              ImageSlice(pad_replicate(pair.blip_down.matrix(), padded_rows, padded_cols))};
  if (padded_rows / coarsest < 3 || padded_cols / coarsest < 3) {
    throw InvalidInput("estimate_slice: slice too small for the coarsest pyramid level");
  }

  CorrectionResult result;
  DisplacementField field;
  RigidParams rigid;
  ImageSlice image;
  int previous_factor = 0;
  bool all_converged = true;

  for (std::size_t lv = 0; lv < config.pyramid_factors.size(); ++lv) {
    const int factor = config.pyramid_factors[lv];
    const bool finest = lv + 1 == config.pyramid_factors.size();
    const ReversedPePair level_pair = downsample_pair(padded, factor);
    if (lv == 0) {
      field = DisplacementField(level_pair.rows(), level_pair.cols(), 0.0);
    } else {
      const int up = previous_factor / factor;
      field = DisplacementField(upsample_bilinear(field.matrix(), up) * static_cast<double>(up));
    }
    const bool rigid_active = config.rigid_enabled && (lv == 0 || !config.freeze_rigid_after_coarsest);

    LevelSolver solver(config, level_pair, factor, finest, std::move(field), rigid, rigid_active);
    LevelTrace trace;
    trace.factor = factor;
    trace.loss.push_back(solver.loss());

    int steps = 0;
    bool stalled = false;
    while (steps < config.iterations) {
      const double before = solver.loss();
      if (steps > 0) solver.image_update();
      for (int k = 0; k < config.field_steps_per_solve && steps < config.iterations; ++k, ++steps) {
        if (!solver.field_update()) {
          stalled = true;
          break;
        }
      }
      solver.rigid_update();
      if (!std::isfinite(solver.loss())) {
        result.trace.push_back(trace);
        throw OptimizationFailure("estimate_slice: objective diverged at pyramid factor " +
                                      std::to_string(factor),
                                  result.trace);
      }
      trace.loss.push_back(solver.loss());
      if (stalled || converged_between(before, solver.loss(), config.tolerance)) {
        trace.converged = true;
        break;
      }
    }
    all_converged = all_converged && trace.converged;
    result.trace.push_back(std::move(trace));

    field = solver.field();
    rigid = solver.rigid();
    image = solver.image();
    previous_factor = factor;
  }

  result.image = ImageSlice(image.matrix().topLeftCorner(rows, cols).cwiseMax(0.0));
  result.field = DisplacementField(field.matrix().topLeftCorner(rows, cols));
  result.rigid = rigid;
  result.converged = all_converged;
  return result;
}

std::vector<CorrectionResult> estimate_volume(std::span<const ReversedPePair> pairs,
                                              const OptimizerConfig& config, unsigned threads) {
  config.validate();
  for (std::size_t s = 1; s < pairs.size(); ++s) {
    if (pairs[s].rows() != pairs[0].rows() || pairs[s].cols() != pairs[0].cols()) {
      throw InvalidInput("estimate_volume: slice " + std::to_string(s) + " has a different shape");
    }
  }
  std::vector<CorrectionResult> results(pairs.size());
  std::vector<std::exception_ptr> errors(pairs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t s = next.fetch_add(1); s < pairs.size(); s = next.fetch_add(1)) {
      try {
        results[s] = estimate_slice(pairs[s], config);
      } catch (...) {
        errors[s] = std::current_exception();
      }
    }
  };
  const unsigned count = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(pairs.size())));
  if (count == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < count; ++t) pool.emplace_back(worker);
  }

  for (std::size_t s = 0; s < pairs.size(); ++s) {
    if (!errors[s]) continue;
    const std::string where = "slice " + std::to_string(s) + ": ";
    try {
      std::rethrow_exception(errors[s]);
    } catch (const OptimizationFailure& e) {
      throw OptimizationFailure(where + e.what(), e.trace());
    } catch (const NumericalFailure& e) {
      throw NumericalFailure(where + e.what());
    } catch (const InvalidInput& e) {
      throw InvalidInput(where + e.what());
    }
  }
  return results;
}

}  // namespace epicorr
