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

#include "epicorr/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "epicorr/kmatrix.hpp"

namespace epicorr {
namespace {

constexpr double kPi = std::numbers::pi;

// Independent streams for anatomy, field and noise so changing one part of
// a PhantomSpec does not reshuffle the others.
enum class Stream : std::uint64_t { Anatomy = 1, Field = 2, Noise = 3 };

std::mt19937_64 make_rng(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

struct Ellipse {
  double row;
  double col;
  double a;  // semi-axis along rows
  double b;  // semi-axis along cols
  double angle;
  double intensity;
  double wave_row;
  double wave_col;
  double phase;
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

void PhantomSpec::validate() const {
  if (n_fe < 3 || n_pe < 3) throw InvalidInput("phantom: grid must be at least 3x3");
  if (ellipse_count < 0 || bump_count < 0) throw InvalidInput("phantom: counts must be >= 0");
  if (!(intensity_min >= 0.0) || !(intensity_max <= 1.0) || intensity_min > intensity_max) {
    throw InvalidInput("phantom: intensity range must lie in [0, 1]");
  }
  if (!(edge_width > 0.0)) throw InvalidInput("phantom: edge_width must be positive");
  if (!(texture_amplitude >= 0.0 && texture_amplitude < 1.0)) {
    throw InvalidInput("phantom: texture_amplitude must be in [0, 1)");
  }
  if (!(amplitude_bound >= 0.0 && amplitude_bound <= 32.0)) {
    throw InvalidInput("phantom: amplitude_bound must be in [0, 32] pixels");
  }
  if (!(width_min > 0.0) || width_max < width_min) {
    throw InvalidInput("phantom: need 0 < width_min <= width_max");
  }
  for (const auto& b : bumps) {
    if (!(b.width > 0.0)) throw InvalidInput("phantom: bump width must be positive");
  }
  if (!(noise_sd >= 0.0)) throw InvalidInput("phantom: noise_sd must be >= 0");
  rigid.validate();
}

ImageSlice make_phantom(const PhantomSpec& spec) {
  spec.validate();
  ImageSlice image(spec.n_fe, spec.n_pe, 0.0);
  if (spec.ellipse_count == 0) return image;

  auto rng = make_rng(spec.seed, Stream::Anatomy);
  const double cr = 0.5 * static_cast<double>(spec.n_fe - 1);
  const double cc = 0.5 * static_cast<double>(spec.n_pe - 1);

  std::vector<Ellipse> ellipses;
  // Outer "head": covers most of the FOV but leaves a background margin. It
  // is the brightest broad structure so that tissue and background separate.
  const double head_a = 0.40 * static_cast<double>(spec.n_fe) * uniform(rng, 0.92, 1.0);
  const double head_b = 0.36 * static_cast<double>(spec.n_pe) * uniform(rng, 0.92, 1.0);
  const double head_lo = std::max(spec.intensity_min, 0.6 * spec.intensity_max);
  ellipses.push_back({cr + uniform(rng, -2.0, 2.0), cc + uniform(rng, -2.0, 2.0), head_a, head_b,
                      uniform(rng, -0.2, 0.2), uniform(rng, head_lo, spec.intensity_max),
                      uniform(rng, 20.0, 40.0), uniform(rng, 20.0, 40.0), uniform(rng, 0.0, 2 * kPi)});
  const double head_intensity = ellipses[0].intensity;
  for (int e = 1; e < spec.ellipse_count; ++e) {
    const double rad = std::sqrt(uniform(rng, 0.0, 1.0)) * 0.55;
    const double th = uniform(rng, 0.0, 2 * kPi);
    const double a = head_a * uniform(rng, 0.10, 0.35);
    const double b = head_b * uniform(rng, 0.10, 0.35);
    // Inner structures are brighter or darker than their surroundings; dark
    // ones never remove more than a fifth of the head intensity.
    const bool dark = uniform(rng, 0.0, 1.0) < 0.35;
    const double level = uniform(rng, spec.intensity_min, spec.intensity_max);
    const double intensity =
        dark ? -head_intensity * (0.1 + 0.1 * (level - spec.intensity_min) /
                                               std::max(spec.intensity_max - spec.intensity_min, 1e-12))
             : level;
    ellipses.push_back({ellipses[0].row + rad * head_a * std::cos(th),
                        ellipses[0].col + rad * head_b * std::sin(th), a, b,
                        uniform(rng, 0.0, kPi), intensity,
                        uniform(rng, 10.0, 30.0), uniform(rng, 10.0, 30.0),
                        uniform(rng, 0.0, 2 * kPi)});
  }

  // Normalized radius of (i, j) in ellipse `el`.
  auto radius = [](const Ellipse& el, Index i, Index j) {
    const double ca = std::cos(el.angle);
    const double sa = std::sin(el.angle);
    const double dr = static_cast<double>(i) - el.row;
    const double dc = static_cast<double>(j) - el.col;
    const double u = (ca * dr + sa * dc) / el.a;
    const double v = (-sa * dr + ca * dc) / el.b;
    return std::sqrt(u * u + v * v);
  };

  // The head has a sharp boundary (exactly zero outside, like Shepp-Logan);
  // inner structures have soft edges and are confined to the head.
  for (std::size_t e = 0; e < ellipses.size(); ++e) {
    const Ellipse& el = ellipses[e];
    const double steep = std::min(el.a, el.b) / spec.edge_width;
    for (Index i = 0; i < spec.n_fe; ++i) {
      for (Index j = 0; j < spec.n_pe; ++j) {
        if (radius(ellipses[0], i, j) >= 1.0) continue;
        const double r = radius(el, i, j);
        double inside = 1.0;
        if (e > 0) {
          const double edge_arg = (r - 1.0) * steep;
          if (edge_arg > 30.0) continue;
          inside = 1.0 / (1.0 + std::exp(edge_arg));
        }
        const double texture =
            1.0 + spec.texture_amplitude *
                      std::sin(2 * kPi * static_cast<double>(i) / el.wave_row + el.phase) *
                      std::cos(2 * kPi * static_cast<double>(j) / el.wave_col);
        image(i, j) += el.intensity * inside * texture * (1.0 - 0.15 * std::min(r, 1.0) * r);
      }
    }
  }
  image.matrix() = image.matrix().cwiseMax(0.0).cwiseMin(1.0);
  return image;
}

DisplacementField make_field(const PhantomSpec& spec) {
  spec.validate();
  DisplacementField field(spec.n_fe, spec.n_pe, 0.0);

  std::vector<GaussianBump> bumps = spec.bumps;
  const bool random_bumps = bumps.empty();
  if (random_bumps) {
    auto rng = make_rng(spec.seed, Stream::Field);
    const double cr = 0.5 * static_cast<double>(spec.n_fe - 1);
    const double cc = 0.5 * static_cast<double>(spec.n_pe - 1);
    for (int k = 0; k < spec.bump_count; ++k) {
      const double sign = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
      bumps.push_back({cr + uniform(rng, -0.3, 0.3) * static_cast<double>(spec.n_fe),
                       cc + uniform(rng, -0.25, 0.25) * static_cast<double>(spec.n_pe),
                       sign * uniform(rng, 0.5, 1.0), uniform(rng, spec.width_min, spec.width_max)});
    }
  }
  if (bumps.empty()) return field;

  for (const auto& b : bumps) {
    const double inv = 1.0 / (2.0 * b.width * b.width);
    for (Index i = 0; i < spec.n_fe; ++i) {
      for (Index j = 0; j < spec.n_pe; ++j) {
        const double dr = static_cast<double>(i) - b.row;
        const double dc = static_cast<double>(j) - b.col;
        field(i, j) += b.amplitude * std::exp(-(dr * dr + dc * dc) * inv);
      }
    }
  }

  const double peak = field.matrix().cwiseAbs().maxCoeff();
  if (peak > 0.0 && (random_bumps || peak > spec.amplitude_bound)) {
    field.matrix() *= spec.amplitude_bound / peak;
  }
  return field;
}

SimulatedPair simulate_pair(const ImageSlice& image, const DisplacementField& field,
                            const RigidParams& rigid, double noise_sd, std::uint64_t seed) {
  require_same_shape(image, field, "simulate_pair");
  if (!(noise_sd >= 0.0)) throw InvalidInput("simulate_pair: noise_sd must be >= 0");
  rigid.validate();

  SimulatedPair out;
  out.pair.blip_up = forward_distort(image, field, PePolarity::BlipUp);
  out.pair.blip_down = apply_rigid(forward_distort(image, field, PePolarity::BlipDown), rigid);
  if (noise_sd > 0.0) {
    auto rng = make_rng(seed, Stream::Noise);
    std::normal_distribution<double> noise(0.0, noise_sd);
    for (auto* slice : {&out.pair.blip_up, &out.pair.blip_down}) {
      for (Index i = 0; i < slice->rows(); ++i) {
        for (Index j = 0; j < slice->cols(); ++j) (*slice)(i, j) += noise(rng);
      }
    }
  }
  out.image = image;
  out.field = field;
  out.rigid = rigid;
  out.noise_sd = noise_sd;
  out.seed = seed;
  return out;
}

SimulatedPair simulate_phantom(const PhantomSpec& spec) {
  return simulate_pair(make_phantom(spec), make_field(spec), spec.rigid, spec.noise_sd, spec.seed);
}

}  // namespace epicorr
