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

#include "epicorr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <vector>

namespace epicorr {
namespace {

void require_mask_shape(const Matrix& m, const Mask* mask, const char* what) {
  if (!mask) return;
  require_same_shape(m, *mask, what);
  if (mask->count() == 0) throw InvalidInput(std::string(what) + ": mask is empty");
}

template <class Fn>
void for_region(const Matrix& m, const Mask* mask, Fn&& fn) {
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (!mask || (*mask)(i, j)) fn(i, j);
    }
  }
}

std::vector<double> window_taps(const SsimParams& p) {
  const int r = p.window / 2;
  std::vector<double> w(static_cast<std::size_t>(p.window));
  double sum = 0.0;
  for (int t = -r; t <= r; ++t) {
    w[static_cast<std::size_t>(t + r)] = std::exp(-0.5 * t * t / (p.sigma * p.sigma));
    sum += w[static_cast<std::size_t>(t + r)];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Separable weighted sum over the window centred at every valid position.
Matrix window_filter(const Matrix& x, const std::vector<double>& w) {
  const auto r = static_cast<Index>(w.size() / 2);
  Matrix tmp = Matrix::Zero(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = r; j + r < x.cols(); ++j) {
      double acc = 0.0;
      for (Index t = -r; t <= r; ++t) acc += w[static_cast<std::size_t>(t + r)] * x(i, j + t);
      tmp(i, j) = acc;
    }
  }
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Index i = r; i + r < x.rows(); ++i) {
    for (Index j = r; j + r < x.cols(); ++j) {
      double acc = 0.0;
      for (Index t = -r; t <= r; ++t) acc += w[static_cast<std::size_t>(t + r)] * tmp(i + t, j);
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix median_filter(const Matrix& x, int radius) {
  if (radius <= 0) return x;
  Matrix out(x.rows(), x.cols());
  std::vector<double> buf;
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      buf.clear();
      for (Index di = -radius; di <= radius; ++di) {
        for (Index dj = -radius; dj <= radius; ++dj) {
          buf.push_back(x(std::clamp<Index>(i + di, 0, x.rows() - 1),
                          std::clamp<Index>(j + dj, 0, x.cols() - 1)));
        }
      }
      auto mid = buf.begin() + static_cast<std::ptrdiff_t>(buf.size() / 2);
      std::nth_element(buf.begin(), mid, buf.end());
      out(i, j) = *mid;
    }
  }
  return out;
}

void remove_small_components(Mask& mask, Index min_size) {
  if (min_size <= 1) return;
  Mask seen(mask.rows(), mask.cols(), false);
  std::vector<std::pair<Index, Index>> component;
  std::deque<std::pair<Index, Index>> queue;
  for (Index i = 0; i < mask.rows(); ++i) {
    for (Index j = 0; j < mask.cols(); ++j) {
      if (!mask(i, j) || seen(i, j)) continue;
      component.clear();
      queue.emplace_back(i, j);
      seen.set(i, j, true);
      while (!queue.empty()) {
        const auto [a, b] = queue.front();
        queue.pop_front();
        component.emplace_back(a, b);
        for (Index da = -1; da <= 1; ++da) {
          for (Index db = -1; db <= 1; ++db) {
            const Index na = a + da;
            const Index nb = b + db;
            if (na < 0 || nb < 0 || na >= mask.rows() || nb >= mask.cols()) continue;
            if (!mask(na, nb) || seen(na, nb)) continue;
            seen.set(na, nb, true);
            queue.emplace_back(na, nb);
          }
        }
      }
      if (static_cast<Index>(component.size()) < min_size) {
        for (const auto& [a, b] : component) mask.set(a, b, false);
      }
    }
  }
}

}  // namespace

double psnr(const Matrix& reference, const Matrix& test, const Mask* mask) {
  require_same_shape(reference, test, "psnr");
  require_mask_shape(reference, mask, "psnr");
  double peak = -std::numeric_limits<double>::infinity();
  double sse = 0.0;
  Index n = 0;
  for_region(reference, mask, [&](Index i, Index j) {
    peak = std::max(peak, reference(i, j));
    const double d = reference(i, j) - test(i, j);
    sse += d * d;
    ++n;
  });
  if (!(peak > 0.0)) throw InvalidInput("psnr: reference peak is not positive");
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(peak / std::sqrt(sse / static_cast<double>(n)));
}

Matrix ssim_map(const Matrix& reference, const Matrix& test, const SsimParams& params) {
  require_same_shape(reference, test, "ssim");
  if (params.window < 1 || params.window % 2 == 0) {
    throw InvalidInput("ssim: window must be a positive odd size");
  }
  if (reference.rows() < params.window || reference.cols() < params.window) {
    throw InvalidInput("ssim: image is smaller than the " + std::to_string(params.window) +
                       "x" + std::to_string(params.window) + " window");
  }
  double range = reference.maxCoeff() - reference.minCoeff();
  if (!(range > 0.0)) range = 1.0;
  const double c1 = std::pow(params.k1 * range, 2);
  const double c2 = std::pow(params.k2 * range, 2);

  const auto w = window_taps(params);
  const Matrix mu_x = window_filter(reference, w);
  const Matrix mu_y = window_filter(test, w);
  const Matrix xx = window_filter(reference.cwiseProduct(reference), w);
  const Matrix yy = window_filter(test.cwiseProduct(test), w);
  const Matrix xy = window_filter(reference.cwiseProduct(test), w);

  const Index r = params.window / 2;
  Matrix out = Matrix::Constant(reference.rows(), reference.cols(),
                                std::numeric_limits<double>::quiet_NaN());
  for (Index i = r; i + r < reference.rows(); ++i) {
    for (Index j = r; j + r < reference.cols(); ++j) {
      const double mx = mu_x(i, j);
      const double my = mu_y(i, j);
      const double vx = xx(i, j) - mx * mx;
      const double vy = yy(i, j) - my * my;
      const double cxy = xy(i, j) - mx * my;
      out(i, j) = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  }
  return out;
}

double ssim(const Matrix& reference, const Matrix& test, const Mask* mask,
            const SsimParams& params) {
  require_mask_shape(reference, mask, "ssim");
  const Matrix map = ssim_map(reference, test, params);
  double sum = 0.0;
  Index n = 0;
  for_region(map, mask, [&](Index i, Index j) {
    if (std::isnan(map(i, j))) return;
    sum += map(i, j);
    ++n;
  });
  if (n == 0) throw InvalidInput("ssim: no masked pixel has a full window");
  return sum / static_cast<double>(n);
}

double otsu_threshold(const Matrix& values, int bins) {
  if (bins < 2) throw InvalidInput("otsu: need at least 2 bins");
  const double lo = values.minCoeff();
  const double hi = values.maxCoeff();
  if (!(hi > lo)) throw InvalidInput("otsu: image has a single intensity value");
  const double width = (hi - lo) / bins;

  std::vector<double> hist(static_cast<std::size_t>(bins), 0.0);
  for (Index k = 0; k < values.size(); ++k) {
    auto b = static_cast<int>((values.data()[k] - lo) / width);
    hist[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))] += 1.0;
  }
  const double total = static_cast<double>(values.size());
  double sum_all = 0.0;
  for (int b = 0; b < bins; ++b) sum_all += hist[static_cast<std::size_t>(b)] * (b + 0.5);

  double w0 = 0.0;
  double sum0 = 0.0;
  double best = -1.0;
  int best_bin = 0;
  for (int t = 0; t < bins - 1; ++t) {
    w0 += hist[static_cast<std::size_t>(t)];
    sum0 += hist[static_cast<std::size_t>(t)] * (t + 0.5);
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0;
    const double m1 = (sum_all - sum0) / w1;
    const double between = (w0 / total) * (w1 / total) * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_bin = t;
    }
  }
  return lo + (best_bin + 1) * width;
}

Mask mask_median_otsu(const Matrix& reference, const OtsuMaskParams& params) {
  if (!(reference.maxCoeff() > reference.minCoeff())) {
    throw InvalidInput("mask_median_otsu: reference has a single intensity value");
  }
  const Matrix filtered = median_filter(reference, params.median_radius);
  const double threshold = otsu_threshold(filtered, params.bins);
  Mask mask(reference.rows(), reference.cols(), false);
  for (Index i = 0; i < reference.rows(); ++i) {
    for (Index j = 0; j < reference.cols(); ++j) mask.set(i, j, filtered(i, j) > threshold);
  }
  remove_small_components(mask, params.min_component);
  return mask;
}

double masked_rmse(const Matrix& a, const Matrix& b, const Mask* mask) {
  require_same_shape(a, b, "masked_rmse");
  require_mask_shape(a, mask, "masked_rmse");
  double sse = 0.0;
  Index n = 0;
  for_region(a, mask, [&](Index i, Index j) {
    const double d = a(i, j) - b(i, j);
    sse += d * d;
    ++n;
  });
  return std::sqrt(sse / static_cast<double>(n));
}

double masked_mean_abs(const Matrix& a, const Mask* mask) {
  require_mask_shape(a, mask, "masked_mean_abs");
  double sum = 0.0;
  Index n = 0;
  for_region(a, mask, [&](Index i, Index j) {
    sum += std::abs(a(i, j));
    ++n;
  });
  return sum / static_cast<double>(n);
}

}  // namespace epicorr
